#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "spiral/blocks.hpp"
#include "spiral/encoder.hpp"

namespace spiral {

enum class EngineMode { spiral, baseline };

// Layer-skipping schedule. In spiral mode a block with shift s evaluates
// only the layer set C_s = {1+s, 1+p+s, ...}; baseline mode evaluates every
// layer in every block.
struct SpiralConfig {
    int total_layers = 12;
    int pitch = 4;
    bool cache_combination = true;
    bool layer0_cache = false;
    EngineMode mode = EngineMode::spiral;

    void validate() const;
};

// s = (b-1) mod p for the 1-based block index b.
int shift_index(int block_index, int pitch);

// C_s = {1+s, 1+p+s, 1+2p+s, ...} intersected with [1, total_layers].
std::vector<int> computed_layers(int shift, int total_layers, int pitch);

// Early-exit layer I - p + s + 1 == max(C_s).
int exit_layer(int shift, int total_layers, int pitch);

// Intermediate outputs carried from the previous block, keyed by layer
// index (0 = raw positional-encoded input). Each entry stores rows for a
// contiguous absolute-frame range, restricted to the overlap with the next
// block's window.
struct LayerCache {
    struct Entry {
        long start_frame = 0;
        FeatureMatrix values;
    };

    int provenance_block = 0;  // block that produced the entries; 0 = empty
    std::map<int, Entry> layers;

    bool empty() const { return layers.empty() && provenance_block == 0; }
};

struct BlockOutput {
    int block_index = 0;
    int shift = 0;
    int exit_layer = 0;
    FeatureMatrix chunk;  // chunk_len x d rows of the exit layer
    int layer_evals = 0;
};

struct BlockResult {
    BlockOutput output;
    LayerCache cache;  // state to carry into the next block
};

// Runs one block. The window must match the plan (pad_left zero rows then
// the real frames); positional encoding is added here, indexed by absolute
// frame. Cached rows from the previous block are combined by elementwise
// addition into each computed layer's input, aligned by absolute frame with
// zeros where nothing was cached. forced_shift overrides the schedule's
// shift for loss-evaluation reruns; pass -1 for normal operation.
BlockResult run_block(const FeatureMatrix& window, const BlockPlan& plan, const LayerCache& cache,
                      const SpiralConfig& scfg, const EncoderWeights& weights,
                      int forced_shift = -1);

struct UtteranceResult {
    FeatureMatrix encoded;            // concatenated per-block chunks, total_frames rows
    std::vector<BlockOutput> blocks;  // genuine-schedule outputs, in block order
    std::vector<FeatureMatrix> per_shift;  // loss-evaluation mode: one matrix per shift
};

// Drives plan_blocks/run_block over the whole utterance, threading the
// cache. With capture_shifts=true (spiral mode), each block is additionally
// re-run once per shift value against the genuine cache state to produce
// the per-shift concatenations used by the training loss.
UtteranceResult run_utterance(const FeatureMatrix& features, const BlockConfig& bcfg,
                              const SpiralConfig& scfg, const EncoderWeights& weights,
                              bool capture_shifts = false);

// (layer, absolute frame) cells whose computed values can influence block
// b's emitted chunk, found by walking the two dependency edges of the
// schedule: layer i-p within the block and the cached layer i-1 from the
// previous block on overlap frames. Assumes the stream extends past block
// b's window (no end-of-utterance truncation).
std::set<std::pair<int, long>> trace_dependencies(int block_index, const BlockConfig& bcfg,
                                                  const SpiralConfig& scfg);

}  // namespace spiral
