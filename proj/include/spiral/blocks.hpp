#pragma once

#include <string>
#include <vector>

#include "spiral/matrix.hpp"

namespace spiral {

// Analysis window structure: n_left history frames, n_center emitted chunk
// frames, n_right look-ahead frames. frame_ms is the encoder frame duration.
struct BlockConfig {
    int n_left = 0;
    int n_center = 1;
    int n_right = 0;
    double frame_ms = 40.0;

    int window_len() const { return n_left + n_center + n_right; }
    void validate() const;
};

// One analysis block. Frame indices are absolute, 0-based, half-open.
// window_start is clamped at 0; pad_left counts the zero frames logically
// prepended so early windows keep the full window_len shape. The chunk is
// the sub-range emitted by this block; chunks of consecutive blocks tile
// the utterance without gap or overlap. ready_time_ms is the simulated
// wall clock at which the last window frame has arrived (frame k finishes
// arriving at (k+1)*frame_ms).
struct BlockPlan {
    int block_index = 0;  // 1-based
    long window_start = 0;
    long window_end = 0;
    long chunk_start = 0;
    long chunk_end = 0;
    int pad_left = 0;
    double ready_time_ms = 0.0;
    bool is_final = false;

    long chunk_len() const { return chunk_end - chunk_start; }
};

std::vector<BlockPlan> plan_blocks(long total_frames, const BlockConfig& cfg);

// Streaming block assembly: rows are pushed in frame order and each block is
// yielded exactly when its last window frame arrives; finish() flushes the
// trailing blocks whose look-ahead never fully arrives. Single consumer, one
// instance per stream.
class BlockStream {
   public:
    struct Ready {
        BlockPlan plan;
        FeatureMatrix window;  // pad_left zero rows followed by real frames
    };

    explicit BlockStream(const BlockConfig& cfg);

    std::vector<Ready> push(std::span<const float> frame);
    std::vector<Ready> finish();

    long frames_seen() const { return static_cast<long>(buffer_.size()); }

   private:
    Ready assemble(int block_index, long total_so_far, bool is_final) const;

    BlockConfig cfg_;
    int dim_ = -1;
    int next_block_ = 1;
    bool finished_ = false;
    std::vector<std::vector<float>> buffer_;  // all frames seen so far
};

// Convenience: run a whole feature matrix through a BlockStream.
std::vector<BlockStream::Ready> ingest_all(const FeatureMatrix& features, const BlockConfig& cfg);

// SPFT feature file: magic "SPFT", version u32, frames u32, dim u32, then
// f32 row-major data, little-endian.
void save_features(const FeatureMatrix& features, const std::string& path);
FeatureMatrix load_features(const std::string& path);

// CSV import, one frame per line, comma-separated values.
FeatureMatrix load_features_csv(const std::string& path);

}  // namespace spiral
