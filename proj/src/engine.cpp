#include "spiral/engine.hpp"

#include <algorithm>
#include <deque>

namespace spiral {

void SpiralConfig::validate() const {
    if (total_layers < 1) throw config_error("SpiralConfig: total_layers must be >= 1");
    if (pitch < 1 || pitch > total_layers)
        throw config_error("SpiralConfig: pitch must satisfy 1 <= pitch <= total_layers");
    if (mode == EngineMode::spiral && total_layers % pitch != 0)
        throw config_error("SpiralConfig: total_layers must be divisible by pitch in spiral mode");
}

int shift_index(int block_index, int pitch) {
    if (block_index < 1) throw config_error("shift_index: block index must be >= 1");
    if (pitch < 1) throw config_error("shift_index: pitch must be >= 1");
    return (block_index - 1) % pitch;
}

std::vector<int> computed_layers(int shift, int total_layers, int pitch) {
    if (shift < 0 || shift >= pitch)
        throw config_error("computed_layers: shift must satisfy 0 <= shift < pitch");
    if (total_layers % pitch != 0)
        throw config_error("computed_layers: total_layers must be divisible by pitch");
    std::vector<int> layers;
    for (int i = 1 + shift; i <= total_layers; i += pitch) layers.push_back(i);
    return layers;
}

int exit_layer(int shift, int total_layers, int pitch) {
    if (shift < 0 || shift >= pitch)
        throw config_error("exit_layer: shift must satisfy 0 <= shift < pitch");
    return total_layers - pitch + shift + 1;
}

namespace {

// Positional encoding is applied to the real frames only; pad rows stay zero.
FeatureMatrix encode_window_input(const FeatureMatrix& window, const BlockPlan& plan,
                                  const EncoderWeights& weights) {
    const int real_rows = window.rows - plan.pad_left;
    FeatureMatrix real(real_rows, window.cols);
    std::copy(window.row(plan.pad_left), window.row(plan.pad_left) + static_cast<size_t>(real_rows) * window.cols,
              real.data.begin());
    real = add_positional_encoding(real, plan.window_start, weights.pe_base);
    FeatureMatrix out = window;
    std::copy(real.data.begin(), real.data.end(), out.row(plan.pad_left));
    return out;
}

// Adds cached rows onto the window rows representing the same absolute frame.
// Frames with no cached value contribute nothing (the zero-padding rule).
void add_cached_aligned(FeatureMatrix& input, const LayerCache::Entry& entry,
                        const BlockPlan& plan) {
    if (entry.values.cols != input.cols)
        throw config_error("run_block: cached feature dimension mismatch");
    for (int r = 0; r < entry.values.rows; ++r) {
        const long frame = entry.start_frame + r;
        const long row = plan.pad_left + (frame - plan.window_start);
        if (row < 0 || row >= input.rows) continue;
        const float* src = entry.values.row(r);
        float* dst = input.row(static_cast<int>(row));
        for (int c = 0; c < input.cols; ++c) dst[c] += src[c];
    }
}

LayerCache::Entry slice_overlap(const FeatureMatrix& full, const BlockPlan& plan,
                                long overlap_start) {
    LayerCache::Entry entry;
    entry.start_frame = overlap_start;
    const int rows = static_cast<int>(plan.window_end - overlap_start);
    entry.values = FeatureMatrix(rows, full.cols);
    const int row0 = plan.pad_left + static_cast<int>(overlap_start - plan.window_start);
    for (int r = 0; r < rows; ++r) {
        const float* src = full.row(row0 + r);
        std::copy(src, src + full.cols, entry.values.row(r));
    }
    return entry;
}

FeatureMatrix extract_chunk(const FeatureMatrix& full, const BlockPlan& plan) {
    const int rows = static_cast<int>(plan.chunk_len());
    const int row0 = plan.pad_left + static_cast<int>(plan.chunk_start - plan.window_start);
    FeatureMatrix chunk(rows, full.cols);
    for (int r = 0; r < rows; ++r) {
        const float* src = full.row(row0 + r);
        std::copy(src, src + full.cols, chunk.row(r));
    }
    return chunk;
}

}  // namespace

BlockResult run_block(const FeatureMatrix& window, const BlockPlan& plan, const LayerCache& cache,
                      const SpiralConfig& scfg, const EncoderWeights& weights, int forced_shift) {
    scfg.validate();
    if (weights.total_layers() != scfg.total_layers)
        throw config_error("run_block: weight file layer count does not match config");
    if (window.cols != weights.d) throw config_error("run_block: window cols != d");
    const long expected_rows = plan.pad_left + (plan.window_end - plan.window_start);
    if (window.rows != expected_rows) throw config_error("run_block: window shape does not match plan");

    const int b = plan.block_index;
    if (b == 1) {
        if (!cache.empty()) throw state_error("run_block: block 1 expects an empty cache");
    } else if (cache.provenance_block != b - 1) {
        throw state_error("run_block: cache provenance is block " +
                          std::to_string(cache.provenance_block) + ", expected " +
                          std::to_string(b - 1));
    }

    const FeatureMatrix input = encode_window_input(window, plan, weights);
    const int total = scfg.total_layers;

    // Overlap with the next block's window: its left context begins n_left
    // frames before the next chunk, which starts where this chunk ends.
    const long n_left = plan.chunk_start - plan.window_start + plan.pad_left;
    const long overlap_start = std::max(0L, plan.chunk_end - n_left);

    BlockResult result;
    result.output.block_index = b;
    result.cache.provenance_block = b;

    if (scfg.mode == EngineMode::baseline) {
        FeatureMatrix z = input;
        for (int i = 1; i <= total; ++i) z = layer_forward(weights.layers[i - 1], z, i);
        result.output.shift = 0;
        result.output.exit_layer = total;
        result.output.layer_evals = total;
        result.output.chunk = extract_chunk(z, plan);
        return result;
    }

    const int pitch = scfg.pitch;
    const int shift = forced_shift >= 0 ? forced_shift : shift_index(b, pitch);
    if (shift >= pitch) throw config_error("run_block: forced shift out of range");
    const std::vector<int> schedule = computed_layers(shift, total, pitch);

    std::map<int, FeatureMatrix> z;  // layer index -> output, 0 = encoded input
    z.emplace(0, input);
    for (int i : schedule) {
        FeatureMatrix layer_in = (i <= pitch) ? input : z.at(i - pitch);
        if (scfg.cache_combination && b > 1) {
            const int cached_layer = i - 1;
            if (cached_layer >= 1 || (cached_layer == 0 && scfg.layer0_cache)) {
                auto it = cache.layers.find(cached_layer);
                if (it != cache.layers.end()) add_cached_aligned(layer_in, it->second, plan);
            }
        }
        z.emplace(i, layer_forward(weights.layers[i - 1], layer_in, i));
    }

    result.output.shift = shift;
    result.output.exit_layer = exit_layer(shift, total, pitch);
    result.output.layer_evals = static_cast<int>(schedule.size());
    result.output.chunk = extract_chunk(z.at(result.output.exit_layer), plan);

    for (int i : schedule) result.cache.layers.emplace(i, slice_overlap(z.at(i), plan, overlap_start));
    if (scfg.layer0_cache) result.cache.layers.emplace(0, slice_overlap(input, plan, overlap_start));
    return result;
}

UtteranceResult run_utterance(const FeatureMatrix& features, const BlockConfig& bcfg,
                              const SpiralConfig& scfg, const EncoderWeights& weights,
                              bool capture_shifts) {
    scfg.validate();
    auto ready = ingest_all(features, bcfg);

    UtteranceResult result;
    result.encoded = FeatureMatrix(features.rows, weights.d);
    std::vector<LayerCache> cache_before;  // state entering each block, for reruns
    LayerCache cache;

    for (const auto& blk : ready) {
        if (capture_shifts) cache_before.push_back(cache);
        BlockResult res = run_block(blk.window, blk.plan, cache, scfg, weights);
        for (int r = 0; r < res.output.chunk.rows; ++r) {
            const float* src = res.output.chunk.row(r);
            std::copy(src, src + weights.d,
                      result.encoded.row(static_cast<int>(blk.plan.chunk_start) + r));
        }
        cache = std::move(res.cache);
        result.blocks.push_back(std::move(res.output));
    }

    if (capture_shifts && scfg.mode == EngineMode::spiral) {
        // One rerun of every block per shift value, against the genuine
        // cache states, to materialize all exit depths (training-only cost).
        for (int s = 0; s < scfg.pitch; ++s) {
            FeatureMatrix h(features.rows, weights.d);
            for (size_t k = 0; k < ready.size(); ++k) {
                BlockResult res =
                    run_block(ready[k].window, ready[k].plan, cache_before[k], scfg, weights, s);
                for (int r = 0; r < res.output.chunk.rows; ++r) {
                    const float* src = res.output.chunk.row(r);
                    std::copy(src, src + weights.d,
                              h.row(static_cast<int>(ready[k].plan.chunk_start) + r));
                }
            }
            result.per_shift.push_back(std::move(h));
        }
    }
    return result;
}

std::set<std::pair<int, long>> trace_dependencies(int block_index, const BlockConfig& bcfg,
                                                  const SpiralConfig& scfg) {
    bcfg.validate();
    scfg.validate();
    if (block_index < 1) throw config_error("trace_dependencies: block index must be >= 1");

    const auto win_start = [&](int b) {
        return std::max(0L, static_cast<long>(b - 1) * bcfg.n_center - bcfg.n_left);
    };
    const auto win_end = [&](int b) {
        return static_cast<long>(b) * bcfg.n_center + bcfg.n_right;
    };

    using Node = std::pair<int, int>;  // (block, layer)
    std::map<Node, std::set<long>> frames;
    std::deque<Node> worklist;

    const auto reach = [&](Node node, long frame_begin, long frame_end) {
        auto [it, inserted] = frames.try_emplace(node);
        for (long f = frame_begin; f < frame_end; ++f) it->second.insert(f);
        if (inserted) worklist.push_back(node);
    };

    const bool spiral = scfg.mode == EngineMode::spiral;
    const int start_layer = spiral
                                ? exit_layer(shift_index(block_index, scfg.pitch),
                                             scfg.total_layers, scfg.pitch)
                                : scfg.total_layers;
    const long chunk_start = static_cast<long>(block_index - 1) * bcfg.n_center;
    reach({block_index, start_layer}, chunk_start, chunk_start + bcfg.n_center);

    while (!worklist.empty()) {
        const auto [b, layer] = worklist.front();
        worklist.pop_front();

        const int step = spiral ? scfg.pitch : 1;
        if (layer > step) reach({b, layer - step}, win_start(b), win_end(b));
        if (spiral && scfg.cache_combination && b >= 2 && layer >= 2) {
            // Cached (i-1)-th layer of the previous block, overlap frames only.
            reach({b - 1, layer - 1}, win_start(b), win_end(b - 1));
        }
    }

    std::set<std::pair<int, long>> cells;
    for (const auto& [node, fs] : frames)
        for (long f : fs) cells.emplace(node.second, f);
    return cells;
}

}  // namespace spiral
