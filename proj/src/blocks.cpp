#include "spiral/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace spiral {

void BlockConfig::validate() const {
    if (n_center < 1) throw config_error("BlockConfig: n_center must be >= 1");
    if (n_left < 0 || n_right < 0) throw config_error("BlockConfig: context sizes must be >= 0");
    if (!(frame_ms > 0.0)) throw config_error("BlockConfig: frame_ms must be > 0");
}

namespace {

BlockPlan make_plan(long b, long total_frames, const BlockConfig& cfg, bool is_final) {
    BlockPlan p;
    p.block_index = static_cast<int>(b);
    p.chunk_start = (b - 1) * cfg.n_center;
    p.chunk_end = std::min(b * cfg.n_center, total_frames);
    const long ideal_start = p.chunk_start - cfg.n_left;
    p.window_start = std::max(0L, ideal_start);
    p.pad_left = static_cast<int>(p.window_start - ideal_start);
    p.window_end = std::min(p.chunk_end + cfg.n_right, total_frames);
    p.ready_time_ms = static_cast<double>(p.window_end) * cfg.frame_ms;
    p.is_final = is_final;
    return p;
}

}  // namespace

std::vector<BlockPlan> plan_blocks(long total_frames, const BlockConfig& cfg) {
    cfg.validate();
    if (total_frames < 1) throw config_error("plan_blocks: empty input, total_frames must be >= 1");

    const long blocks = (total_frames + cfg.n_center - 1) / cfg.n_center;
    std::vector<BlockPlan> plans;
    plans.reserve(static_cast<size_t>(blocks));
    for (long b = 1; b <= blocks; ++b) plans.push_back(make_plan(b, total_frames, cfg, b == blocks));
    return plans;
}

BlockStream::BlockStream(const BlockConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

BlockStream::Ready BlockStream::assemble(int block_index, long total_so_far, bool is_final) const {
    const BlockPlan p = make_plan(block_index, total_so_far, cfg_, is_final);
    const long real_rows = p.window_end - p.window_start;
    FeatureMatrix window(p.pad_left + static_cast<int>(real_rows), dim_);
    for (long r = 0; r < real_rows; ++r) {
        const auto& src = buffer_[static_cast<size_t>(p.window_start + r)];
        std::copy(src.begin(), src.end(), window.row(p.pad_left + static_cast<int>(r)));
    }
    return {p, std::move(window)};
}

std::vector<BlockStream::Ready> BlockStream::push(std::span<const float> frame) {
    if (finished_) throw state_error("BlockStream: push after finish");
    if (dim_ < 0) {
        if (frame.empty()) throw stream_error("BlockStream: zero-dimensional frame");
        dim_ = static_cast<int>(frame.size());
    } else if (static_cast<int>(frame.size()) != dim_) {
        throw stream_error("BlockStream: feature dimension changed mid-stream");
    }
    buffer_.emplace_back(frame.begin(), frame.end());
    const long seen = frames_seen();

    std::vector<Ready> out;
    // Block b is complete once b*n_center + n_right frames have arrived.
    while (static_cast<long>(next_block_) * cfg_.n_center + cfg_.n_right <= seen) {
        out.push_back(assemble(next_block_, seen, false));
        ++next_block_;
    }
    return out;
}

std::vector<BlockStream::Ready> BlockStream::finish() {
    if (finished_) throw state_error("BlockStream: finish called twice");
    finished_ = true;
    const long total = frames_seen();
    std::vector<Ready> out;
    if (total == 0) return out;

    const long blocks = (total + cfg_.n_center - 1) / cfg_.n_center;
    for (; next_block_ <= blocks; ++next_block_)
        out.push_back(assemble(next_block_, total, next_block_ == blocks));
    return out;
}

std::vector<BlockStream::Ready> ingest_all(const FeatureMatrix& features, const BlockConfig& cfg) {
    BlockStream stream(cfg);
    std::vector<BlockStream::Ready> out;
    for (int r = 0; r < features.rows; ++r) {
        auto ready = stream.push(features.row_span(r));
        for (auto& blk : ready) out.push_back(std::move(blk));
    }
    auto tail = stream.finish();
    for (auto& blk : tail) out.push_back(std::move(blk));
    return out;
}

namespace {

constexpr char kFeatMagic[4] = {'S', 'P', 'F', 'T'};
constexpr uint32_t kFeatVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_features(const FeatureMatrix& features, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw io_error("cannot open for write: " + tmp);
        os.write(kFeatMagic, 4);
        put_u32(os, kFeatVersion);
        put_u32(os, static_cast<uint32_t>(features.rows));
        put_u32(os, static_cast<uint32_t>(features.cols));
        os.write(reinterpret_cast<const char*>(features.data.data()),
                 static_cast<std::streamsize>(features.data.size() * sizeof(float)));
        if (!os) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

FeatureMatrix load_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open feature file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kFeatMagic, 4) != 0)
        throw io_error("not a SPFT feature file: " + path);
    if (get_u32(is) != kFeatVersion) throw io_error("unsupported SPFT version");
    const int frames = static_cast<int>(get_u32(is));
    const int dim = static_cast<int>(get_u32(is));
    if (frames < 0 || dim < 1) throw io_error("SPFT header has invalid dimensions");
    FeatureMatrix m(frames, dim);
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!is) throw io_error("feature file truncated: " + path);
    if (!all_finite(m)) throw io_error("feature file contains non-finite values: " + path);
    return m;
}

FeatureMatrix load_features_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open feature file: " + path);
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<float> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw io_error("CSV rows have inconsistent dimension: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw io_error("CSV feature file is empty: " + path);
    FeatureMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), m.row(static_cast<int>(r)));
    return m;
}

}  // namespace spiral
