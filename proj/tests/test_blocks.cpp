#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "spiral/blocks.hpp"
#include "test_util.hpp"

using namespace spiral;
using testutil::random_matrix;

namespace {

// Independent frame-assignment rule: frame f is emitted by the block whose
// chunk advanced past it, i.e. block floor(f / n_center) + 1.
std::vector<std::pair<long, long>> brute_force_chunks(long total, const BlockConfig& cfg) {
    std::vector<std::pair<long, long>> chunks;
    for (long f = 0; f < total; ++f) {
        const long b = f / cfg.n_center + 1;
        if (chunks.size() < static_cast<size_t>(b)) chunks.emplace_back(f, f + 1);
        else chunks.back().second = f + 1;
    }
    return chunks;
}

}  // namespace

TEST_SUITE("blocks") {

TEST_CASE("a single-chunk utterance yields one final block") {
    const BlockConfig cfg{5, 4, 3, 40.0};
    const auto plans = plan_blocks(4, cfg);
    REQUIRE(plans.size() == 1);
    CHECK(plans[0].is_final);
    CHECK(plans[0].chunk_start == 0);
    CHECK(plans[0].chunk_end == 4);
    CHECK(plans[0].window_end == 4);  // right context truncated at the stream end
    CHECK(plans[0].pad_left == 5);
}

TEST_CASE("first block pads the missing left context with zero frames") {
    const BlockConfig cfg{1, 2, 1, 40.0};
    const auto plans = plan_blocks(4, cfg);
    REQUIRE(plans.size() == 2);
    CHECK(plans[0].window_start == 0);
    CHECK(plans[0].pad_left == 1);
    CHECK(plans[0].chunk_start == 0);
    CHECK(plans[0].chunk_end == 2);
    CHECK(plans[0].window_end == 3);
    CHECK(plans[0].ready_time_ms == doctest::Approx(120.0));
    CHECK_FALSE(plans[0].is_final);
    CHECK(plans[1].chunk_start == 2);
    CHECK(plans[1].chunk_end == 4);
    CHECK(plans[1].is_final);
    CHECK(plans[1].ready_time_ms == doctest::Approx(160.0));
}

TEST_CASE("chunks partition the utterance for the Fig. 3 style geometry") {
    const BlockConfig cfg{16, 16, 8, 40.0};
    const auto plans = plan_blocks(100, cfg);
    const auto expected = brute_force_chunks(100, cfg);
    REQUIRE(plans.size() == expected.size());
    for (size_t i = 0; i < plans.size(); ++i) {
        CHECK(plans[i].chunk_start == expected[i].first);
        CHECK(plans[i].chunk_end == expected[i].second);
    }
}

TEST_CASE("chunks partition the utterance for randomized configs") {
    std::mt19937 rng(1234);
    for (int k = 0; k < 50; ++k) {
        BlockConfig cfg;
        cfg.n_left = static_cast<int>(rng() % 8);
        cfg.n_center = 1 + static_cast<int>(rng() % 6);
        cfg.n_right = static_cast<int>(rng() % 8);
        const long total = 1 + static_cast<long>(rng() % 200);
        const auto plans = plan_blocks(total, cfg);

        std::set<long> covered;
        long prev_end = 0;
        for (const auto& p : plans) {
            CHECK(p.chunk_start == prev_end);  // no gap, no overlap
            CHECK(p.chunk_start >= p.window_start);
            CHECK(p.chunk_end <= p.window_end);
            for (long f = p.chunk_start; f < p.chunk_end; ++f) CHECK(covered.insert(f).second);
            prev_end = p.chunk_end;
        }
        CHECK(prev_end == total);
        CHECK(static_cast<long>(covered.size()) == total);
        CHECK(plans.back().is_final);
    }
}

TEST_CASE("non-final blocks wait exactly the look-ahead after their chunk") {
    const BlockConfig cfg{30, 2, 8, 40.0};
    const auto plans = plan_blocks(400, cfg);
    for (const auto& p : plans) {
        if (p.is_final || p.window_end != p.chunk_end + cfg.n_right) continue;
        CHECK(p.ready_time_ms - static_cast<double>(p.chunk_end) * cfg.frame_ms ==
              doctest::Approx(cfg.n_right * cfg.frame_ms));
    }
}

TEST_CASE("every frame becomes emittable within n_center + n_right frames of arriving") {
    std::mt19937 rng(77);
    for (int k = 0; k < 20; ++k) {
        BlockConfig cfg;
        cfg.n_left = static_cast<int>(rng() % 6);
        cfg.n_center = 1 + static_cast<int>(rng() % 5);
        cfg.n_right = static_cast<int>(rng() % 5);
        const long total = 1 + static_cast<long>(rng() % 100);
        for (const auto& p : plan_blocks(total, cfg)) {
            for (long f = p.chunk_start; f < p.chunk_end; ++f) {
                const double arrival = static_cast<double>(f + 1) * cfg.frame_ms;
                CHECK(p.ready_time_ms - arrival <=
                      (cfg.n_center + cfg.n_right) * cfg.frame_ms + 1e-9);
                CHECK(p.ready_time_ms >= arrival);
            }
        }
    }
}

TEST_CASE("plan_blocks rejects an empty input") {
    CHECK_THROWS_AS(plan_blocks(0, BlockConfig{1, 2, 1, 40.0}), config_error);
    CHECK_THROWS_AS(plan_blocks(-3, BlockConfig{1, 2, 1, 40.0}), config_error);
}

TEST_CASE("streaming yields each block when its last window frame arrives") {
    const BlockConfig cfg{1, 2, 1, 40.0};
    BlockStream stream(cfg);
    const FeatureMatrix feats = random_matrix(5, 4, 3);

    std::vector<std::pair<long, BlockPlan>> yields;  // frames seen at yield time
    for (int r = 0; r < 4; ++r)
        for (auto& ready : stream.push(feats.row_span(r)))
            yields.emplace_back(r, ready.plan);
    for (auto& ready : stream.finish()) yields.emplace_back(-1, ready.plan);

    REQUIRE(yields.size() == 2);
    CHECK(yields[0].first == 2);  // 0-based arrival index of the last window frame
    CHECK(yields[0].second.ready_time_ms == doctest::Approx(120.0));
    CHECK(yields[1].first == -1);  // flushed at end of stream
    CHECK(yields[1].second.is_final);
    CHECK(yields[1].second.ready_time_ms == doctest::Approx(160.0));
}

TEST_CASE("streamed windows equal offline slices of the full matrix") {
    const BlockConfig cfg{30, 2, 8, 40.0};
    const FeatureMatrix feats = random_matrix(999, 1000, 8);
    const auto streamed = ingest_all(feats, cfg);
    const auto plans = plan_blocks(feats.rows, cfg);
    REQUIRE(streamed.size() == plans.size());

    for (size_t i = 0; i < plans.size(); ++i) {
        const auto& p = plans[i];
        CHECK(streamed[i].plan.window_start == p.window_start);
        CHECK(streamed[i].plan.window_end == p.window_end);
        CHECK(streamed[i].plan.ready_time_ms == p.ready_time_ms);
        FeatureMatrix slice(p.pad_left + static_cast<int>(p.window_end - p.window_start), 8);
        for (long f = p.window_start; f < p.window_end; ++f) {
            const float* src = feats.row(static_cast<int>(f));
            std::copy(src, src + 8, slice.row(p.pad_left + static_cast<int>(f - p.window_start)));
        }
        CHECK(streamed[i].window.data == slice.data);
    }
}

TEST_CASE("an empty stream terminates without yields") {
    BlockStream stream(BlockConfig{2, 3, 2, 40.0});
    CHECK(stream.finish().empty());
}

TEST_CASE("a feature-dimension change mid-stream is a stream error") {
    BlockStream stream(BlockConfig{1, 2, 1, 40.0});
    const std::vector<float> a(4, 0.0f), b(5, 0.0f);
    stream.push(a);
    CHECK_THROWS_AS(stream.push(b), stream_error);
}

TEST_CASE("SPFT files round-trip and reject foreign content") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "spiral_blocks_test";
    fs::create_directories(dir);
    const FeatureMatrix m = random_matrix(31, 17, 5);
    const std::string path = (dir / "roundtrip.spft").string();
    save_features(m, path);
    const FeatureMatrix back = load_features(path);
    CHECK(back.rows == m.rows);
    CHECK(back.cols == m.cols);
    CHECK(back.data == m.data);

    const std::string bad = (dir / "bad.spft").string();
    std::ofstream(bad) << "not a feature file";
    CHECK_THROWS_AS(load_features(bad), io_error);
    fs::remove_all(dir);
}

TEST_CASE("CSV import reads one frame per line") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "spiral_blocks_csv";
    fs::create_directories(dir);
    const std::string path = (dir / "frames.csv").string();
    std::ofstream(path) << "1.0,2.0,3.0\n4.0,5.0,6.5\n";
    const FeatureMatrix m = load_features_csv(path);
    CHECK(m.rows == 2);
    CHECK(m.cols == 3);
    CHECK(m.at(1, 2) == doctest::Approx(6.5));
    fs::remove_all(dir);
}

}  // TEST_SUITE
