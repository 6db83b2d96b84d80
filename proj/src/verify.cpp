#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <vector>

#include "spiral/ctc.hpp"
#include "spiral/engine.hpp"
#include "spiral/harness.hpp"
#include "spiral/metrics.hpp"

namespace spiral {

namespace {

struct Checker {
    std::ostream& os;
    int failures = 0;

    void check(bool ok, const std::string& what) {
        os << (ok ? "[pass] " : "[FAIL] ") << what << "\n";
        if (!ok) ++failures;
    }
};

double rel_dev(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// --- coverage ------------------------------------------------------------

void verify_coverage(Checker& ck) {
    const std::vector<std::vector<int>> expected{{1, 5, 9}, {2, 6, 10}, {3, 7, 11}, {4, 8, 12}};
    bool fixed_ok = true;
    for (int s = 0; s < 4; ++s) fixed_ok &= computed_layers(s, 12, 4) == expected[s];
    ck.check(fixed_ok, "coverage: I=12 p=4 layer sets {1,5,9}/{2,6,10}/{3,7,11}/{4,8,12}");

    for (int total = 1; total <= 48; ++total) {
        bool ok = true;
        for (int pitch = 1; pitch <= total; ++pitch) {
            if (total % pitch != 0) continue;
            std::set<int> seen;
            for (int s = 0; s < pitch; ++s) {
                const auto layers = computed_layers(s, total, pitch);
                ok &= static_cast<int>(layers.size()) == total / pitch;
                ok &= exit_layer(s, total, pitch) == layers.back();
                for (int l : layers) ok &= seen.insert(l).second;  // disjointness
            }
            ok &= static_cast<int>(seen.size()) == total;  // union covers 1..I
            ok &= !seen.empty() && *seen.begin() == 1 && *seen.rbegin() == total;
        }
        ck.check(ok, "coverage: union/disjointness for I=" + std::to_string(total));
    }
}

// --- equivalence ----------------------------------------------------------

void verify_equivalence(Checker& ck) {
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const uint64_t seed = 9000 + k;
        std::mt19937 rng(static_cast<uint32_t>(seed));
        BlockConfig bcfg;
        bcfg.n_left = static_cast<int>(rng() % 5);
        bcfg.n_center = 1 + static_cast<int>(rng() % 3);
        bcfg.n_right = static_cast<int>(rng() % 4);

        FeatureMatrix feats(100, 16);
        std::normal_distribution<float> noise(0.0f, 1.0f);
        for (float& v : feats.data) v = noise(rng);
        const EncoderWeights weights = random_weights(seed, 4, 16, 32, 4, 5);

        SpiralConfig p1{4, 1, false, false, EngineMode::spiral};
        SpiralConfig base{4, 1, false, false, EngineMode::baseline};
        const auto a = run_utterance(feats, bcfg, p1, weights);
        const auto b = run_utterance(feats, bcfg, base, weights);

        double dev = 0.0;
        for (size_t i = 0; i < a.encoded.data.size(); ++i)
            dev = std::max(dev, rel_dev(a.encoded.data[i], b.encoded.data[i]));
        worst = std::max(worst, dev);
        ck.check(dev <= 1e-6, "equivalence: seed=" + std::to_string(seed) +
                                  " p=1 vs baseline, max rel dev=" + std::to_string(dev));
    }
    ck.os << "equivalence: worst deviation over 20 runs = " << worst << "\n";
}

// --- ctc -------------------------------------------------------------------

std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
    std::vector<int> out;
    int prev = -1;
    for (int s : path) {
        if (s != prev && s != blank) out.push_back(s);
        prev = s;
    }
    return out;
}

// Exhaustive sum over all (V+1)^T alignment paths.
double enumerate_ctc_loss(const FeatureMatrix& logprobs, const std::vector<int>& target) {
    const int t_len = logprobs.rows;
    const int classes = logprobs.cols;
    const int blank = classes - 1;
    double prob = 0.0;
    std::vector<int> path(static_cast<size_t>(t_len), 0);
    while (true) {
        if (collapse_path(path, blank) == target) {
            double lp = 0.0;
            for (int t = 0; t < t_len; ++t) lp += logprobs.at(t, path[t]);
            prob += std::exp(lp);
        }
        int pos = t_len - 1;
        while (pos >= 0 && path[pos] == classes - 1) path[pos--] = 0;
        if (pos < 0) break;
        ++path[pos];
    }
    return prob > 0.0 ? -std::log(prob) : std::numeric_limits<double>::infinity();
}

FeatureMatrix random_logprob_rows(std::mt19937& rng, int rows, int classes) {
    FeatureMatrix m(rows, classes);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    for (float& v : m.data) v = noise(rng);
    for (int r = 0; r < rows; ++r) {
        double mx = m.at(r, 0);
        for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(m.at(r, c)));
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) sum += std::exp(m.at(r, c) - mx);
        const double lse = mx + std::log(sum);
        for (int c = 0; c < classes; ++c) m.at(r, c) = static_cast<float>(m.at(r, c) - lse);
    }
    return m;
}

void verify_ctc(Checker& ck) {
    std::mt19937 rng(424242);
    for (int t_len = 1; t_len <= 5; ++t_len) {
        for (int vocab = 1; vocab <= 3; ++vocab) {
            bool ok = true;
            double worst = 0.0;
            for (int k = 0; k < 30; ++k) {
                const FeatureMatrix lp = random_logprob_rows(rng, t_len, vocab + 1);
                std::vector<int> target(rng() % 4);
                for (int& id : target) id = static_cast<int>(rng() % vocab);
                const double got = ctc_loss(lp, target);
                const double want = enumerate_ctc_loss(lp, target);
                if (std::isinf(want) || std::isinf(got)) {
                    ok &= std::isinf(want) && std::isinf(got);
                } else {
                    worst = std::max(worst, std::abs(got - want));
                    ok &= std::abs(got - want) <= 1e-9;
                }
            }
            ck.check(ok, "ctc: forward vs exhaustive paths, T=" + std::to_string(t_len) +
                             " V=" + std::to_string(vocab) + " (30 targets, seed 424242, max |diff|=" +
                             std::to_string(worst) + ")");
        }
    }

    bool grad_ok = true;
    double grad_worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        std::mt19937 grng(5000 + k);
        FeatureMatrix logits(6, 4);
        std::normal_distribution<float> noise(0.0f, 1.0f);
        for (float& v : logits.data) v = noise(grng);
        std::vector<int> target(1 + grng() % 3);
        for (int& id : target) id = static_cast<int>(grng() % 3);

        const CtcGrad analytic = ctc_loss_grad(logits, target);
        const double step = 1e-3;
        for (int r = 0; r < logits.rows && grad_ok; ++r) {
            for (int c = 0; c < logits.cols; ++c) {
                FeatureMatrix lo = logits, hi = logits;
                hi.at(r, c) += static_cast<float>(step);
                lo.at(r, c) -= static_cast<float>(step);
                const double fd = (ctc_loss_grad(hi, target).loss - ctc_loss_grad(lo, target).loss) /
                                  (2.0 * step);
                const double dev = rel_dev(analytic.grad.at(r, c), fd);
                grad_worst = std::max(grad_worst, dev);
                if (dev > 1e-4) grad_ok = false;
            }
        }
    }
    ck.check(grad_ok, "ctc: analytic gradient vs central differences, 20 instances (seeds 5000.., worst rel dev=" +
                          std::to_string(grad_worst) + ")");
}

// --- latency ----------------------------------------------------------------

void verify_latency(Checker& ck) {
    const auto median_swd = [&](const BlockConfig& bcfg, bool& bounds_ok) {
        std::vector<double> per_utt_mean;
        for (int u = 0; u < 50; ++u) {
            std::mt19937 rng(7000 + u);
            const long frames = 200;
            const auto plans = plan_blocks(frames, bcfg);
            std::vector<double> swds;
            int pos = 2 + static_cast<int>(rng() % 3);
            while (true) {
                const int len = 3 + static_cast<int>(rng() % 6);
                const long end_frame = pos + len - 1;
                if (end_frame >= frames - 30) break;
                double ready = 0.0;
                for (const auto& p : plans)
                    if (end_frame >= p.chunk_start && end_frame < p.chunk_end) ready = p.ready_time_ms;
                const double swd = ready - static_cast<double>(end_frame + 1) * bcfg.frame_ms;
                swds.push_back(swd);
                bounds_ok &= swd >= bcfg.n_right * bcfg.frame_ms - 1e-9 &&
                             swd <= (bcfg.n_center + bcfg.n_right) * bcfg.frame_ms + 1e-9;
                pos = static_cast<int>(end_frame) + 1 + static_cast<int>(rng() % 3);
            }
            double sum = 0.0;
            for (double v : swds) sum += v;
            per_utt_mean.push_back(sum / static_cast<double>(swds.size()));
        }
        return percentile(per_utt_mean, 50);
    };

    BlockConfig small{30, 2, 8, 40.0};
    BlockConfig large{16, 16, 8, 40.0};
    bool bounds_small = true, bounds_large = true;
    const double m_small = median_swd(small, bounds_small);
    const double m_large = median_swd(large, bounds_large);
    ck.check(bounds_small, "latency: every per-word SWD in [320, 400] ms for {30,2,8} (50 utts, seeds 7000..)");
    ck.check(bounds_large, "latency: every per-word SWD in [320, 960] ms for {16,16,8} (50 utts, seeds 7000..)");
    ck.check(m_small < m_large, "latency: median SWD {30,2,8} (" + std::to_string(m_small) +
                                    " ms) < {16,16,8} (" + std::to_string(m_large) + " ms)");
}

// --- trace -------------------------------------------------------------------

std::set<std::pair<int, long>> brute_force_trace(int block, const BlockConfig& bcfg,
                                                 const SpiralConfig& scfg) {
    const auto ws = [&](int b) {
        return std::max(0L, static_cast<long>(b - 1) * bcfg.n_center - bcfg.n_left);
    };
    const auto we = [&](int b) { return static_cast<long>(b) * bcfg.n_center + bcfg.n_right; };
    const bool spiral = scfg.mode == EngineMode::spiral;

    // Materialize every computed cell and its incoming edges, then BFS.
    using Cell = std::tuple<int, int, long>;  // block, layer, frame
    std::set<Cell> computed;
    for (int b = 1; b <= block; ++b) {
        const auto layers = spiral ? computed_layers(shift_index(b, scfg.pitch), scfg.total_layers,
                                                     scfg.pitch)
                                   : [&] {
                                         std::vector<int> all(scfg.total_layers);
                                         for (int i = 0; i < scfg.total_layers; ++i) all[i] = i + 1;
                                         return all;
                                     }();
        for (int layer : layers)
            for (long f = ws(b); f < we(b); ++f) computed.insert({b, layer, f});
    }

    const int step = spiral ? scfg.pitch : 1;
    std::set<Cell> reached;
    std::vector<Cell> stack;
    const int start_layer =
        spiral ? exit_layer(shift_index(block, scfg.pitch), scfg.total_layers, scfg.pitch)
               : scfg.total_layers;
    const long chunk_start = static_cast<long>(block - 1) * bcfg.n_center;
    for (long f = chunk_start; f < chunk_start + bcfg.n_center; ++f) {
        Cell c{block, start_layer, f};
        if (computed.count(c) && reached.insert(c).second) stack.push_back(c);
    }
    while (!stack.empty()) {
        const auto [b, layer, frame] = stack.back();
        stack.pop_back();
        (void)frame;  // attention mixes every row, so deps do not depend on it
        if (layer > step) {
            for (long f = ws(b); f < we(b); ++f) {
                Cell c{b, layer - step, f};
                if (computed.count(c) && reached.insert(c).second) stack.push_back(c);
            }
        }
        if (spiral && scfg.cache_combination && b >= 2 && layer >= 2) {
            for (long f = ws(b); f < we(b - 1); ++f) {
                Cell c{b - 1, layer - 1, f};
                if (computed.count(c) && reached.insert(c).second) stack.push_back(c);
            }
        }
    }

    std::set<std::pair<int, long>> cells;
    for (const auto& [b, layer, frame] : reached) cells.emplace(layer, frame);
    return cells;
}

void verify_trace(Checker& ck) {
    BlockConfig fig{3, 1, 2, 40.0};
    SpiralConfig scfg{12, 4, true, false, EngineMode::spiral};
    const auto traced = trace_dependencies(9, fig, scfg);
    ck.check(traced == brute_force_trace(9, fig, scfg),
             "trace: {3,1,2} I=12 p=4 b=9 equals brute-force reachability");
    bool named = true;
    for (long f = 5; f < 11; ++f) named &= traced.count({5, f}) > 0;   // same-block layer 5
    for (long f = 5; f < 10; ++f) named &= traced.count({8, f}) > 0;   // cached layer 8, block 8
    ck.check(named, "trace: b=9 depends on layer 5 (current block) and cached layer 8 (previous block)");

    for (int k = 0; k < 20; ++k) {
        std::mt19937 rng(3000 + k);
        BlockConfig bcfg;
        bcfg.n_left = static_cast<int>(rng() % 5);
        bcfg.n_center = 1 + static_cast<int>(rng() % 3);
        bcfg.n_right = static_cast<int>(rng() % 4);
        const int total_layers = std::vector<int>{2, 4, 6, 12}[rng() % 4];
        std::vector<int> pitches;
        for (int p = 1; p <= total_layers; ++p)
            if (total_layers % p == 0) pitches.push_back(p);
        SpiralConfig sc;
        sc.total_layers = total_layers;
        sc.pitch = pitches[rng() % pitches.size()];
        sc.cache_combination = rng() % 2 == 0;
        const int b = 1 + static_cast<int>(rng() % 8);
        const bool ok = trace_dependencies(b, bcfg, sc) == brute_force_trace(b, bcfg, sc);
        ck.check(ok, "trace: randomized config seed=" + std::to_string(3000 + k) +
                         " (I=" + std::to_string(total_layers) + " p=" + std::to_string(sc.pitch) +
                         " b=" + std::to_string(b) + (sc.cache_combination ? " cache" : " no-cache") +
                         ") equals brute force");
    }
}

}  // namespace

bool cmd_verify(const std::string& suite, std::ostream& os) {
    Checker ck{os};
    bool known = false;
    if (suite == "coverage" || suite == "all") {
        verify_coverage(ck);
        known = true;
    }
    if (suite == "equivalence" || suite == "all") {
        verify_equivalence(ck);
        known = true;
    }
    if (suite == "ctc" || suite == "all") {
        verify_ctc(ck);
        known = true;
    }
    if (suite == "latency" || suite == "all") {
        verify_latency(ck);
        known = true;
    }
    if (suite == "trace" || suite == "all") {
        verify_trace(ck);
        known = true;
    }
    if (!known)
        throw config_error("verify: unknown suite \"" + suite +
                           "\" (expected coverage|equivalence|ctc|latency|trace|all)");
    os << (ck.failures == 0 ? "verify: all checks passed\n"
                            : "verify: " + std::to_string(ck.failures) + " check(s) FAILED\n");
    return ck.failures == 0;
}

}  // namespace spiral
