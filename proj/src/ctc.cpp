#include "spiral/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace spiral {

namespace {

// Large negative sentinel standing in for log(0); keeps the recursions free
// of inf-inf traps.
constexpr double kLogZero = -1e30;
constexpr double kLogZeroGuard = -1e29;

double logsumexp2(double a, double b) {
    const double m = std::max(a, b);
    if (m <= kLogZeroGuard) return kLogZero;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp3(double a, double b, double c) { return logsumexp2(logsumexp2(a, b), c); }

// Blank-interleaved target: [blank, y1, blank, y2, ..., blank].
std::vector<int> extend_target(std::span<const int> target, int blank) {
    std::vector<int> ext(2 * target.size() + 1, blank);
    for (size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
    return ext;
}

void check_target(std::span<const int> target, int vocab) {
    for (int id : target)
        if (id < 0 || id >= vocab)
            throw config_error("ctc: target token id out of range [0, vocab)");
}

// Forward variables in log domain; lp(t, k) indexes the log-prob matrix.
std::vector<std::vector<double>> ctc_forward(const FeatureMatrix& logprobs,
                                             const std::vector<int>& ext) {
    const int t_len = logprobs.rows;
    const int s_len = static_cast<int>(ext.size());
    const int blank = logprobs.cols - 1;
    std::vector<std::vector<double>> alpha(t_len, std::vector<double>(s_len, kLogZero));

    alpha[0][0] = logprobs.at(0, ext[0]);
    if (s_len > 1) alpha[0][1] = logprobs.at(0, ext[1]);
    for (int t = 1; t < t_len; ++t) {
        for (int s = 0; s < s_len; ++s) {
            double a = alpha[t - 1][s];
            if (s >= 1) a = logsumexp2(a, alpha[t - 1][s - 1]);
            if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
                a = logsumexp2(a, alpha[t - 1][s - 2]);
            alpha[t][s] = (a <= kLogZeroGuard) ? kLogZero : a + logprobs.at(t, ext[s]);
        }
    }
    return alpha;
}

std::vector<std::vector<double>> ctc_backward(const FeatureMatrix& logprobs,
                                              const std::vector<int>& ext) {
    const int t_len = logprobs.rows;
    const int s_len = static_cast<int>(ext.size());
    const int blank = logprobs.cols - 1;
    std::vector<std::vector<double>> beta(t_len, std::vector<double>(s_len, kLogZero));

    beta[t_len - 1][s_len - 1] = logprobs.at(t_len - 1, ext[s_len - 1]);
    if (s_len > 1) beta[t_len - 1][s_len - 2] = logprobs.at(t_len - 1, ext[s_len - 2]);
    for (int t = t_len - 2; t >= 0; --t) {
        for (int s = 0; s < s_len; ++s) {
            double b = beta[t + 1][s];
            if (s + 1 < s_len) b = logsumexp2(b, beta[t + 1][s + 1]);
            if (s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s])
                b = logsumexp2(b, beta[t + 1][s + 2]);
            beta[t][s] = (b <= kLogZeroGuard) ? kLogZero : b + logprobs.at(t, ext[s]);
        }
    }
    return beta;
}

double total_log_prob(const std::vector<std::vector<double>>& alpha) {
    const auto& last = alpha.back();
    const int s_len = static_cast<int>(last.size());
    double lp = last[s_len - 1];
    if (s_len > 1) lp = logsumexp2(lp, last[s_len - 2]);
    return lp;
}

FeatureMatrix log_softmax_rows(const FeatureMatrix& logits) {
    FeatureMatrix out(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) {
        const float* in = logits.row(r);
        double mx = in[0];
        for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, static_cast<double>(in[c]));
        double sum = 0.0;
        for (int c = 0; c < logits.cols; ++c) sum += std::exp(in[c] - mx);
        const double lse = mx + std::log(sum);
        for (int c = 0; c < logits.cols; ++c)
            out.at(r, c) = static_cast<float>(in[c] - lse);
    }
    return out;
}

}  // namespace

std::vector<TokenEmission> greedy_decode(const FeatureMatrix& logprobs) {
    const int blank = logprobs.cols - 1;
    std::vector<TokenEmission> out;
    int prev = -1;
    for (int t = 0; t < logprobs.rows; ++t) {
        const float* row = logprobs.row(t);
        int best = 0;
        for (int c = 1; c < logprobs.cols; ++c)
            if (row[c] > row[best]) best = c;
        if (best != prev && best != blank) out.push_back({best, t, -1});
        prev = best;
    }
    return out;
}

void annotate_blocks(std::vector<TokenEmission>& emissions, std::span<const BlockPlan> plans) {
    for (auto& em : emissions) {
        em.block_index = -1;
        for (const auto& plan : plans) {
            if (em.frame_index >= plan.chunk_start && em.frame_index < plan.chunk_end) {
                em.block_index = plan.block_index;
                break;
            }
        }
    }
}

double ctc_loss(const FeatureMatrix& logprobs, std::span<const int> target) {
    if (logprobs.rows < 1 || logprobs.cols < 2)
        throw config_error("ctc_loss: need at least one frame and two classes");
    check_target(target, logprobs.cols - 1);

    const auto ext = extend_target(target, logprobs.cols - 1);
    const auto alpha = ctc_forward(logprobs, ext);
    const double lp = total_log_prob(alpha);
    if (lp <= kLogZeroGuard) return std::numeric_limits<double>::infinity();
    return -lp;
}

CtcGrad ctc_loss_grad(const FeatureMatrix& logits, std::span<const int> target) {
    if (logits.rows < 1 || logits.cols < 2)
        throw config_error("ctc_loss_grad: need at least one frame and two classes");
    check_target(target, logits.cols - 1);

    const FeatureMatrix logprobs = log_softmax_rows(logits);
    const auto ext = extend_target(target, logits.cols - 1);
    const auto alpha = ctc_forward(logprobs, ext);
    const auto beta = ctc_backward(logprobs, ext);
    const double lp = total_log_prob(alpha);
    if (lp <= kLogZeroGuard)
        throw config_error("ctc_loss_grad: target is unalignable for this frame count");

    CtcGrad result;
    result.loss = -lp;
    result.grad = FeatureMatrix(logits.rows, logits.cols);
    const int s_len = static_cast<int>(ext.size());
    for (int t = 0; t < logits.rows; ++t) {
        // Posterior mass per class at frame t: sum over states with that
        // label of alpha*beta, correcting for the emission counted twice.
        std::vector<double> occ(static_cast<size_t>(logits.cols), kLogZero);
        for (int s = 0; s < s_len; ++s) {
            if (alpha[t][s] <= kLogZeroGuard || beta[t][s] <= kLogZeroGuard) continue;
            const double v = alpha[t][s] + beta[t][s] - logprobs.at(t, ext[s]);
            occ[ext[s]] = logsumexp2(occ[ext[s]], v);
        }
        for (int k = 0; k < logits.cols; ++k) {
            const double softmax = std::exp(logprobs.at(t, k));
            const double post = occ[k] <= kLogZeroGuard ? 0.0 : std::exp(occ[k] - lp);
            result.grad.at(t, k) = static_cast<float>(softmax - post);
        }
    }
    return result;
}

CombinedLoss combined_loss(std::span<const FeatureMatrix> per_shift, const FeatureMatrix& full,
                           std::span<const int> target, const EncoderWeights& weights) {
    CombinedLoss out;
    out.loss_full = ctc_loss(ctc_head_forward(weights, full), target);
    out.total = out.loss_full;
    for (const auto& seq : per_shift) {
        const double term = ctc_loss(ctc_head_forward(weights, seq), target);
        out.loss_per_shift.push_back(term);
        out.total += term;
    }
    return out;
}

std::vector<Transcript> load_transcripts(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open transcript file: " + path);
    std::vector<Transcript> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw io_error("bad JSON line in transcript file: " + path);
        Transcript t;
        t.utt_id = j.at("utt_id").get<std::string>();
        t.tokens = j.at("tokens").get<std::vector<int>>();
        if (j.contains("words")) {
            for (const auto& w : j.at("words")) {
                Transcript::Word word;
                word.text = w.at("text").get<std::string>();
                word.span_begin = w.at("token_span").at(0).get<int>();
                word.span_end = w.at("token_span").at(1).get<int>();
                t.words.push_back(std::move(word));
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

void save_transcripts(std::span<const Transcript> transcripts, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw io_error("cannot open for write: " + tmp);
        for (const auto& t : transcripts) {
            nlohmann::json words = nlohmann::json::array();
            for (const auto& w : t.words)
                words.push_back({{"text", w.text}, {"token_span", {w.span_begin, w.span_end}}});
            nlohmann::json j{{"utt_id", t.utt_id}, {"tokens", t.tokens}, {"words", words}};
            os << j.dump() << "\n";
        }
        if (!os) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace spiral
