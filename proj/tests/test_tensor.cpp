#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "spiral/encoder.hpp"
#include "test_util.hpp"

using namespace spiral;
using testutil::random_matrix;

namespace {

EncoderLayerWeights zero_layer(int d, int d_ff, int heads) {
    EncoderLayerWeights l;
    l.d = d;
    l.d_ff = d_ff;
    l.heads = heads;
    l.wq = FeatureMatrix(d, d);
    l.wk = FeatureMatrix(d, d);
    l.wv = FeatureMatrix(d, d);
    l.wo = FeatureMatrix(d, d);
    l.bq.assign(d, 0.0f);
    l.bk.assign(d, 0.0f);
    l.bv.assign(d, 0.0f);
    l.bo.assign(d, 0.0f);
    l.w1 = FeatureMatrix(d, d_ff);
    l.w2 = FeatureMatrix(d_ff, d);
    l.b1.assign(d_ff, 0.0f);
    l.b2.assign(d, 0.0f);
    l.norm1_scale.assign(d, 1.0f);
    l.norm1_offset.assign(d, 0.0f);
    l.norm2_scale.assign(d, 1.0f);
    l.norm2_offset.assign(d, 0.0f);
    return l;
}

// Reference layer evaluated with plain double loops, written directly from
// the layer definition: pre-norm attention with residual, then pre-norm FFN
// with residual, full-window softmax attention per head.
std::vector<std::vector<double>> reference_layer(const EncoderLayerWeights& w,
                                                 const FeatureMatrix& input) {
    const int t = input.rows, d = w.d, h = w.heads, dh = d / h;
    auto norm = [&](const std::vector<std::vector<double>>& x, const std::vector<float>& scale,
                    const std::vector<float>& offset) {
        std::vector<std::vector<double>> out(t, std::vector<double>(d));
        for (int r = 0; r < t; ++r) {
            double mean = std::accumulate(x[r].begin(), x[r].end(), 0.0) / d;
            double var = 0.0;
            for (double v : x[r]) var += (v - mean) * (v - mean);
            var /= d;
            for (int c = 0; c < d; ++c)
                out[r][c] = (x[r][c] - mean) / std::sqrt(var + 1e-5) * scale[c] + offset[c];
        }
        return out;
    };
    auto project = [&](const std::vector<std::vector<double>>& x, const FeatureMatrix& mat,
                       const std::vector<float>& bias) {
        std::vector<std::vector<double>> out(t, std::vector<double>(mat.cols));
        for (int r = 0; r < t; ++r)
            for (int c = 0; c < mat.cols; ++c) {
                double acc = bias[c];
                for (int k = 0; k < mat.rows; ++k) acc += x[r][k] * mat.at(k, c);
                out[r][c] = acc;
            }
        return out;
    };

    std::vector<std::vector<double>> x(t, std::vector<double>(d));
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < d; ++c) x[r][c] = input.at(r, c);

    auto n1 = norm(x, w.norm1_scale, w.norm1_offset);
    auto q = project(n1, w.wq, w.bq), k = project(n1, w.wk, w.bk), v = project(n1, w.wv, w.bv);
    std::vector<std::vector<double>> ctx(t, std::vector<double>(d, 0.0));
    for (int head = 0; head < h; ++head) {
        for (int i = 0; i < t; ++i) {
            std::vector<double> scores(t);
            for (int j = 0; j < t; ++j) {
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += q[i][head * dh + c] * k[j][head * dh + c];
                scores[j] = dot / std::sqrt(static_cast<double>(dh));
            }
            const double mx = *std::max_element(scores.begin(), scores.end());
            double sum = 0.0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                sum += s;
            }
            for (int j = 0; j < t; ++j)
                for (int c = 0; c < dh; ++c)
                    ctx[i][head * dh + c] += scores[j] / sum * v[j][head * dh + c];
        }
    }
    auto attn = project(ctx, w.wo, w.bo);
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < d; ++c) attn[r][c] += x[r][c];

    auto n2 = norm(attn, w.norm2_scale, w.norm2_offset);
    auto hidden = project(n2, w.w1, w.b1);
    for (auto& row : hidden)
        for (double& v2 : row) v2 = std::max(v2, 0.0);
    auto out = project(hidden, w.w2, w.b2);
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < d; ++c) out[r][c] += attn[r][c];
    return out;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("layer_forward preserves shape") {
    const EncoderWeights w = random_weights(11, 1, 64, 128, 4, 5);
    const FeatureMatrix in = random_matrix(1, 40, 64);
    const FeatureMatrix out = layer_forward(w.layers[0], in);
    CHECK(out.rows == 40);
    CHECK(out.cols == 64);
}

TEST_CASE("zero projection weights pass the input through the residuals") {
    const EncoderLayerWeights l = zero_layer(16, 32, 4);
    const FeatureMatrix in = random_matrix(2, 7, 16);
    const FeatureMatrix out = layer_forward(l, in);
    CHECK(out.data == in.data);
}

TEST_CASE("layer_forward matches a naive double-precision reference") {
    EncoderWeights w = random_weights(33, 1, 16, 32, 4, 5);
    // Nonzero norm offsets and biases so every parameter participates.
    std::mt19937 rng(99);
    std::normal_distribution<float> dist(0.0f, 0.1f);
    auto& l = w.layers[0];
    for (auto* vec : {&l.bq, &l.bk, &l.bv, &l.bo, &l.b2, &l.norm1_offset, &l.norm2_offset})
        for (float& v : *vec) v = dist(rng);
    for (float& v : l.b1) v = dist(rng);
    for (float& v : l.norm1_scale) v = 1.0f + dist(rng);
    for (float& v : l.norm2_scale) v = 1.0f + dist(rng);

    const FeatureMatrix in = random_matrix(3, 8, 16);
    const FeatureMatrix got = layer_forward(l, in);
    const auto want = reference_layer(l, in);
    double worst = 0.0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 16; ++c)
            worst = std::max(worst, testutil::rel_dev(got.at(r, c), want[r][c]));
    CHECK(worst <= 1e-5);
}

TEST_CASE("layer_forward rejects dimension mismatch") {
    const EncoderWeights w = random_weights(5, 1, 16, 32, 4, 5);
    CHECK_THROWS_AS(layer_forward(w.layers[0], random_matrix(4, 3, 8)), config_error);
}

TEST_CASE("positional encoding at position 0 is the sin-0 cos-1 pattern") {
    const FeatureMatrix zero(1, 16);
    const FeatureMatrix out = add_positional_encoding(zero, 0);
    for (int c = 0; c < 16; ++c) CHECK(out.at(0, c) == doctest::Approx(c % 2 == 0 ? 0.0 : 1.0));
}

TEST_CASE("same absolute frame gets the same encoding in overlapping windows") {
    const FeatureMatrix zero(6, 16);
    const FeatureMatrix a = add_positional_encoding(zero, 4);  // frame 7 at row 3
    const FeatureMatrix b = add_positional_encoding(zero, 6);  // frame 7 at row 1
    for (int c = 0; c < 16; ++c) CHECK(a.at(3, c) == b.at(1, c));
}

TEST_CASE("positional encoding matches an independently scripted table") {
    // sin/cos values for position 7, d=16, from a separate script.
    const float expected[16] = {
        6.569865987e-01f, 7.539022543e-01f, 8.004216463e-01f, -5.994373930e-01f,
        6.442176872e-01f, 7.648421873e-01f, 2.195560914e-01f, 9.755998784e-01f,
        6.994284734e-02f, 9.975510003e-01f, 2.213413590e-02f, 9.997550100e-01f,
        6.999942833e-03f, 9.999755001e-01f, 2.213592554e-03f, 9.999975500e-01f};
    const FeatureMatrix out = add_positional_encoding(FeatureMatrix(8, 16), 0);
    for (int c = 0; c < 16; ++c) CHECK(out.at(7, c) == doctest::Approx(expected[c]).epsilon(1e-6));
}

TEST_CASE("positional encoding rejects negative start frames") {
    CHECK_THROWS_AS(add_positional_encoding(FeatureMatrix(2, 4), -1), config_error);
}

TEST_CASE("ctc head rows are log-distributions") {
    const EncoderWeights w = random_weights(21, 1, 16, 32, 4, 7);
    const FeatureMatrix lp = ctc_head_forward(w, random_matrix(5, 9, 16));
    for (int r = 0; r < lp.rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < lp.cols; ++c) sum += std::exp(static_cast<double>(lp.at(r, c)));
        CHECK(std::abs(std::log(sum)) <= 1e-6);
    }
}

TEST_CASE("zero ctc head yields the uniform distribution") {
    EncoderWeights w = random_weights(21, 1, 16, 32, 4, 7);
    w.ctc_w = FeatureMatrix(16, 8);
    w.ctc_b.assign(8, 0.0f);
    const FeatureMatrix lp = ctc_head_forward(w, random_matrix(6, 4, 16));
    for (float v : lp.data) CHECK(v == doctest::Approx(-std::log(8.0)).epsilon(1e-6));
}

TEST_CASE("ctc head matches a naive two-pass softmax reference") {
    const EncoderWeights w = random_weights(12, 1, 8, 16, 2, 3);
    const FeatureMatrix in = random_matrix(8, 5, 8);
    const FeatureMatrix got = ctc_head_forward(w, in);
    for (int r = 0; r < 5; ++r) {
        std::vector<double> logits(4, 0.0);
        for (int c = 0; c < 4; ++c) {
            logits[c] = w.ctc_b[c];
            for (int k = 0; k < 8; ++k)
                logits[c] += static_cast<double>(in.at(r, k)) * w.ctc_w.at(k, c);
        }
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v);
        for (int c = 0; c < 4; ++c)
            CHECK(std::abs(got.at(r, c) - (logits[c] - std::log(sum))) <= 1e-6);
    }
}

TEST_CASE("layer_forward is permutation equivariant") {
    const EncoderWeights w = random_weights(77, 1, 16, 32, 4, 5);
    const FeatureMatrix in = random_matrix(5, 10, 16);
    const std::vector<int> perm{7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
    FeatureMatrix permuted(10, 16);
    for (int r = 0; r < 10; ++r)
        std::copy(in.row(perm[r]), in.row(perm[r]) + 16, permuted.row(r));

    // Softmax sums run in row-storage order, so equality is up to rounding.
    const FeatureMatrix out = layer_forward(w.layers[0], in);
    const FeatureMatrix out_perm = layer_forward(w.layers[0], permuted);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 16; ++c)
            CHECK(testutil::rel_dev(out_perm.at(r, c), out.at(perm[r], c)) <= 1e-5);
}

TEST_CASE("layer_forward is deterministic") {
    const EncoderWeights w = random_weights(55, 1, 16, 32, 4, 5);
    const FeatureMatrix in = random_matrix(6, 12, 16);
    const FeatureMatrix a = layer_forward(w.layers[0], in);
    const FeatureMatrix b = layer_forward(w.layers[0], in);
    CHECK(a.data == b.data);
}

}  // TEST_SUITE
