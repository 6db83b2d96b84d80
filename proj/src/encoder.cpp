#include "spiral/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

namespace spiral {

namespace {

void check_layer_dims(const EncoderLayerWeights& w, const FeatureMatrix& input) {
    if (input.cols != w.d) throw config_error("layer_forward: input cols != d");
    if (w.d % w.heads != 0) throw config_error("layer_forward: d not divisible by head count");
    if (w.wq.rows != w.d || w.wq.cols != w.d || w.w1.rows != w.d || w.w1.cols != w.d_ff ||
        w.w2.rows != w.d_ff || w.w2.cols != w.d)
        throw config_error("layer_forward: weight shapes inconsistent with d/d_ff");
}

FeatureMatrix self_attention(const EncoderLayerWeights& w, const FeatureMatrix& x) {
    const int t = x.rows;
    const int d = w.d;
    const int h = w.heads;
    const int dh = d / h;

    FeatureMatrix q = matmul(x, w.wq);
    add_bias_rows(q, w.bq);
    FeatureMatrix k = matmul(x, w.wk);
    add_bias_rows(k, w.bk);
    FeatureMatrix v = matmul(x, w.wv);
    add_bias_rows(v, w.bv);

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    FeatureMatrix ctx(t, d);
    for (int head = 0; head < h; ++head) {
        const int off = head * dh;
        FeatureMatrix scores(t, t);
        for (int i = 0; i < t; ++i) {
            const float* qi = q.row(i) + off;
            float* srow = scores.row(i);
            for (int j = 0; j < t; ++j) {
                const float* kj = k.row(j) + off;
                float dot = 0.0f;
                for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                srow[j] = dot * scale;
            }
        }
        softmax_rows_inplace(scores);
        for (int i = 0; i < t; ++i) {
            const float* srow = scores.row(i);
            float* crow = ctx.row(i) + off;
            for (int j = 0; j < t; ++j) {
                const float p = srow[j];
                const float* vj = v.row(j) + off;
                for (int c = 0; c < dh; ++c) crow[c] += p * vj[c];
            }
        }
    }

    FeatureMatrix out = matmul(ctx, w.wo);
    add_bias_rows(out, w.bo);
    return out;
}

}  // namespace

FeatureMatrix layer_forward(const EncoderLayerWeights& w, const FeatureMatrix& input,
                            int layer_index) {
    check_layer_dims(w, input);

    FeatureMatrix normed = layer_norm_rows(input, w.norm1_scale, w.norm1_offset);
    FeatureMatrix attn = self_attention(w, normed);
    add_inplace(attn, input);  // attn now holds the residual sum

    FeatureMatrix normed2 = layer_norm_rows(attn, w.norm2_scale, w.norm2_offset);
    FeatureMatrix hidden = matmul(normed2, w.w1);
    add_bias_rows(hidden, w.b1);
    relu_inplace(hidden);
    FeatureMatrix out = matmul(hidden, w.w2);
    add_bias_rows(out, w.b2);
    add_inplace(out, attn);

    if (!all_finite(out))
        throw numeric_error("layer_forward: non-finite output at layer " +
                            std::to_string(layer_index));
    return out;
}

FeatureMatrix add_positional_encoding(const FeatureMatrix& input, long absolute_start_frame,
                                      float base) {
    if (absolute_start_frame < 0)
        throw config_error("add_positional_encoding: absolute_start_frame must be >= 0");
    FeatureMatrix out = input;
    const int d = input.cols;
    for (int r = 0; r < input.rows; ++r) {
        const double pos = static_cast<double>(absolute_start_frame + r);
        float* row = out.row(r);
        for (int c = 0; c < d; ++c) {
            const int pair = c / 2;
            const double angle = pos / std::pow(static_cast<double>(base), 2.0 * pair / d);
            row[c] += static_cast<float>((c % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    }
    return out;
}

FeatureMatrix ctc_head_forward(const EncoderWeights& w, const FeatureMatrix& encoded) {
    if (encoded.cols != w.d) throw config_error("ctc_head_forward: input cols != d");
    const int classes = w.vocab + 1;
    FeatureMatrix logits = matmul(encoded, w.ctc_w);
    add_bias_rows(logits, w.ctc_b);

    // Log-softmax in double so stored rows normalize well within 1e-6.
    FeatureMatrix out(encoded.rows, classes);
    for (int r = 0; r < logits.rows; ++r) {
        const float* in = logits.row(r);
        double mx = in[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(in[c]));
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) sum += std::exp(in[c] - mx);
        const double lse = mx + std::log(sum);
        float* o = out.row(r);
        for (int c = 0; c < classes; ++c) o[c] = static_cast<float>(in[c] - lse);
    }
    return out;
}

EncoderWeights random_weights(uint64_t seed, int total_layers, int d, int d_ff, int heads,
                              int vocab) {
    if (total_layers < 1 || d < 1 || d_ff < 1 || heads < 1 || vocab < 1)
        throw config_error("random_weights: all dimensions must be >= 1");
    if (d % heads != 0) throw config_error("random_weights: d must be divisible by heads");

    std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
    auto fill = [&rng](FeatureMatrix& m, int fan_in) {
        std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(fan_in)));
        for (float& v : m.data) v = dist(rng);
    };

    EncoderWeights w;
    w.d = d;
    w.d_ff = d_ff;
    w.heads = heads;
    w.vocab = vocab;
    w.layers.resize(total_layers);
    for (auto& l : w.layers) {
        l.d = d;
        l.d_ff = d_ff;
        l.heads = heads;
        l.wq = FeatureMatrix(d, d);
        l.wk = FeatureMatrix(d, d);
        l.wv = FeatureMatrix(d, d);
        l.wo = FeatureMatrix(d, d);
        fill(l.wq, d);
        fill(l.wk, d);
        fill(l.wv, d);
        fill(l.wo, d);
        l.bq.assign(d, 0.0f);
        l.bk.assign(d, 0.0f);
        l.bv.assign(d, 0.0f);
        l.bo.assign(d, 0.0f);
        l.w1 = FeatureMatrix(d, d_ff);
        l.w2 = FeatureMatrix(d_ff, d);
        fill(l.w1, d);
        fill(l.w2, d_ff);
        l.b1.assign(d_ff, 0.0f);
        l.b2.assign(d, 0.0f);
        l.norm1_scale.assign(d, 1.0f);
        l.norm1_offset.assign(d, 0.0f);
        l.norm2_scale.assign(d, 1.0f);
        l.norm2_offset.assign(d, 0.0f);
    }
    w.ctc_w = FeatureMatrix(d, vocab + 1);
    fill(w.ctc_w, d);
    w.ctc_b.assign(vocab + 1, 0.0f);
    return w;
}

}  // namespace spiral
