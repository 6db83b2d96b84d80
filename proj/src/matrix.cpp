#include "spiral/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace spiral {

FeatureMatrix matmul(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.cols != b.rows) throw config_error("matmul: inner dimensions do not match");
    FeatureMatrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const float* arow = a.row(i);
        float* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const float av = arow[k];
            if (av == 0.0f) continue;
            const float* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

void add_bias_rows(FeatureMatrix& m, std::span<const float> bias) {
    if (static_cast<size_t>(m.cols) != bias.size())
        throw config_error("add_bias_rows: bias length does not match cols");
    for (int r = 0; r < m.rows; ++r) {
        float* row = m.row(r);
        for (int c = 0; c < m.cols; ++c) row[c] += bias[c];
    }
}

void add_inplace(FeatureMatrix& a, const FeatureMatrix& b) {
    if (!a.same_shape(b)) throw config_error("add_inplace: shape mismatch");
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

FeatureMatrix layer_norm_rows(const FeatureMatrix& m, std::span<const float> scale,
                              std::span<const float> offset) {
    if (static_cast<size_t>(m.cols) != scale.size() || scale.size() != offset.size())
        throw config_error("layer_norm_rows: parameter length does not match cols");
    constexpr float kEps = 1e-5f;
    FeatureMatrix out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const float* in = m.row(r);
        float mean = 0.0f;
        for (int c = 0; c < m.cols; ++c) mean += in[c];
        mean /= static_cast<float>(m.cols);
        float var = 0.0f;
        for (int c = 0; c < m.cols; ++c) {
            const float d = in[c] - mean;
            var += d * d;
        }
        var /= static_cast<float>(m.cols);
        const float inv = 1.0f / std::sqrt(var + kEps);
        float* o = out.row(r);
        for (int c = 0; c < m.cols; ++c) o[c] = (in[c] - mean) * inv * scale[c] + offset[c];
    }
    return out;
}

void softmax_rows_inplace(FeatureMatrix& m) {
    for (int r = 0; r < m.rows; ++r) {
        float* row = m.row(r);
        float mx = row[0];
        for (int c = 1; c < m.cols; ++c) mx = std::max(mx, row[c]);
        float sum = 0.0f;
        for (int c = 0; c < m.cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        const float inv = 1.0f / sum;
        for (int c = 0; c < m.cols; ++c) row[c] *= inv;
    }
}

void relu_inplace(FeatureMatrix& m) {
    for (float& v : m.data) v = std::max(v, 0.0f);
}

bool all_finite(const FeatureMatrix& m) {
    return std::all_of(m.data.begin(), m.data.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace spiral
