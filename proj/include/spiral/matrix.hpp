#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spiral/errors.hpp"

namespace spiral {

// Dense row-major float32 matrix. Rows are frames, columns are feature
// dimensions.
struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    FeatureMatrix() = default;
    FeatureMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {
        if (r < 0 || c < 1) throw config_error("FeatureMatrix: rows must be >= 0 and cols >= 1");
    }

    float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    std::span<float> row_span(int r) { return {row(r), static_cast<size_t>(cols)}; }
    std::span<const float> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    bool same_shape(const FeatureMatrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

// C = A * B, shapes (m x k) * (k x n). Accumulation in float32.
FeatureMatrix matmul(const FeatureMatrix& a, const FeatureMatrix& b);

// out[r] += bias for every row.
void add_bias_rows(FeatureMatrix& m, std::span<const float> bias);

// a += b elementwise.
void add_inplace(FeatureMatrix& a, const FeatureMatrix& b);

// Per-row layer norm with learned scale/offset, eps 1e-5.
FeatureMatrix layer_norm_rows(const FeatureMatrix& m, std::span<const float> scale,
                              std::span<const float> offset);

// Numerically stable per-row softmax.
void softmax_rows_inplace(FeatureMatrix& m);

void relu_inplace(FeatureMatrix& m);

bool all_finite(const FeatureMatrix& m);

}  // namespace spiral
