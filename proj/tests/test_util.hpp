#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "spiral/matrix.hpp"

namespace testutil {

inline spiral::FeatureMatrix random_matrix(uint32_t seed, int rows, int cols, float stddev = 1.0f) {
    spiral::FeatureMatrix m(rows, cols);
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist(0.0f, stddev);
    for (float& v : m.data) v = dist(rng);
    return m;
}

inline double rel_dev(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_dev(const spiral::FeatureMatrix& a, const spiral::FeatureMatrix& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, rel_dev(a.data[i], b.data[i]));
    return worst;
}

}  // namespace testutil
