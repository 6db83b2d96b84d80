#pragma once

#include <cstdint>
#include <vector>

#include "spiral/matrix.hpp"

namespace spiral {

// Parameters of one pre-norm transformer layer: multi-head self-attention
// followed by a position-wise feed-forward block, both with residual paths.
struct EncoderLayerWeights {
    int d = 0;
    int d_ff = 0;
    int heads = 0;

    FeatureMatrix wq, wk, wv, wo;  // each d x d
    std::vector<float> bq, bk, bv, bo;
    FeatureMatrix w1;  // d x d_ff
    FeatureMatrix w2;  // d_ff x d
    std::vector<float> b1, b2;
    std::vector<float> norm1_scale, norm1_offset;
    std::vector<float> norm2_scale, norm2_offset;
};

struct EncoderWeights {
    int d = 0;
    int d_ff = 0;
    int heads = 0;
    int vocab = 0;  // token classes excluding blank; head projects to vocab+1

    std::vector<EncoderLayerWeights> layers;
    FeatureMatrix ctc_w;  // d x (vocab+1)
    std::vector<float> ctc_b;
    float pe_base = 10000.0f;

    int total_layers() const { return static_cast<int>(layers.size()); }
};

// One encoder layer: pre-norm MHSA with residual, then pre-norm FFN with
// residual. Attention spans every input row (the whole analysis window).
// layer_index is only used to annotate numeric errors.
FeatureMatrix layer_forward(const EncoderLayerWeights& w, const FeatureMatrix& input,
                            int layer_index = -1);

// Adds sinusoidal encoding indexed by absolute frame position, so a frame
// shared by overlapping windows receives the same encoding in each.
FeatureMatrix add_positional_encoding(const FeatureMatrix& input, long absolute_start_frame,
                                      float base = 10000.0f);

// Linear projection to vocab+1 classes followed by per-row log-softmax.
FeatureMatrix ctc_head_forward(const EncoderWeights& w, const FeatureMatrix& encoded);

// Seeded random initialization, 1/sqrt(fan_in) scaled projections.
EncoderWeights random_weights(uint64_t seed, int total_layers, int d, int d_ff, int heads,
                              int vocab);

}  // namespace spiral
