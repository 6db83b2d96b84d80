#pragma once

#include <span>
#include <string>
#include <vector>

#include "spiral/blocks.hpp"
#include "spiral/encoder.hpp"

namespace spiral {

// Blank is always the last class: id V for a (V+1)-column probability matrix.

struct TokenEmission {
    int token_id = 0;
    long frame_index = 0;  // first frame of the collapsed token's argmax run
    int block_index = -1;  // block whose chunk contained that frame, if known
};

struct Transcript {
    struct Word {
        std::string text;
        int span_begin = 0;  // token index range [begin, end)
        int span_end = 0;
    };

    std::string utt_id;
    std::vector<int> tokens;
    std::vector<Word> words;
};

// Per-frame argmax, collapse consecutive repeats, drop blanks.
std::vector<TokenEmission> greedy_decode(const FeatureMatrix& logprobs);

// Fills block_index on each emission from the chunk that owns its frame.
void annotate_blocks(std::vector<TokenEmission>& emissions, std::span<const BlockPlan> plans);

// Negative log-likelihood over all alignments, log-domain forward recursion
// on the blank-interleaved target. Returns +infinity when the target cannot
// be aligned (T too short).
double ctc_loss(const FeatureMatrix& logprobs, std::span<const int> target);

struct CtcGrad {
    double loss = 0.0;
    FeatureMatrix grad;  // d loss / d logits, same shape as the logits
};

// Loss and analytic gradient w.r.t. pre-softmax logits via the alpha/beta
// recursions. Throws config_error for unalignable targets.
CtcGrad ctc_loss_grad(const FeatureMatrix& logits, std::span<const int> target);

struct CombinedLoss {
    double total = 0.0;
    double loss_full = 0.0;               // CTC loss on the accumulated output
    std::vector<double> loss_per_shift;   // one term per shift value
};

// Applies the shared CTC head to the accumulated output and to each
// per-shift sequence, and sums the losses with unit weights.
CombinedLoss combined_loss(std::span<const FeatureMatrix> per_shift, const FeatureMatrix& full,
                           std::span<const int> target, const EncoderWeights& weights);

// Transcript file: JSON lines {utt_id, tokens, words:[{text, token_span}]}.
std::vector<Transcript> load_transcripts(const std::string& path);
void save_transcripts(std::span<const Transcript> transcripts, const std::string& path);

}  // namespace spiral
