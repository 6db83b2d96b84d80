#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spiral/blocks.hpp"
#include "spiral/engine.hpp"

namespace spiral {

// Ground-truth word timing for one utterance, ordered by end time.
struct WordRef {
    std::string text;
    double start_ms = 0.0;
    double end_ms = 0.0;
};

struct AlignmentRef {
    std::string utt_id;
    std::vector<WordRef> words;
};

// Simulated emission of one word: wall clock when the block holding the
// word's last token produced output, and the CTC argmax frame time that
// ignores block scheduling.
struct EmissionRecord {
    double emit_wallclock_ms = 0.0;
    double ctc_frame_ms = 0.0;
};

struct WordDelays {
    double fwd_ms = 0.0;       // first word
    double lwd_ms = 0.0;       // last word
    double swd_mean_ms = 0.0;  // system delay averaged within the utterance
    double iwd_mean_ms = 0.0;  // internal (CTC) delay averaged likewise
    std::vector<double> swd_ms;  // per word, emission order
    std::vector<double> iwd_ms;
};

// Per-word system delay = emit_wallclock_ms - ref end_ms; internal delay is
// measured from the CTC argmax frame. Word counts must match; a mismatch
// throws config_error and the caller excludes the utterance.
WordDelays word_delays(std::span<const EmissionRecord> emissions, const AlignmentRef& ref);

// (n_center + n_right) * frame_ms: the worst-case wait between a frame's
// arrival and its emission.
double max_theoretical_latency_ms(const BlockConfig& cfg);

// Nearest-rank percentile: the ceil(q/100 * n)-th order statistic.
double percentile(std::vector<double> values, double q);

struct ComputeAccounting {
    long layer_evals_total = 0;
    double evals_per_audio_second = 0.0;
    std::optional<double> rtf;  // compute seconds / audio seconds, when measured
};

ComputeAccounting compute_accounting(std::span<const BlockOutput> blocks, double audio_ms,
                                     std::optional<double> measured_compute_ms = std::nullopt);

// Alignment file: JSON lines {utt_id, words: [{text, start_ms, end_ms}]}.
std::vector<AlignmentRef> load_alignments(const std::string& path);
void save_alignments(std::span<const AlignmentRef> refs, const std::string& path);

}  // namespace spiral
