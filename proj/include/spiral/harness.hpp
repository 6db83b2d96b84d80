#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spiral/ctc.hpp"
#include "spiral/engine.hpp"
#include "spiral/metrics.hpp"

namespace spiral {

// Engine configuration file (JSON): block geometry plus schedule settings.
struct EngineConfig {
    BlockConfig block;
    SpiralConfig spiral;
    std::string raw_json;  // file content as read, used for manifest hashing
};

EngineConfig load_engine_config(const std::string& path);

uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(uint64_t h);

// ---------------------------------------------------------------------------
// generate: synthetic features, alignments, transcripts and random weights.

struct GenerateSpec {
    uint64_t seed = 1;
    int utterances = 10;
    int frames = 200;
    int dim = 16;
    int vocab = 20;
    int total_layers = 12;
    int d_ff = 0;  // 0 -> 2 * dim
    int heads = 4;
    double frame_ms = 40.0;
    // Trailing frames kept word-free so every word's block retains its full
    // look-ahead; covers n_center + n_right of the simulation configs.
    int tail_margin = 30;
    std::string out_dir;
};

struct GenerateResult {
    std::vector<std::string> feature_files;
    std::string alignments_path;
    std::string transcripts_path;
    std::string weights_path;
    std::string weights_manifest_path;
    std::string manifest_path;
};

GenerateResult cmd_generate(const GenerateSpec& spec);

// ---------------------------------------------------------------------------
// simulate: streaming encode, emission, delay measurement, report files.

enum class Emitter { model, oracle };

struct RunManifest {
    EngineConfig config;
    std::string features_dir;
    std::string align_path;
    std::string weights_path;
    std::string out_dir;
    Emitter emitter = Emitter::oracle;
    uint64_t seed = 0;

    std::string hash() const;
};

struct UttSim {
    std::string utt_id;
    long frames = 0;
    double audio_ms = 0.0;
    int blocks = 0;
    long layer_evals = 0;
    bool matched = false;
    std::string diagnostic;   // set when the utterance is excluded
    WordDelays delays;        // valid when matched
    double compute_ms = 0.0;  // measured, non-deterministic
};

struct SimAggregate {
    int utterances = 0;
    int matched = 0;
    long layer_evals_total = 0;
    double audio_ms_total = 0.0;
    double evals_per_audio_second = 0.0;
    std::optional<double> fwd_p50, fwd_p90;
    std::optional<double> lwd_p50, lwd_p90;
    std::optional<double> swd_p50, swd_p90;
    std::optional<double> iwd_p50, iwd_p90;
    double compute_ms_total = 0.0;  // measured, non-deterministic
    double rtf = 0.0;               // measured, non-deterministic
};

struct SimResult {
    std::string manifest_hash;
    uint64_t seed = 0;
    std::vector<UttSim> utterances;
    SimAggregate aggregate;
    std::string report_json_path;
    std::string report_csv_path;
};

SimResult cmd_simulate(const RunManifest& manifest);

// ---------------------------------------------------------------------------
// loss: combined multi-exit CTC loss over a dataset.

struct LossSpec {
    EngineConfig config;
    std::string features_dir;
    std::string transcripts_path;
    std::string weights_path;
};

struct UttLoss {
    std::string utt_id;
    bool alignable = false;
    CombinedLoss loss;
};

struct LossResult {
    std::vector<UttLoss> utterances;
    double total_full = 0.0;                // sum of L over alignable utterances
    std::vector<double> total_per_shift;    // one entry per shift value
    double total = 0.0;
    int skipped = 0;
};

LossResult cmd_loss(const LossSpec& spec);

// ---------------------------------------------------------------------------
// verify: self-contained invariant suites with their own reference checks.
// Returns true when every check passes; prints one line per check.

bool cmd_verify(const std::string& suite, std::ostream& os);

std::vector<std::string> list_feature_files(const std::string& dir);

}  // namespace spiral
