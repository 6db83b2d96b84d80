#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "spiral/harness.hpp"

namespace {

// Exit codes: 0 success, 2 configuration, 3 I/O, 4 verification failure,
// 5 state/stream, 1 anything else.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitVerify = 4;
constexpr int kExitState = 5;

int log_level() {
    const char* env = std::getenv("SPIRAL_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << msg << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"Streaming blockwise encoder with circular layer skipping and early exit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Write synthetic features, alignments, transcripts and random weights");
    spiral::GenerateSpec gspec;
    gen->add_option("--seed", gspec.seed, "RNG seed")->required();
    gen->add_option("--utts", gspec.utterances, "Number of utterances")->required();
    gen->add_option("--frames", gspec.frames, "Frames per utterance")->required();
    gen->add_option("--dim", gspec.dim, "Feature dimension")->required();
    gen->add_option("--vocab", gspec.vocab, "Token classes excluding blank")->required();
    gen->add_option("--out", gspec.out_dir, "Output directory")->required();
    gen->add_option("--layers", gspec.total_layers, "Encoder layer count");
    gen->add_option("--dff", gspec.d_ff, "Feed-forward width (default 2*dim)");
    gen->add_option("--heads", gspec.heads, "Attention heads");
    gen->add_option("--frame-ms", gspec.frame_ms, "Frame duration in ms");
    gen->add_option("--tail-margin", gspec.tail_margin, "Word-free trailing frames");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the streaming pipeline and write latency reports");
    std::string sim_config, sim_features, sim_align, sim_weights, sim_out;
    std::string sim_emitter = "oracle";
    uint64_t sim_seed = 0;
    sim->add_option("--config", sim_config, "Engine config JSON")->required();
    sim->add_option("--features", sim_features, "Directory of .spft feature files")->required();
    sim->add_option("--align", sim_align, "Alignment JSONL file")->required();
    sim->add_option("--weights", sim_weights, "SPWT weight file")->required();
    sim->add_option("--emitter", sim_emitter, "model|oracle")
        ->check(CLI::IsMember({"model", "oracle"}));
    sim->add_option("--out", sim_out, "Report output directory")->required();
    sim->add_option("--seed", sim_seed, "Seed recorded in the report");

    // verify
    auto* ver = app.add_subcommand("verify", "Run an invariant suite");
    std::string suite;
    ver->add_option("--suite", suite, "coverage|equivalence|ctc|latency|trace|all")->required();

    // loss
    auto* loss = app.add_subcommand("loss", "Combined multi-exit CTC loss over a dataset");
    std::string loss_config, loss_features, loss_transcripts, loss_weights;
    loss->add_option("--config", loss_config, "Engine config JSON")->required();
    loss->add_option("--features", loss_features, "Directory of .spft feature files")->required();
    loss->add_option("--transcripts", loss_transcripts, "Transcript JSONL file")->required();
    loss->add_option("--weights", loss_weights, "SPWT weight file")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        const auto result = spiral::cmd_generate(gspec);
        info("generate: wrote " + std::to_string(result.feature_files.size()) +
             " utterances under " + gspec.out_dir);
        std::cout << result.manifest_path << "\n";
        return 0;
    }

    if (sim->parsed()) {
        spiral::RunManifest manifest;
        manifest.config = spiral::load_engine_config(sim_config);
        manifest.features_dir = sim_features;
        manifest.align_path = sim_align;
        manifest.weights_path = sim_weights;
        manifest.out_dir = sim_out;
        manifest.emitter = sim_emitter == "oracle" ? spiral::Emitter::oracle : spiral::Emitter::model;
        manifest.seed = sim_seed;

        const auto result = spiral::cmd_simulate(manifest);
        for (const auto& u : result.utterances)
            if (!u.matched) info("simulate: excluded " + u.utt_id + " (" + u.diagnostic + ")");
        const auto& agg = result.aggregate;
        std::cout << "utterances=" << agg.utterances << " matched=" << agg.matched
                  << " layer_evals=" << agg.layer_evals_total;
        if (agg.swd_p50) std::cout << " swd_p50=" << *agg.swd_p50 << "ms swd_p90=" << *agg.swd_p90 << "ms";
        std::cout << " rtf=" << agg.rtf << "\n";
        std::cout << result.report_json_path << "\n" << result.report_csv_path << "\n";
        return 0;
    }

    if (ver->parsed()) return spiral::cmd_verify(suite, std::cout) ? 0 : kExitVerify;

    if (loss->parsed()) {
        spiral::LossSpec spec;
        spec.config = spiral::load_engine_config(loss_config);
        spec.features_dir = loss_features;
        spec.transcripts_path = loss_transcripts;
        spec.weights_path = loss_weights;

        const auto result = spiral::cmd_loss(spec);
        for (const auto& u : result.utterances)
            if (!u.alignable) info("loss: " + u.utt_id + " target unalignable, skipped");
        std::cout << "L_H = " << result.total_full << "\n";
        for (size_t s = 0; s < result.total_per_shift.size(); ++s)
            std::cout << "L_H^" << s << " = " << result.total_per_shift[s] << "\n";
        std::cout << "L = " << result.total << "\n";
        if (result.skipped > 0) std::cout << "skipped_utterances = " << result.skipped << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const spiral::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const spiral::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const spiral::state_error& e) {
        std::cerr << "state error: " << e.what() << "\n";
        return kExitState;
    } catch (const spiral::stream_error& e) {
        std::cerr << "stream error: " << e.what() << "\n";
        return kExitState;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
