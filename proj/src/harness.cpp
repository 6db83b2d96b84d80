#include "spiral/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spiral/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace spiral {

EngineConfig load_engine_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();

    EngineConfig cfg;
    cfg.raw_json = buf.str();
    json j = json::parse(cfg.raw_json, nullptr, false);
    if (j.is_discarded()) throw config_error("config file is not valid JSON: " + path);

    cfg.block.n_left = j.value("n_left", 0);
    cfg.block.n_center = j.value("n_center", 1);
    cfg.block.n_right = j.value("n_right", 0);
    cfg.block.frame_ms = j.value("frame_ms", 40.0);
    cfg.spiral.total_layers = j.value("total_layers", 12);
    cfg.spiral.pitch = j.value("pitch", 1);
    cfg.spiral.cache_combination = j.value("cache_combination", true);
    cfg.spiral.layer0_cache = j.value("layer0_cache", false);
    const std::string mode = j.value("mode", "spiral");
    if (mode == "spiral")
        cfg.spiral.mode = EngineMode::spiral;
    else if (mode == "baseline")
        cfg.spiral.mode = EngineMode::baseline;
    else
        throw config_error("config: mode must be \"spiral\" or \"baseline\", got \"" + mode + "\"");

    cfg.block.validate();
    cfg.spiral.validate();
    return cfg;
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string RunManifest::hash() const {
    std::string key = config.raw_json;
    key += '\x1f';
    key += features_dir;
    key += '\x1f';
    key += align_path;
    key += '\x1f';
    key += weights_path;
    key += '\x1f';
    key += (emitter == Emitter::oracle ? "oracle" : "model");
    key += '\x1f';
    key += std::to_string(seed);
    return hash_hex(fnv1a64(key));
}

std::vector<std::string> list_feature_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw io_error("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".spft")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw io_error("no .spft feature files in " + dir);
    return files;
}

// ---------------------------------------------------------------------------
// generate

GenerateResult cmd_generate(const GenerateSpec& spec) {
    if (spec.utterances < 1 || spec.frames < 1 || spec.dim < 1 || spec.vocab < 1)
        throw config_error("generate: utterances, frames, dim and vocab must be >= 1");
    const int d_ff = spec.d_ff > 0 ? spec.d_ff : 2 * spec.dim;
    if (spec.dim % spec.heads != 0) throw config_error("generate: dim must be divisible by heads");
    const int usable_end = spec.frames - spec.tail_margin;
    if (usable_end < 12)
        throw config_error("generate: frames too small for the word-free tail margin");

    fs::create_directories(fs::path(spec.out_dir) / "features");

    GenerateResult result;
    std::vector<AlignmentRef> refs;
    std::vector<Transcript> transcripts;

    for (int u = 0; u < spec.utterances; ++u) {
        std::mt19937 rng(static_cast<uint32_t>(spec.seed * 2654435761ull + 1000 + u));

        char name[32];
        std::snprintf(name, sizeof(name), "utt_%04d", u);

        FeatureMatrix feats(spec.frames, spec.dim);
        std::normal_distribution<float> noise(0.0f, 1.0f);
        for (float& v : feats.data) v = noise(rng);
        const std::string feat_path = (fs::path(spec.out_dir) / "features" / (std::string(name) + ".spft")).string();
        save_features(feats, feat_path);
        result.feature_files.push_back(feat_path);

        // Word end frames stay clear of the stream tail so each word's block
        // is emitted with its full look-ahead.
        AlignmentRef ref;
        ref.utt_id = name;
        Transcript tr;
        tr.utt_id = name;
        std::uniform_int_distribution<int> word_len(3, 8);
        std::uniform_int_distribution<int> gap_len(0, 2);
        std::uniform_int_distribution<int> token(0, spec.vocab - 1);
        int pos = 2 + static_cast<int>(rng() % 3);
        int index = 0;
        while (true) {
            const int len = word_len(rng);
            const int end_frame = pos + len - 1;
            if (end_frame >= usable_end) break;
            WordRef w;
            w.text = "w" + std::to_string(index);
            w.start_ms = pos * spec.frame_ms;
            w.end_ms = (end_frame + 1) * spec.frame_ms;
            ref.words.push_back(w);
            tr.tokens.push_back(token(rng));
            tr.words.push_back({w.text, index, index + 1});
            pos = end_frame + 1 + gap_len(rng);
            ++index;
        }
        if (ref.words.empty()) throw config_error("generate: no words fit the utterance");
        refs.push_back(std::move(ref));
        transcripts.push_back(std::move(tr));
    }

    result.alignments_path = (fs::path(spec.out_dir) / "alignments.jsonl").string();
    save_alignments(refs, result.alignments_path);
    result.transcripts_path = (fs::path(spec.out_dir) / "transcripts.jsonl").string();
    save_transcripts(transcripts, result.transcripts_path);

    EncoderWeights weights =
        random_weights(spec.seed, spec.total_layers, spec.dim, d_ff, spec.heads, spec.vocab);
    result.weights_path = (fs::path(spec.out_dir) / "weights.spwt").string();
    save_weights(weights, result.weights_path);
    result.weights_manifest_path = (fs::path(spec.out_dir) / "weights.json").string();
    write_weights_manifest(weights, result.weights_manifest_path);

    json manifest{{"seed", spec.seed},
                  {"utterances", spec.utterances},
                  {"frames", spec.frames},
                  {"dim", spec.dim},
                  {"vocab", spec.vocab},
                  {"total_layers", spec.total_layers},
                  {"d_ff", d_ff},
                  {"heads", spec.heads},
                  {"frame_ms", spec.frame_ms},
                  {"tail_margin", spec.tail_margin}};
    manifest["manifest_hash"] = hash_hex(fnv1a64(manifest.dump()));
    result.manifest_path = (fs::path(spec.out_dir) / "manifest.json").string();
    {
        const std::string tmp = result.manifest_path + ".tmp";
        std::ofstream os(tmp);
        if (!os) throw io_error("cannot open for write: " + tmp);
        os << manifest.dump(2) << "\n";
        os.close();
        fs::rename(tmp, result.manifest_path);
    }
    return result;
}

// ---------------------------------------------------------------------------
// simulate

namespace {

const BlockPlan& plan_of_frame(const std::vector<BlockPlan>& plans, long frame) {
    for (const auto& p : plans)
        if (frame >= p.chunk_start && frame < p.chunk_end) return p;
    throw state_error("no block chunk contains frame " + std::to_string(frame));
}

struct UttPipeline {
    std::vector<BlockPlan> plans;
    FeatureMatrix encoded;
    std::vector<BlockOutput> outputs;
    double compute_ms = 0.0;
};

UttPipeline run_pipeline(const FeatureMatrix& feats, const EngineConfig& cfg,
                         const EncoderWeights& weights) {
    UttPipeline out;
    out.plans = plan_blocks(feats.rows, cfg.block);
    out.encoded = FeatureMatrix(feats.rows, weights.d);

    BlockStream stream(cfg.block);
    LayerCache cache;
    const auto handle = [&](std::vector<BlockStream::Ready>&& ready) {
        for (auto& blk : ready) {
            const auto t0 = std::chrono::steady_clock::now();
            BlockResult res = run_block(blk.window, blk.plan, cache, cfg.spiral, weights);
            const auto t1 = std::chrono::steady_clock::now();
            out.compute_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
            for (int r = 0; r < res.output.chunk.rows; ++r) {
                const float* src = res.output.chunk.row(r);
                std::copy(src, src + weights.d,
                          out.encoded.row(static_cast<int>(blk.plan.chunk_start) + r));
            }
            cache = std::move(res.cache);
            out.outputs.push_back(std::move(res.output));
        }
    };
    for (int r = 0; r < feats.rows; ++r) handle(stream.push(feats.row_span(r)));
    handle(stream.finish());
    return out;
}

std::vector<EmissionRecord> model_emissions(const UttPipeline& pipe, const EngineConfig& cfg,
                                            const EncoderWeights& weights) {
    const FeatureMatrix logprobs = ctc_head_forward(weights, pipe.encoded);
    const std::vector<TokenEmission> tokens = greedy_decode(logprobs);
    // Word-level vocabulary: each surviving token is one word.
    std::vector<EmissionRecord> ems;
    for (const auto& tok : tokens) {
        EmissionRecord em;
        em.ctc_frame_ms = static_cast<double>(tok.frame_index + 1) * cfg.block.frame_ms;
        em.emit_wallclock_ms = plan_of_frame(pipe.plans, tok.frame_index).ready_time_ms;
        ems.push_back(em);
    }
    return ems;
}

std::vector<EmissionRecord> oracle_emissions(const UttPipeline& pipe, const EngineConfig& cfg,
                                             const AlignmentRef& ref) {
    // Reference tokens emitted by the block whose chunk holds their ground-
    // truth end frame; isolates the schedule's latency from model quality.
    std::vector<EmissionRecord> ems;
    const long total = pipe.encoded.rows;
    for (const auto& word : ref.words) {
        long end_frame = std::llround(word.end_ms / cfg.block.frame_ms) - 1;
        end_frame = std::clamp(end_frame, 0L, total - 1);
        EmissionRecord em;
        em.ctc_frame_ms = static_cast<double>(end_frame + 1) * cfg.block.frame_ms;
        em.emit_wallclock_ms = plan_of_frame(pipe.plans, end_frame).ready_time_ms;
        ems.push_back(em);
    }
    return ems;
}

void write_report_files(const RunManifest& manifest, SimResult& result) {
    const auto& agg = result.aggregate;
    json j;
    j["schema"] = "spiral-report-v1";
    j["manifest_hash"] = result.manifest_hash;
    j["seed"] = result.seed;
    j["emitter"] = manifest.emitter == Emitter::oracle ? "oracle" : "model";
    j["config"] = json::parse(manifest.config.raw_json);
    j["max_theoretical_latency_ms"] = max_theoretical_latency_ms(manifest.config.block);

    json utts = json::array();
    for (const auto& u : result.utterances) {
        json ju{{"utt_id", u.utt_id},   {"frames", u.frames},
                {"audio_ms", u.audio_ms}, {"blocks", u.blocks},
                {"layer_evals", u.layer_evals}, {"matched", u.matched}};
        if (u.matched) {
            ju["fwd_ms"] = u.delays.fwd_ms;
            ju["lwd_ms"] = u.delays.lwd_ms;
            ju["swd_mean_ms"] = u.delays.swd_mean_ms;
            ju["iwd_mean_ms"] = u.delays.iwd_mean_ms;
            ju["words"] = u.delays.swd_ms.size();
        } else {
            ju["diagnostic"] = u.diagnostic;
        }
        utts.push_back(std::move(ju));
    }
    j["per_utterance"] = std::move(utts);

    json ja{{"utterances", agg.utterances},
            {"matched", agg.matched},
            {"excluded", agg.utterances - agg.matched},
            {"layer_evals_total", agg.layer_evals_total},
            {"audio_ms_total", agg.audio_ms_total},
            {"evals_per_audio_second", agg.evals_per_audio_second}};
    const auto put_pair = [&ja](const char* key, std::optional<double> p50,
                                std::optional<double> p90) {
        if (p50 && p90) ja[key] = {{"p50", *p50}, {"p90", *p90}};
    };
    put_pair("fwd_ms", agg.fwd_p50, agg.fwd_p90);
    put_pair("lwd_ms", agg.lwd_p50, agg.lwd_p90);
    put_pair("swd_ms", agg.swd_p50, agg.swd_p90);
    put_pair("iwd_ms", agg.iwd_p50, agg.iwd_p90);
    // Wall-clock measurements; not reproducible across runs.
    ja["measured"] = {{"compute_ms_total", agg.compute_ms_total}, {"rtf", agg.rtf}};
    j["aggregate"] = std::move(ja);

    fs::create_directories(manifest.out_dir);
    result.report_json_path = (fs::path(manifest.out_dir) / "report.json").string();
    {
        const std::string tmp = result.report_json_path + ".tmp";
        std::ofstream os(tmp);
        if (!os) throw io_error("cannot open for write: " + tmp);
        os << j.dump(2) << "\n";
        os.close();
        fs::rename(tmp, result.report_json_path);
    }

    // Flat single-row CSV for cross-config charts; measured fields last.
    result.report_csv_path = (fs::path(manifest.out_dir) / "report.csv").string();
    {
        const std::string tmp = result.report_csv_path + ".tmp";
        std::ofstream os(tmp);
        if (!os) throw io_error("cannot open for write: " + tmp);
        os << "mode,n_left,n_center,n_right,frame_ms,total_layers,pitch,cache_combination,"
              "layer0_cache,emitter,seed,manifest_hash,utterances,matched,"
              "max_theoretical_latency_ms,fwd_p50,fwd_p90,lwd_p50,lwd_p90,swd_p50,swd_p90,"
              "iwd_p50,iwd_p90,layer_evals_total,evals_per_audio_second,rtf\n";
        const auto& b = manifest.config.block;
        const auto& s = manifest.config.spiral;
        const auto opt = [](std::optional<double> v) {
            return v ? json(*v).dump() : std::string();
        };
        os << (s.mode == EngineMode::spiral ? "spiral" : "baseline") << ',' << b.n_left << ','
           << b.n_center << ',' << b.n_right << ',' << json(b.frame_ms).dump() << ','
           << s.total_layers << ',' << s.pitch << ',' << (s.cache_combination ? 1 : 0) << ','
           << (s.layer0_cache ? 1 : 0) << ','
           << (manifest.emitter == Emitter::oracle ? "oracle" : "model") << ',' << result.seed
           << ',' << result.manifest_hash << ',' << agg.utterances << ',' << agg.matched << ','
           << json(max_theoretical_latency_ms(b)).dump() << ',' << opt(agg.fwd_p50) << ','
           << opt(agg.fwd_p90) << ',' << opt(agg.lwd_p50) << ',' << opt(agg.lwd_p90) << ','
           << opt(agg.swd_p50) << ',' << opt(agg.swd_p90) << ',' << opt(agg.iwd_p50) << ','
           << opt(agg.iwd_p90) << ',' << agg.layer_evals_total << ','
           << json(agg.evals_per_audio_second).dump() << ',' << json(agg.rtf).dump() << "\n";
        os.close();
        fs::rename(tmp, result.report_csv_path);
    }
}

}  // namespace

SimResult cmd_simulate(const RunManifest& manifest) {
    const EngineConfig& cfg = manifest.config;
    const EncoderWeights weights = load_weights(manifest.weights_path);
    if (weights.total_layers() != cfg.spiral.total_layers)
        throw config_error("simulate: config total_layers does not match the weight file");

    const auto align_list = load_alignments(manifest.align_path);
    std::map<std::string, const AlignmentRef*> align_by_id;
    for (const auto& a : align_list) align_by_id[a.utt_id] = &a;

    SimResult result;
    result.manifest_hash = manifest.hash();
    result.seed = manifest.seed;

    std::vector<double> fwd, lwd, swd, iwd;
    for (const std::string& path : list_feature_files(manifest.features_dir)) {
        UttSim utt;
        utt.utt_id = fs::path(path).stem().string();
        const FeatureMatrix feats = load_features(path);
        utt.frames = feats.rows;
        utt.audio_ms = static_cast<double>(feats.rows) * cfg.block.frame_ms;

        const UttPipeline pipe = run_pipeline(feats, cfg, weights);
        utt.blocks = static_cast<int>(pipe.outputs.size());
        for (const auto& b : pipe.outputs) utt.layer_evals += b.layer_evals;
        utt.compute_ms = pipe.compute_ms;

        const auto it = align_by_id.find(utt.utt_id);
        if (it == align_by_id.end()) {
            utt.diagnostic = "no alignment reference for this utterance";
        } else {
            const AlignmentRef& ref = *it->second;
            const std::vector<EmissionRecord> ems =
                manifest.emitter == Emitter::oracle ? oracle_emissions(pipe, cfg, ref)
                                                    : model_emissions(pipe, cfg, weights);
            if (ems.size() != ref.words.size()) {
                utt.diagnostic = "word count mismatch: emitted " + std::to_string(ems.size()) +
                                 ", reference " + std::to_string(ref.words.size());
            } else {
                utt.delays = word_delays(ems, ref);
                utt.matched = true;
                fwd.push_back(utt.delays.fwd_ms);
                lwd.push_back(utt.delays.lwd_ms);
                swd.push_back(utt.delays.swd_mean_ms);
                iwd.push_back(utt.delays.iwd_mean_ms);
            }
        }

        result.aggregate.utterances += 1;
        result.aggregate.matched += utt.matched ? 1 : 0;
        result.aggregate.layer_evals_total += utt.layer_evals;
        result.aggregate.audio_ms_total += utt.audio_ms;
        result.aggregate.compute_ms_total += utt.compute_ms;
        result.utterances.push_back(std::move(utt));
    }

    auto& agg = result.aggregate;
    if (agg.audio_ms_total > 0.0) {
        agg.evals_per_audio_second =
            static_cast<double>(agg.layer_evals_total) / (agg.audio_ms_total / 1000.0);
        agg.rtf = agg.compute_ms_total / agg.audio_ms_total;
    }
    if (!swd.empty()) {
        agg.fwd_p50 = percentile(fwd, 50);
        agg.fwd_p90 = percentile(fwd, 90);
        agg.lwd_p50 = percentile(lwd, 50);
        agg.lwd_p90 = percentile(lwd, 90);
        agg.swd_p50 = percentile(swd, 50);
        agg.swd_p90 = percentile(swd, 90);
        agg.iwd_p50 = percentile(iwd, 50);
        agg.iwd_p90 = percentile(iwd, 90);
    }

    write_report_files(manifest, result);
    return result;
}

// ---------------------------------------------------------------------------
// loss

LossResult cmd_loss(const LossSpec& spec) {
    const EngineConfig& cfg = spec.config;
    const EncoderWeights weights = load_weights(spec.weights_path);
    if (weights.total_layers() != cfg.spiral.total_layers)
        throw config_error("loss: config total_layers does not match the weight file");

    const auto transcripts = load_transcripts(spec.transcripts_path);
    std::map<std::string, const Transcript*> by_id;
    for (const auto& t : transcripts) by_id[t.utt_id] = &t;

    const int shifts = cfg.spiral.mode == EngineMode::spiral ? cfg.spiral.pitch : 0;
    LossResult result;
    result.total_per_shift.assign(static_cast<size_t>(shifts), 0.0);

    for (const std::string& path : list_feature_files(spec.features_dir)) {
        UttLoss utt;
        utt.utt_id = fs::path(path).stem().string();
        const auto it = by_id.find(utt.utt_id);
        if (it == by_id.end()) throw io_error("loss: no transcript for " + utt.utt_id);

        const FeatureMatrix feats = load_features(path);
        const UtteranceResult enc = run_utterance(feats, cfg.block, cfg.spiral, weights, true);
        utt.loss = combined_loss(enc.per_shift, enc.encoded, it->second->tokens, weights);
        utt.alignable = std::isfinite(utt.loss.total);
        if (utt.alignable) {
            result.total_full += utt.loss.loss_full;
            for (size_t s = 0; s < utt.loss.loss_per_shift.size(); ++s)
                result.total_per_shift[s] += utt.loss.loss_per_shift[s];
            result.total += utt.loss.total;
        } else {
            result.skipped += 1;
        }
        result.utterances.push_back(std::move(utt));
    }
    return result;
}

}  // namespace spiral
