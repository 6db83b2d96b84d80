#include "spiral/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace spiral {

WordDelays word_delays(std::span<const EmissionRecord> emissions, const AlignmentRef& ref) {
    if (emissions.size() != ref.words.size())
        throw config_error("word_delays: emission word count " + std::to_string(emissions.size()) +
                           " does not match reference word count " +
                           std::to_string(ref.words.size()));
    if (emissions.empty()) throw config_error("word_delays: no words to score");

    WordDelays out;
    double swd_sum = 0.0;
    double iwd_sum = 0.0;
    for (size_t i = 0; i < emissions.size(); ++i) {
        const double swd = emissions[i].emit_wallclock_ms - ref.words[i].end_ms;
        const double iwd = emissions[i].ctc_frame_ms - ref.words[i].end_ms;
        out.swd_ms.push_back(swd);
        out.iwd_ms.push_back(iwd);
        swd_sum += swd;
        iwd_sum += iwd;
    }
    out.fwd_ms = out.swd_ms.front();
    out.lwd_ms = out.swd_ms.back();
    out.swd_mean_ms = swd_sum / static_cast<double>(emissions.size());
    out.iwd_mean_ms = iwd_sum / static_cast<double>(emissions.size());
    return out;
}

double max_theoretical_latency_ms(const BlockConfig& cfg) {
    cfg.validate();
    return static_cast<double>(cfg.n_center + cfg.n_right) * cfg.frame_ms;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw config_error("percentile: empty input");
    if (q <= 0.0 || q > 100.0) throw config_error("percentile: q must be in (0, 100]");
    std::sort(values.begin(), values.end());
    const size_t rank = static_cast<size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
    return values[std::max<size_t>(rank, 1) - 1];
}

ComputeAccounting compute_accounting(std::span<const BlockOutput> blocks, double audio_ms,
                                     std::optional<double> measured_compute_ms) {
    if (blocks.empty()) throw config_error("compute_accounting: no block outputs");
    ComputeAccounting acc;
    for (const auto& b : blocks) acc.layer_evals_total += b.layer_evals;
    if (audio_ms > 0.0)
        acc.evals_per_audio_second = static_cast<double>(acc.layer_evals_total) / (audio_ms / 1000.0);
    if (measured_compute_ms) acc.rtf = *measured_compute_ms / audio_ms;
    return acc;
}

std::vector<AlignmentRef> load_alignments(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open alignment file: " + path);
    std::vector<AlignmentRef> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw io_error("bad JSON line in alignment file: " + path);
        AlignmentRef ref;
        ref.utt_id = j.at("utt_id").get<std::string>();
        for (const auto& w : j.at("words")) {
            WordRef word;
            word.text = w.at("text").get<std::string>();
            word.start_ms = w.at("start_ms").get<double>();
            word.end_ms = w.at("end_ms").get<double>();
            if (word.start_ms < 0.0 || word.end_ms < word.start_ms)
                throw io_error("alignment times out of order for " + ref.utt_id);
            ref.words.push_back(std::move(word));
        }
        out.push_back(std::move(ref));
    }
    return out;
}

void save_alignments(std::span<const AlignmentRef> refs, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw io_error("cannot open for write: " + tmp);
        for (const auto& ref : refs) {
            nlohmann::json words = nlohmann::json::array();
            for (const auto& w : ref.words)
                words.push_back(
                    {{"text", w.text}, {"start_ms", w.start_ms}, {"end_ms", w.end_ms}});
            nlohmann::json j{{"utt_id", ref.utt_id}, {"words", words}};
            os << j.dump() << "\n";
        }
        if (!os) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace spiral
