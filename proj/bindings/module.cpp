#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spiral/ctc.hpp"
#include "spiral/engine.hpp"
#include "spiral/harness.hpp"
#include "spiral/metrics.hpp"
#include "spiral/weights_io.hpp"

namespace py = pybind11;
using namespace spiral;

namespace {

FeatureMatrix matrix_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw config_error("expected a 2-D float array");
    FeatureMatrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + m.data.size(), m.data.begin());
    return m;
}

py::array_t<float> array_from_matrix(const FeatureMatrix& m) {
    py::array_t<float> arr({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Streaming blockwise encoder with circular layer skipping and early exit";

    py::register_exception<config_error>(m, "ConfigError");
    py::register_exception<state_error>(m, "StateError");

    py::class_<BlockConfig>(m, "BlockConfig")
        .def(py::init([](int n_left, int n_center, int n_right, double frame_ms) {
                 BlockConfig c{n_left, n_center, n_right, frame_ms};
                 c.validate();
                 return c;
             }),
             py::arg("n_left"), py::arg("n_center"), py::arg("n_right"), py::arg("frame_ms") = 40.0)
        .def_readonly("n_left", &BlockConfig::n_left)
        .def_readonly("n_center", &BlockConfig::n_center)
        .def_readonly("n_right", &BlockConfig::n_right)
        .def_readonly("frame_ms", &BlockConfig::frame_ms)
        .def("window_len", &BlockConfig::window_len);

    py::class_<BlockPlan>(m, "BlockPlan")
        .def_readonly("block_index", &BlockPlan::block_index)
        .def_readonly("window_start", &BlockPlan::window_start)
        .def_readonly("window_end", &BlockPlan::window_end)
        .def_readonly("chunk_start", &BlockPlan::chunk_start)
        .def_readonly("chunk_end", &BlockPlan::chunk_end)
        .def_readonly("pad_left", &BlockPlan::pad_left)
        .def_readonly("ready_time_ms", &BlockPlan::ready_time_ms)
        .def_readonly("is_final", &BlockPlan::is_final);

    py::class_<SpiralConfig>(m, "SpiralConfig")
        .def(py::init([](int total_layers, int pitch, bool cache_combination, bool layer0_cache,
                         const std::string& mode) {
                 SpiralConfig c;
                 c.total_layers = total_layers;
                 c.pitch = pitch;
                 c.cache_combination = cache_combination;
                 c.layer0_cache = layer0_cache;
                 if (mode == "spiral")
                     c.mode = EngineMode::spiral;
                 else if (mode == "baseline")
                     c.mode = EngineMode::baseline;
                 else
                     throw config_error("mode must be 'spiral' or 'baseline'");
                 c.validate();
                 return c;
             }),
             py::arg("total_layers"), py::arg("pitch"), py::arg("cache_combination") = true,
             py::arg("layer0_cache") = false, py::arg("mode") = "spiral")
        .def_readonly("total_layers", &SpiralConfig::total_layers)
        .def_readonly("pitch", &SpiralConfig::pitch)
        .def_readonly("cache_combination", &SpiralConfig::cache_combination)
        .def_readonly("layer0_cache", &SpiralConfig::layer0_cache);

    py::class_<EncoderWeights>(m, "EncoderWeights")
        .def_property_readonly("total_layers", &EncoderWeights::total_layers)
        .def_readonly("d", &EncoderWeights::d)
        .def_readonly("d_ff", &EncoderWeights::d_ff)
        .def_readonly("heads", &EncoderWeights::heads)
        .def_readonly("vocab", &EncoderWeights::vocab);

    py::class_<BlockOutput>(m, "BlockOutput")
        .def_readonly("block_index", &BlockOutput::block_index)
        .def_readonly("shift", &BlockOutput::shift)
        .def_readonly("exit_layer", &BlockOutput::exit_layer)
        .def_readonly("layer_evals", &BlockOutput::layer_evals)
        .def_property_readonly("chunk",
                               [](const BlockOutput& b) { return array_from_matrix(b.chunk); });

    py::class_<TokenEmission>(m, "TokenEmission")
        .def_readonly("token_id", &TokenEmission::token_id)
        .def_readonly("frame_index", &TokenEmission::frame_index)
        .def_readonly("block_index", &TokenEmission::block_index);

    m.def("shift_index", &shift_index, py::arg("block_index"), py::arg("pitch"));
    m.def("computed_layers", &computed_layers, py::arg("shift"), py::arg("total_layers"),
          py::arg("pitch"));
    m.def("exit_layer", &exit_layer, py::arg("shift"), py::arg("total_layers"), py::arg("pitch"));
    m.def("max_theoretical_latency_ms", &max_theoretical_latency_ms, py::arg("cfg"));
    m.def("plan_blocks", &plan_blocks, py::arg("total_frames"), py::arg("cfg"));
    m.def("percentile", &percentile, py::arg("values"), py::arg("q"));

    m.def("random_weights", &random_weights, py::arg("seed"), py::arg("total_layers"),
          py::arg("d"), py::arg("d_ff"), py::arg("heads"), py::arg("vocab"));
    m.def("load_weights", &load_weights, py::arg("path"));
    m.def("save_weights", &save_weights, py::arg("weights"), py::arg("path"));

    m.def(
        "layer_forward",
        [](const EncoderWeights& w, int layer_index, const py::array_t<float>& input) {
            if (layer_index < 1 || layer_index > w.total_layers())
                throw config_error("layer index out of range");
            return array_from_matrix(
                layer_forward(w.layers[layer_index - 1], matrix_from_array(input), layer_index));
        },
        py::arg("weights"), py::arg("layer_index"), py::arg("input"));
    m.def(
        "add_positional_encoding",
        [](const py::array_t<float>& input, long start_frame) {
            return array_from_matrix(add_positional_encoding(matrix_from_array(input), start_frame));
        },
        py::arg("input"), py::arg("absolute_start_frame"));
    m.def(
        "ctc_head_forward",
        [](const EncoderWeights& w, const py::array_t<float>& encoded) {
            return array_from_matrix(ctc_head_forward(w, matrix_from_array(encoded)));
        },
        py::arg("weights"), py::arg("encoded"));

    m.def(
        "run_utterance",
        [](const py::array_t<float>& features, const BlockConfig& bcfg, const SpiralConfig& scfg,
           const EncoderWeights& weights, bool capture_shifts) {
            const auto result =
                run_utterance(matrix_from_array(features), bcfg, scfg, weights, capture_shifts);
            py::list per_shift;
            for (const auto& h : result.per_shift) per_shift.append(array_from_matrix(h));
            return py::make_tuple(array_from_matrix(result.encoded), result.blocks, per_shift);
        },
        py::arg("features"), py::arg("bcfg"), py::arg("scfg"), py::arg("weights"),
        py::arg("capture_shifts") = false,
        "Returns (encoded, block_outputs, per_shift_outputs)");

    m.def(
        "trace_dependencies",
        [](int block_index, const BlockConfig& bcfg, const SpiralConfig& scfg) {
            py::set cells;
            for (const auto& [layer, frame] : trace_dependencies(block_index, bcfg, scfg))
                cells.add(py::make_tuple(layer, frame));
            return cells;
        },
        py::arg("block_index"), py::arg("bcfg"), py::arg("scfg"));

    m.def(
        "greedy_decode",
        [](const py::array_t<float>& logprobs) { return greedy_decode(matrix_from_array(logprobs)); },
        py::arg("logprobs"));
    m.def(
        "ctc_loss",
        [](const py::array_t<float>& logprobs, const std::vector<int>& target) {
            return ctc_loss(matrix_from_array(logprobs), target);
        },
        py::arg("logprobs"), py::arg("target"));
    m.def(
        "ctc_loss_grad",
        [](const py::array_t<float>& logits, const std::vector<int>& target) {
            const auto result = ctc_loss_grad(matrix_from_array(logits), target);
            return py::make_tuple(result.loss, array_from_matrix(result.grad));
        },
        py::arg("logits"), py::arg("target"), "Returns (loss, grad)");
    m.def(
        "combined_loss",
        [](const std::vector<py::array_t<float>>& per_shift, const py::array_t<float>& full,
           const std::vector<int>& target, const EncoderWeights& weights) {
            std::vector<FeatureMatrix> shifts;
            shifts.reserve(per_shift.size());
            for (const auto& arr : per_shift) shifts.push_back(matrix_from_array(arr));
            const auto result = combined_loss(shifts, matrix_from_array(full), target, weights);
            return py::make_tuple(result.total, result.loss_full, result.loss_per_shift);
        },
        py::arg("per_shift"), py::arg("full"), py::arg("target"), py::arg("weights"),
        "Returns (total, loss_full, loss_per_shift)");

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
