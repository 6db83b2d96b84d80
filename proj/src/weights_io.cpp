#include "spiral/weights_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace spiral {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'W', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32s(std::ostream& os, const float* p, size_t n) {
    // Little-endian hosts write in place; this tool targets such hosts only.
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
}

void get_f32s(std::istream& is, float* p, size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw io_error("weight file truncated");
}

void put_vec(std::ostream& os, const std::vector<float>& v) { put_f32s(os, v.data(), v.size()); }
void put_mat(std::ostream& os, const FeatureMatrix& m) { put_f32s(os, m.data.data(), m.data.size()); }

void get_vec(std::istream& is, std::vector<float>& v, size_t n) {
    v.resize(n);
    get_f32s(is, v.data(), n);
}

void get_mat(std::istream& is, FeatureMatrix& m, int rows, int cols) {
    m = FeatureMatrix(rows, cols);
    get_f32s(is, m.data.data(), m.data.size());
}

void check_finite(const EncoderWeights& w) {
    for (const auto& l : w.layers) {
        for (const FeatureMatrix* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2})
            if (!all_finite(*m)) throw io_error("weight file contains non-finite values");
    }
    if (!all_finite(w.ctc_w)) throw io_error("weight file contains non-finite values");
}

}  // namespace

void save_weights(const EncoderWeights& w, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw io_error("cannot open for write: " + tmp);
        os.write(kMagic, 4);
        put_u32(os, kVersion);
        put_u32(os, static_cast<uint32_t>(w.total_layers()));
        put_u32(os, static_cast<uint32_t>(w.d));
        put_u32(os, static_cast<uint32_t>(w.d_ff));
        put_u32(os, static_cast<uint32_t>(w.heads));
        put_u32(os, static_cast<uint32_t>(w.vocab));
        for (const auto& l : w.layers) {
            put_mat(os, l.wq);
            put_vec(os, l.bq);
            put_mat(os, l.wk);
            put_vec(os, l.bk);
            put_mat(os, l.wv);
            put_vec(os, l.bv);
            put_mat(os, l.wo);
            put_vec(os, l.bo);
            put_mat(os, l.w1);
            put_vec(os, l.b1);
            put_mat(os, l.w2);
            put_vec(os, l.b2);
            put_vec(os, l.norm1_scale);
            put_vec(os, l.norm1_offset);
            put_vec(os, l.norm2_scale);
            put_vec(os, l.norm2_offset);
        }
        put_mat(os, w.ctc_w);
        put_vec(os, w.ctc_b);
        if (!os) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

EncoderWeights load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open weight file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw io_error("not a SPWT weight file: " + path);
    const uint32_t version = get_u32(is);
    if (version != kVersion) throw io_error("unsupported SPWT version");
    const int total_layers = static_cast<int>(get_u32(is));
    const int d = static_cast<int>(get_u32(is));
    const int d_ff = static_cast<int>(get_u32(is));
    const int heads = static_cast<int>(get_u32(is));
    const int vocab = static_cast<int>(get_u32(is));
    if (total_layers < 1 || d < 1 || d_ff < 1 || heads < 1 || vocab < 1 || d % heads != 0)
        throw io_error("SPWT header has invalid dimensions");

    EncoderWeights w;
    w.d = d;
    w.d_ff = d_ff;
    w.heads = heads;
    w.vocab = vocab;
    w.layers.resize(total_layers);
    for (auto& l : w.layers) {
        l.d = d;
        l.d_ff = d_ff;
        l.heads = heads;
        get_mat(is, l.wq, d, d);
        get_vec(is, l.bq, d);
        get_mat(is, l.wk, d, d);
        get_vec(is, l.bk, d);
        get_mat(is, l.wv, d, d);
        get_vec(is, l.bv, d);
        get_mat(is, l.wo, d, d);
        get_vec(is, l.bo, d);
        get_mat(is, l.w1, d, d_ff);
        get_vec(is, l.b1, d_ff);
        get_mat(is, l.w2, d_ff, d);
        get_vec(is, l.b2, d);
        get_vec(is, l.norm1_scale, d);
        get_vec(is, l.norm1_offset, d);
        get_vec(is, l.norm2_scale, d);
        get_vec(is, l.norm2_offset, d);
    }
    get_mat(is, w.ctc_w, d, vocab + 1);
    get_vec(is, w.ctc_b, vocab + 1);
    check_finite(w);
    return w;
}

void write_weights_manifest(const EncoderWeights& w, const std::string& path) {
    nlohmann::json j{{"magic", "SPWT"},
                     {"version", kVersion},
                     {"total_layers", w.total_layers()},
                     {"d", w.d},
                     {"d_ff", w.d_ff},
                     {"heads", w.heads},
                     {"vocab", w.vocab}};
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw io_error("cannot open for write: " + tmp);
        os << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace spiral
