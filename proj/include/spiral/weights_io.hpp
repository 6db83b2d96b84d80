#pragma once

#include <string>

#include "spiral/encoder.hpp"

namespace spiral {

// SPWT weight file: little-endian, header = magic "SPWT", version u32,
// total_layers u32, d u32, d_ff u32, heads u32, vocab u32, then per layer
// q/k/v/o projections (matrix then bias each), ffn w1/b1/w2/b2, norm1
// scale/offset, norm2 scale/offset, and finally the shared CTC head
// (matrix then bias), all as f32 arrays.
void save_weights(const EncoderWeights& w, const std::string& path);
EncoderWeights load_weights(const std::string& path);

// JSON manifest mirroring the SPWT header, for inspection.
void write_weights_manifest(const EncoderWeights& w, const std::string& path);

}  // namespace spiral
