#pragma once

#include <string>
#include <vector>

#include "zfda/model.hpp"

namespace zfda {

// .zfm checkpoint: magic "ZFDM", version u16=1, layer-count u32, then per
// layer: kind code u8, dim-count u8, dims u32[] LE, param-count u64, params
// f32[] LE row-major. Encoder layers come first; decoder layers set the high
// bit (0x80) of the kind code. Kind codes: Dense=1, Conv2D=2,
// ConvTranspose2D=3, ReLU=4, Sigmoid=5.
//
// Dims per kind: Dense [in, out, has_bias]; Conv2D/ConvTranspose2D
// [in, out, kh, kw, stride, pad, in_h, in_w, has_bias]; activations [].

std::vector<uint8_t> encode_model(const ModelParams& model);
ModelParams decode_model(const std::vector<uint8_t>& bytes, const std::string& what);

void write_model(const ModelParams& model, const std::string& path);
ModelParams read_model(const std::string& path);

}  // namespace zfda
