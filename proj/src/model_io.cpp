#include "zfda/model_io.hpp"

#include <limits>

#include "zfda/io_util.hpp"

namespace zfda {

namespace {

constexpr uint8_t kDecoderFlag = 0x80;

void encode_layer(ByteWriter& w, const LayerSpec& s, const Tensor& params, bool decoder_side) {
    w.u8(static_cast<uint8_t>(s.kind) | (decoder_side ? kDecoderFlag : 0));
    std::vector<uint32_t> dims;
    switch (s.kind) {
        case LayerKind::Dense:
            dims = {static_cast<uint32_t>(s.in), static_cast<uint32_t>(s.out), s.has_bias ? 1u : 0u};
            break;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D:
            dims = {static_cast<uint32_t>(s.in),     static_cast<uint32_t>(s.out), static_cast<uint32_t>(s.kh),
                    static_cast<uint32_t>(s.kw),     static_cast<uint32_t>(s.stride),
                    static_cast<uint32_t>(s.pad),    static_cast<uint32_t>(s.in_h),
                    static_cast<uint32_t>(s.in_w),   s.has_bias ? 1u : 0u};
            break;
        default:
            break;
    }
    w.u8(static_cast<uint8_t>(dims.size()));
    for (uint32_t d : dims) w.u32(d);
    w.u64(static_cast<uint64_t>(params.numel()));
    for (float f : params.data) w.f32(f);
}

struct DecodedLayer {
    LayerSpec spec;
    Tensor params;
    bool decoder_side = false;
};

DecodedLayer decode_layer(ByteReader& r, const std::string& what, size_t index) {
    DecodedLayer out;
    const uint8_t code = r.u8();
    out.decoder_side = (code & kDecoderFlag) != 0;
    const uint8_t kind_code = code & static_cast<uint8_t>(~kDecoderFlag);
    if (kind_code < 1 || kind_code > 5)
        throw DataError(what + ": layer " + std::to_string(index) + ": unknown kind code " + std::to_string(code));
    const LayerKind kind = static_cast<LayerKind>(kind_code);
    const uint8_t ndims = r.u8();
    std::vector<uint32_t> dims(ndims);
    for (auto& d : dims) d = r.u32();

    LayerSpec s;
    s.kind = kind;
    auto fail = [&](const std::string& msg) {
        throw DataError(what + ": layer " + std::to_string(index) + " (" + layer_kind_name(kind) + "): " + msg);
    };
    switch (kind) {
        case LayerKind::Dense:
            if (ndims != 3) fail("expected 3 dims, got " + std::to_string(ndims));
            if (dims[0] == 0 || dims[1] == 0) fail("zero width");
            if (dims[2] > 1) fail("has_bias flag must be 0 or 1");
            s.in = dims[0];
            s.out = dims[1];
            s.has_bias = dims[2] == 1;
            break;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D:
            if (ndims != 9) fail("expected 9 dims, got " + std::to_string(ndims));
            if (dims[0] == 0 || dims[1] == 0) fail("zero channel count");
            if (dims[2] == 0 || dims[3] == 0) fail("zero kernel size");
            if (dims[4] == 0) fail("zero stride");
            if (dims[6] == 0 || dims[7] == 0) fail("unresolved input spatial size");
            if (dims[8] > 1) fail("has_bias flag must be 0 or 1");
            s.in = dims[0];
            s.out = dims[1];
            s.kh = dims[2];
            s.kw = dims[3];
            s.stride = dims[4];
            s.pad = dims[5];
            s.in_h = dims[6];
            s.in_w = dims[7];
            s.has_bias = dims[8] == 1;
            break;
        default:
            if (ndims != 0) fail("activation layers carry no dims");
            s.has_bias = false;
            break;
    }
    const uint64_t pcount = r.u64();
    if (pcount != static_cast<uint64_t>(s.param_count()))
        fail("param count " + std::to_string(pcount) + " != expected " + std::to_string(s.param_count()));
    if (pcount > 0) {
        Tensor t({static_cast<int64_t>(pcount)});
        for (uint64_t i = 0; i < pcount; ++i) t.data[i] = r.f32();
        ensure_finite(t.data, what + ": layer " + std::to_string(index) + " params");
        out.params = std::move(t);
    }
    out.spec = s;
    return out;
}

}  // namespace

std::vector<uint8_t> encode_model(const ModelParams& model) {
    ByteWriter w;
    w.magic("ZFDM");
    w.u16(1);
    w.u32(static_cast<uint32_t>(model.encoder.size() + model.decoder.size()));
    for (size_t k = 0; k < model.encoder.size(); ++k) encode_layer(w, model.encoder[k], model.enc_params[k], false);
    for (size_t k = 0; k < model.decoder.size(); ++k) encode_layer(w, model.decoder[k], model.dec_params[k], true);
    return w.bytes();
}

ModelParams decode_model(const std::vector<uint8_t>& bytes, const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("ZFDM");
    const uint16_t version = r.u16();
    if (version != 1) throw DataError(what + ": unsupported version " + std::to_string(version));
    const uint32_t layer_count = r.u32();
    if (layer_count == 0) throw DataError(what + ": zero layers");
    ModelParams m;
    bool seen_decoder = false;
    for (uint32_t k = 0; k < layer_count; ++k) {
        DecodedLayer dl = decode_layer(r, what, k);
        if (dl.decoder_side) {
            seen_decoder = true;
            m.decoder.push_back(dl.spec);
            m.dec_params.push_back(std::move(dl.params));
        } else {
            if (seen_decoder) throw DataError(what + ": encoder layer after decoder layers");
            m.encoder.push_back(dl.spec);
            m.enc_params.push_back(std::move(dl.params));
        }
    }
    r.expect_eof();
    if (m.encoder.empty()) throw DataError(what + ": no encoder layers");
    const LayerSpec& first = m.encoder.front();
    switch (first.kind) {
        case LayerKind::Dense:
            m.input_shape = {first.in};
            break;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D:
            m.input_shape = {first.in, first.in_h, first.in_w};
            break;
        default:
            throw DataError(what + ": first encoder layer must be parameterized to fix the input shape");
    }
    try {
        m.finalize();
    } catch (const ShapeError& e) {
        throw DataError(what + ": inconsistent layer chain: " + e.what());
    }
    return m;
}

void write_model(const ModelParams& model, const std::string& path) { write_file_bytes(path, encode_model(model)); }

ModelParams read_model(const std::string& path) { return decode_model(read_file_bytes(path), path); }

}  // namespace zfda
