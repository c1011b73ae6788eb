#include "zfda/delta.hpp"

#include <cmath>

#include "zfda/io_util.hpp"

namespace zfda {

int64_t DeltaPatch::entry_count() const {
    int64_t n = 0;
    for (const DeltaLayer& l : layers) n += static_cast<int64_t>(l.entries.size());
    return n;
}

std::vector<uint8_t> encode_patch(const DeltaPatch& patch) {
    ByteWriter w;
    w.magic("ZFDP");
    w.u16(1);
    w.u16(0);
    w.raw(patch.model_digest.data(), patch.model_digest.size());
    w.f64(patch.gamma);
    w.u32(static_cast<uint32_t>(patch.layers.size()));
    for (const DeltaLayer& l : patch.layers) {
        w.u32(l.layer_id);
        w.u64(l.entries.size());
        for (const DeltaEntry& e : l.entries) {
            w.u32(e.index);
            w.f32(e.adapted);
            w.f32(e.original);
        }
    }
    return w.bytes();
}

DeltaPatch decode_patch(const std::vector<uint8_t>& bytes, const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("ZFDP");
    const uint16_t version = r.u16();
    if (version != 1) throw DataError(what + ": unsupported version " + std::to_string(version));
    const uint16_t flags = r.u16();
    if (flags != 0) throw DataError(what + ": unknown flags " + std::to_string(flags));
    DeltaPatch patch;
    const uint8_t* dg = r.raw(32);
    std::copy(dg, dg + 32, patch.model_digest.begin());
    patch.gamma = r.f64();
    if (!std::isfinite(patch.gamma) || patch.gamma <= 0.0 || patch.gamma > 1.0)
        throw DataError(what + ": gamma out of (0,1]");
    const uint32_t layer_count = r.u32();
    int64_t prev_layer = -1;
    for (uint32_t li = 0; li < layer_count; ++li) {
        DeltaLayer dl;
        dl.layer_id = r.u32();
        if (static_cast<int64_t>(dl.layer_id) <= prev_layer)
            throw DataError(what + ": layer ids must be strictly increasing");
        prev_layer = dl.layer_id;
        const uint64_t count = r.u64();
        if (count > r.remaining() / 12)
            throw DataError(what + ": entry count " + std::to_string(count) + " exceeds file size");
        dl.entries.resize(count);
        int64_t prev_index = -1;
        for (uint64_t i = 0; i < count; ++i) {
            DeltaEntry& e = dl.entries[i];
            e.index = r.u32();
            e.adapted = r.f32();
            e.original = r.f32();
            if (static_cast<int64_t>(e.index) <= prev_index)
                throw DataError(what + ": layer " + std::to_string(dl.layer_id) +
                                ": entry indices must be sorted ascending and unique");
            prev_index = e.index;
        }
        patch.layers.push_back(std::move(dl));
    }
    r.expect_eof();
    return patch;
}

void export_patch(const DeltaPatch& patch, const ModelParams& pristine, const std::string& path) {
    if (!verify_digest(pristine, patch))
        throw DigestError("export_patch: patch was not extracted from this model (digest mismatch)");
    validate_patch_layout(patch, pristine);
    write_file_bytes(path, encode_patch(patch));
}

DeltaPatch load_patch(const std::string& path) { return decode_patch(read_file_bytes(path), path); }

void validate_patch_layout(const DeltaPatch& patch, const ModelParams& model) {
    const int64_t enc_count = static_cast<int64_t>(model.encoder.size());
    const int64_t total = enc_count + static_cast<int64_t>(model.decoder.size());
    for (const DeltaLayer& l : patch.layers) {
        const int64_t id = static_cast<int64_t>(l.layer_id);
        if (id >= total)
            throw DataError("patch: layer id " + std::to_string(id) + " out of range (model has " +
                            std::to_string(total) + " layers)");
        const LayerSpec& spec = id < enc_count ? model.encoder[id] : model.decoder[id - enc_count];
        const int64_t pk = spec.param_count();
        if (pk == 0 && !l.entries.empty())
            throw DataError("patch: layer " + std::to_string(id) + " (" + spec.describe() + ") has no parameters");
        if (!l.entries.empty() && static_cast<int64_t>(l.entries.back().index) >= pk)
            throw DataError("patch: layer " + std::to_string(id) + ": index " +
                            std::to_string(l.entries.back().index) + " out of range (p_k=" + std::to_string(pk) + ")");
    }
}

bool verify_digest(const ModelParams& params, const DeltaPatch& patch) {
    return model_digest(params) == patch.model_digest;
}

namespace {

enum class Overwrite { Adapted, Original };

ModelParams overwrite_entries(const ModelParams& params, const DeltaPatch& patch, Overwrite mode) {
    validate_patch_layout(patch, params);
    ModelParams out = params;
    const int64_t enc_count = static_cast<int64_t>(out.encoder.size());
    for (const DeltaLayer& l : patch.layers) {
        const int64_t id = static_cast<int64_t>(l.layer_id);
        Tensor& t = id < enc_count ? out.enc_params[id] : out.dec_params[id - enc_count];
        for (const DeltaEntry& e : l.entries)
            t.data[e.index] = mode == Overwrite::Adapted ? e.adapted : e.original;
    }
    return out;
}

}  // namespace

ModelParams apply_patch(const ModelParams& params, const DeltaPatch& patch) {
    if (!verify_digest(params, patch))
        throw DigestError("apply_patch: parameter digest does not match the patch's pristine digest");
    return overwrite_entries(params, patch, Overwrite::Adapted);
}

ModelParams revert_patch(const ModelParams& params, const DeltaPatch& patch) {
    ModelParams out = overwrite_entries(params, patch, Overwrite::Original);
    if (!verify_digest(out, patch))
        throw DigestError(
            "revert_patch: post-restore digest mismatch (parameters were modified outside the patch)");
    return out;
}

}  // namespace zfda
