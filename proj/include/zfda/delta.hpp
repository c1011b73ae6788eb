#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zfda/digest.hpp"
#include "zfda/model.hpp"

namespace zfda {

// One touched parameter: flat index within the layer's parameter tensor plus
// the adapted and original f32 values. Restoration overwrites with the stored
// original instead of subtracting, because float add-then-subtract is not
// exactly invertible; that is what makes the zero-forget guarantee bit-exact.
struct DeltaEntry {
    uint32_t index = 0;
    float adapted = 0.0f;
    float original = 0.0f;
};

struct DeltaLayer {
    uint32_t layer_id = 0;  // index into encoder layers then decoder layers
    std::vector<DeltaEntry> entries;  // sorted ascending by index, unique
};

// Sparse, digest-stamped parameter patch (.zfp). Every parameterized layer
// appears, possibly with zero entries.
struct DeltaPatch {
    Sha256 model_digest{};
    double gamma = 0.0;
    std::vector<DeltaLayer> layers;

    int64_t entry_count() const;
};

// .zfp layout, all integers little-endian: magic "ZFDP", version u16=1,
// flags u16=0, model-digest 32 bytes, gamma f64, layer-count u32; per layer:
// layer-id u32, entry-count u64, then entry-count records of
// (index u32, adapted f32, original f32).
std::vector<uint8_t> encode_patch(const DeltaPatch& patch);
DeltaPatch decode_patch(const std::vector<uint8_t>& bytes, const std::string& what);

// Writes the patch after verifying it was extracted from this pristine model.
void export_patch(const DeltaPatch& patch, const ModelParams& pristine, const std::string& path);

// Structural validation only (magic, version, sortedness, uniqueness,
// counts); index ranges are checked against a model at apply/revert time.
DeltaPatch load_patch(const std::string& path);

// Throws DataError when the patch does not fit the model's layer layout.
void validate_patch_layout(const DeltaPatch& patch, const ModelParams& model);

bool verify_digest(const ModelParams& params, const DeltaPatch& patch);

// Overwrites touched indices with the stored adapted values. Requires the
// digest of `params` to equal the patch digest.
ModelParams apply_patch(const ModelParams& params, const DeltaPatch& patch);

// Overwrites touched indices with the stored originals and verifies that the
// result digests back to the patch's model digest.
ModelParams revert_patch(const ModelParams& params, const DeltaPatch& patch);

}  // namespace zfda
