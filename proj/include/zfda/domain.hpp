#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zfda/dataio.hpp"
#include "zfda/model.hpp"
#include "zfda/tensor.hpp"

namespace zfda {

enum class TransformKind { None, VariedAngle, VariedPerspective, VariedContrast, VariedHue };

// Pixel-space domain variation. `param` is degrees for VariedAngle and
// VariedHue, a corner-shift fraction in [0, 0.5) for VariedPerspective and a
// contrast factor > 0 for VariedContrast.
struct Transform {
    TransformKind kind = TransformKind::None;
    double param = 0.0;
};

TransformKind parse_transform_kind(const std::string& name);
const char* transform_kind_name(TransformKind kind);
// Default parameters: 30 deg angle, 0.2 corner shift, 1.8 contrast, 60 deg hue.
double transform_default_param(TransformKind kind);

// Applies the variation to one [C,H,W] image in [0,1]. Exact identity
// parameters (angle 0, shift 0, contrast 1, hue 0) return a bit-exact copy.
// Geometric warps use bilinear sampling with zero fill; value transforms
// clamp to [0,1].
Tensor apply_transform(const Tensor& image, const Transform& transform);

// Per-image application over a [N,C,H,W] batch.
Tensor apply_transform_batch(const Tensor& images, const Transform& transform);

// A dataset restricted to a class subset with the variation applied.
struct Domain {
    Tensor images;  // [N,C,H,W], already transformed, in [0,1]
    std::vector<int64_t> labels;
    Transform transform;
    std::vector<int64_t> class_filter;  // empty = all classes

    int64_t size() const { return images.shape.empty() ? 0 : images.shape[0]; }
    TrainSet train_set() const { return reconstruction_set(images); }
};

// Empty filter keeps every image; an empty selection is an error.
Domain make_domain(const DatasetHandle& dataset, const std::vector<int64_t>& class_filter,
                   const Transform& transform);

}  // namespace zfda
