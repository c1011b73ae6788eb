#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zfda/common.hpp"

namespace zfda {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 array. `grad`, when non-empty, has the same length as
// `data`. Values must stay finite after every engine operation.
struct Tensor {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), 0.0f) {}
    Tensor(Shape s, std::vector<float> d);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool has_grad() const { return !grad.empty(); }
    void alloc_grad() { grad.assign(data.size(), 0.0f); }

    // Throws ShapeError / DivergenceError when the invariants are broken.
    void validate(const std::string& what) const;
};

bool all_finite(const std::vector<float>& v);
bool all_finite(const std::vector<double>& v);
void ensure_finite(const std::vector<float>& v, const std::string& what);
void ensure_finite(const std::vector<double>& v, const std::string& what);

}  // namespace zfda
