#include "zfda/tensor.hpp"

#include <cmath>
#include <sstream>

namespace zfda {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("shape dimension must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

void Tensor::validate(const std::string& what) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError(what + ": data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    if (has_grad() && grad.size() != data.size()) {
        throw ShapeError(what + ": grad length " + std::to_string(grad.size()) +
                         " does not match data length " + std::to_string(data.size()));
    }
    ensure_finite(data, what);
    if (has_grad()) ensure_finite(grad, what + " (grad)");
}

bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void ensure_finite(const std::vector<float>& v, const std::string& what) {
    if (!all_finite(v)) throw DivergenceError(what + ": non-finite value encountered");
}

void ensure_finite(const std::vector<double>& v, const std::string& what) {
    if (!all_finite(v)) throw DivergenceError(what + ": non-finite value encountered");
}

}  // namespace zfda
