#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "zfda/model.hpp"
#include "zfda/rng.hpp"

namespace zfda::test {

// Scale-floored relative agreement, the standard gradient-checker form:
// |a-b| <= tol * max(1, |a|, |b|).
inline bool agree(double a, double b, double tol) {
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Central finite difference of the reconstruction loss w.r.t. one parameter,
// using the realized f32 step. Independent of backward(): only forward passes.
inline double fd_param_grad(const ModelParams& model, const Tensor& x, const Tensor& target, bool encoder_side,
                            size_t layer, int64_t index, double h) {
    ModelParams m = model;
    Tensor& t = encoder_side ? m.enc_params[layer] : m.dec_params[layer];
    const float p0 = t.data[index];
    const float p_plus = static_cast<float>(static_cast<double>(p0) + h);
    const float p_minus = static_cast<float>(static_cast<double>(p0) - h);
    t.data[index] = p_plus;
    const double loss_plus = loss_mse(forward(m, x).outcome, target);
    t.data[index] = p_minus;
    const double loss_minus = loss_mse(forward(m, x).outcome, target);
    const double realized = static_cast<double>(p_plus) - static_cast<double>(p_minus);
    return (loss_plus - loss_minus) / realized;
}

// Central finite difference w.r.t. one input element.
inline double fd_input_grad(const ModelParams& model, const Tensor& x, const Tensor& target, int64_t index,
                            double h) {
    Tensor xp = x;
    const float v0 = x.data[index];
    const float v_plus = static_cast<float>(static_cast<double>(v0) + h);
    const float v_minus = static_cast<float>(static_cast<double>(v0) - h);
    xp.data[index] = v_plus;
    const double loss_plus = loss_mse(forward(model, xp).outcome, target);
    xp.data[index] = v_minus;
    const double loss_minus = loss_mse(forward(model, xp).outcome, target);
    return (loss_plus - loss_minus) / (static_cast<double>(v_plus) - static_cast<double>(v_minus));
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Unique scratch directory under the build tree.
inline std::string scratch_dir(const std::string& tag) {
    const std::filesystem::path p = std::filesystem::temp_directory_path() / ("zfda_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace zfda::test
