#include <doctest.h>

#include "test_util.hpp"
#include "zfda/model.hpp"
#include "zfda/rng.hpp"

using namespace zfda;
using namespace zfda::test;

namespace {

// Probes `count` random parameters of the model against central finite
// differences. Returns the worst scale-floored relative error.
double probe_params(const ModelParams& model, const Tensor& x, const Tensor& target, int count, Rng& rng, double h) {
    ForwardCache cache;
    const ForwardResult r = forward(model, x, cache);
    const ModelGrads grads = backward(model, cache, loss_mse_grad(r.outcome, target), true);
    double worst = 0.0;
    for (int p = 0; p < count; ++p) {
        const bool enc_side = rng.uniform() < 0.5 || model.decoder.empty();
        const auto& specs = enc_side ? model.encoder : model.decoder;
        const auto& params = enc_side ? model.enc_params : model.dec_params;
        size_t layer = static_cast<size_t>(rng.next_below(specs.size()));
        while (params[layer].numel() == 0) layer = static_cast<size_t>(rng.next_below(specs.size()));
        const int64_t index = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(params[layer].numel())));
        const double analytic = (enc_side ? grads.enc : grads.dec)[layer].data[index];
        const double fd = fd_param_grad(model, x, target, enc_side, layer, index, h);
        const double err = std::fabs(analytic - fd) / std::max({1.0, std::fabs(analytic), std::fabs(fd)});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace

TEST_CASE("2-layer toy model matches finite differences (step 1e-3, 1e-4 relative)") {
    const ModelParams m = build_autoencoder({dense_spec(5, 4), activation_spec(LayerKind::Sigmoid)},
                                            {dense_spec(4, 5)}, {5}, 101);
    Rng rng(55);
    const Tensor x = random_tensor({4, 5}, rng, -1.0, 1.0);
    const Tensor y = random_tensor({4, 5}, rng, 0.0, 1.0);
    const double worst = probe_params(m, x, y, 60, rng, 1e-3);
    CHECK(worst < 1e-4);
}

TEST_CASE("every layer kind matches finite differences") {
    Rng rng(77);
    const double h = 5e-3;
    const double tol = 1e-4;

    SUBCASE("dense with and without bias") {
        const ModelParams m = build_autoencoder(
            {dense_spec(6, 5, false), activation_spec(LayerKind::ReLU), dense_spec(5, 4)},
            {dense_spec(4, 6), activation_spec(LayerKind::Sigmoid)}, {6}, 11);
        const Tensor x = random_tensor({3, 6}, rng, -0.5, 1.0);
        const Tensor y = random_tensor({3, 6}, rng);
        CHECK(probe_params(m, x, y, 50, rng, h) < tol);
    }

    SUBCASE("conv2d and conv_transpose2d") {
        const ModelParams m = build_autoencoder(
            {conv2d_spec(2, 3, 3, 3, 2, 1), activation_spec(LayerKind::ReLU), conv2d_spec(3, 4, 3, 3, 1, 1)},
            {conv_transpose2d_spec(4, 3, 3, 3, 1, 1), activation_spec(LayerKind::ReLU),
             conv_transpose2d_spec(3, 2, 4, 4, 2, 1), activation_spec(LayerKind::Sigmoid)},
            {2, 6, 6}, 13);
        const Tensor x = random_tensor({2, 2, 6, 6}, rng);
        const Tensor y = random_tensor({2, 2, 6, 6}, rng);
        CHECK(probe_params(m, x, y, 60, rng, h) < tol);
    }

    SUBCASE("strided conv without bias") {
        const ModelParams m = build_model({conv2d_spec(1, 2, 2, 2, 2, 0, 0, 0, false)}, {}, {1, 4, 4}, 17);
        const Tensor x = random_tensor({3, 1, 4, 4}, rng);
        const Tensor y = random_tensor({3, 2, 2, 2}, rng);
        CHECK(probe_params(m, x, y, 16, rng, h) < tol);
    }
}

TEST_CASE("input gradients match finite differences") {
    Rng rng(99);
    const ModelParams m = build_autoencoder(
        {conv2d_spec(2, 3, 3, 3, 2, 1), activation_spec(LayerKind::ReLU), dense_spec(12, 5)},
        {dense_spec(5, 12), conv_transpose2d_spec(3, 2, 4, 4, 2, 1, 2, 2), activation_spec(LayerKind::Sigmoid)},
        {2, 4, 4}, 23);
    const Tensor x = random_tensor({2, 2, 4, 4}, rng);
    const Tensor y = random_tensor({2, 2, 4, 4}, rng);
    ForwardCache cache;
    const ForwardResult r = forward(m, x, cache);
    const ModelGrads grads = backward(m, cache, loss_mse_grad(r.outcome, y), true);
    REQUIRE(grads.input_grad.numel() == x.numel());
    for (int probe = 0; probe < 20; ++probe) {
        const int64_t idx = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(x.numel())));
        const double analytic = grads.input_grad.data[idx];
        const double fd = fd_input_grad(m, x, y, idx, 5e-3);
        CHECK(agree(analytic, fd, 1e-4));
    }
}
