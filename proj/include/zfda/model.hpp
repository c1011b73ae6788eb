#pragma once

#include <cstdint>
#include <vector>

#include "zfda/layers.hpp"
#include "zfda/tensor.hpp"

namespace zfda {

// Encoder/decoder parameter container. Each layer owns one flat f32 tensor of
// length p_k holding its weights followed by its bias (empty tensor for
// activation layers). The concatenation of the encoder tensors is theta, the
// decoder tensors phi; the canonical byte stream (layer order, row-major,
// little-endian f32) makes the model digest well-defined.
struct ModelParams {
    std::vector<LayerSpec> encoder, decoder;
    std::vector<Tensor> enc_params, dec_params;
    Shape input_shape;

    // Derived by finalize().
    Shape semantics_shape, output_shape;
    int64_t n_enc = 0, n_dec = 0;

    int64_t param_total() const { return n_enc + n_dec; }
    // Resolves both chains, recomputes derived fields and validates that the
    // parameter tensors match the specs.
    void finalize();
};

class Rng;

// Fan-in scaled uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for both
// weights and biases, drawn in layer order (weights first, then bias).
Tensor init_layer_params(const LayerSpec& spec, Rng& rng);

// Builds a model from unresolved specs. Parameters are drawn from the seeded
// generator in layer order.
ModelParams build_model(std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder, Shape input_shape,
                        uint64_t seed);

// build_model plus the autoencoder contract: decoder output shape must equal
// the encoder input shape.
ModelParams build_autoencoder(std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder, Shape input_shape,
                              uint64_t seed);

// Cross-pairs the encoder of one model with the decoder of another,
// shape-checking the semantics boundary.
ModelParams compose_pair(const ModelParams& encoder_side, const ModelParams& decoder_side);

// Activations recorded by forward() for the backward pass. Stage buffers are
// double precision; the public tensors stay f32.
struct StageCache {
    std::vector<std::vector<double>> inputs;  // input to each layer, batch-flattened
    std::vector<Shape> in_shapes;             // per-sample shape at each layer input
    std::vector<double> output;
    Shape out_shape;
};

struct ForwardCache {
    StageCache enc, dec;
    int64_t batch = 0;
    bool valid = false;
};

struct ForwardResult {
    Tensor semantics, outcome;
};

// x has shape [N] + input_shape. Semantics are rounded to f32 at the
// encoder/decoder boundary, so running the two stages separately reproduces
// the composed result bit-exactly.
ForwardResult forward(const ModelParams& model, const Tensor& x, ForwardCache& cache);
ForwardResult forward(const ModelParams& model, const Tensor& x);
Tensor forward_encoder(const ModelParams& model, const Tensor& x);
Tensor forward_decoder(const ModelParams& model, const Tensor& semantics);

// Mean over all elements of squared differences, double accumulation.
double loss_mse(const Tensor& outcome, const Tensor& target);
// dL/d(outcome) for loss_mse.
std::vector<double> loss_mse_grad(const Tensor& outcome, const Tensor& target);

// One flat gradient tensor per layer, aligned with ModelParams.
struct ModelGrads {
    std::vector<Tensor> enc, dec;
    Tensor input_grad;  // filled only when requested
};

// Reverse-mode pass over the recorded forward. Throws Error if the cache is
// not valid (backward without forward).
ModelGrads backward(const ModelParams& model, const ForwardCache& cache, const std::vector<double>& dloss_doutcome,
                    bool want_input_grad = false);

// p <- p - lr * g elementwise. Rejects non-finite gradients.
void sgd_step(ModelParams& model, const ModelGrads& grads, double lr);

struct TrainSet {
    Tensor inputs, targets;  // [N, ...] each; N rows must match
    int64_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

TrainSet reconstruction_set(const Tensor& images);

struct TrainLog {
    std::vector<double> epoch_loss;  // mean per-sample-element MSE per epoch
};

// Plain SGD over shuffled batches; the last incomplete batch is kept. The
// seeded generator drives the per-epoch shuffles. Non-finite loss aborts with
// DivergenceError.
TrainLog train_model(ModelParams& model, const TrainSet& set, int64_t epochs, double lr, int64_t batch_size,
                     uint64_t seed);

// Same loop with one side frozen (used by the equalizer baseline).
TrainLog train_model_selective(ModelParams& model, const TrainSet& set, int64_t epochs, double lr,
                               int64_t batch_size, uint64_t seed, bool update_encoder, bool update_decoder);

// Joint encoder/decoder reconstruction training.
TrainLog pretrain(ModelParams& model, const Tensor& images, int64_t epochs, double lr, int64_t batch_size,
                  uint64_t seed);

// Fixed-order batched evaluation; returns mean MSE over the set.
double eval_mse(const ModelParams& model, const TrainSet& set);

// Gathers dataset rows into a batch tensor.
Tensor gather_rows(const Tensor& data, const std::vector<int64_t>& rows);

// Canonical little-endian f32 byte stream over encoder then decoder params.
std::vector<uint8_t> canonical_param_bytes(const ModelParams& model);

}  // namespace zfda
