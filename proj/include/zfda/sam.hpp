#pragma once

#include <cstdint>
#include <vector>

#include "zfda/model.hpp"

namespace zfda {

struct DeltaPatch;

enum class VGradMode { Dense, Masked };
enum class Allocation { Linear, Uniform };

// Per-layer SAM decomposition state: importance scores s_k, additive values
// v_k, the allocated sparsity gamma_k and its keep count k_k =
// floor(gamma_k * p_k), plus the derived binary mask (exactly k_k ones).
// Scores and values are kept in double; they are optimizer state, not model
// parameters.
struct SamLayer {
    int64_t layer_id = 0;  // index into encoder layers then decoder layers
    bool decoder_side = false;
    int64_t param_count = 0;
    double gamma_k = 0.0;
    int64_t keep = 0;
    std::vector<double> scores, values;
    std::vector<uint8_t> mask;
};

struct SamState {
    double gamma = 0.0;
    double alpha_s = 1.0;
    double alpha_v = 1e-4;
    VGradMode v_grad_mode = VGradMode::Dense;
    std::vector<SamLayer> layers;  // parameterized layers only, model order

    int64_t total_keep() const;
    int64_t encoder_params() const;
    int64_t decoder_params() const;
    // Aggregate ratios derived from the per-layer keep counts.
    double gamma_encoder() const;
    double gamma_decoder() const;
};

// Mask elements that flipped in one step of one layer. Entering indices went
// 0->1, leaving went 1->0; the counts match because keep counts are fixed.
struct MaskSwap {
    std::vector<int64_t> entering, leaving;
    std::vector<double> entering_grads, leaving_grads;  // dL/dm at those indices
    int64_t count() const { return static_cast<int64_t>(entering.size()); }
};

// First-order loss-change estimate for a swap.
struct SwapEstimate {
    double delta = 0.0;        // sum of entering grads - sum of leaving grads
    double g_enter_max = 0.0;  // max dL/dm over entering indices
    double g_leave_min = 0.0;  // min dL/dm over leaving indices
    bool no_swap = true;
};

// Layer-wise sparsity allocation: the parameter budget gamma*N is split
// linearly in (d_in + d_out) rather than in p_k, then converted to ratios.
// Ratios above 1 are clamped and the surplus is redistributed over the
// remaining layers, still proportionally to (d_in + d_out), until a fixed
// point. Entries for parameterless layers are 0. Budget conservation
// sum(gamma_k * p_k) = gamma * N holds exactly (before any flooring of keep
// counts).
std::vector<double> allocate_sparsity(const std::vector<LayerSpec>& layers, double gamma);

// Exactly k ones at the k largest scores; ties break toward the lower index.
std::vector<uint8_t> topk_mask(const std::vector<double>& scores, int64_t k);

struct SamOptions {
    double gamma = 0.01;
    int64_t epochs = 30;
    double alpha_s = 1.0;
    double alpha_v = 1e-4;
    int64_t batch_size = 32;
    uint64_t seed = 0;
    VGradMode v_grad_mode = VGradMode::Dense;
    Allocation allocation = Allocation::Linear;
    bool update_scores = true;  // false: mask frozen at its sampled state
    bool update_values = true;  // false: fixed-v run (scores only)
    double early_stop_tol = 1e-5;
    int64_t early_stop_patience = 3;
};

// Scores drawn from the standard normal of the seeded generator, values all
// zero, masks derived from the scores.
SamState init_sam(const ModelParams& model, double gamma, uint64_t seed, Allocation allocation = Allocation::Linear);

// theta* + m (.) v, elementwise over each layer's flat parameters. The
// pristine model is untouched; an all-zero mask returns it bit-identically.
ModelParams effective_params(const ModelParams& pristine, const SamState& sam);

// Per-layer gradients for the SAM variables given the parameter gradients g
// of the effective model: grad_m_i = g_i * v_i (straight-through from mask to
// score), grad_v_i = g_i in dense mode or g_i * m_i in masked mode.
// fixed_v suppresses grad_v.
struct SamGrads {
    std::vector<std::vector<double>> grad_v, grad_m;  // aligned with sam.layers
};
SamGrads sam_grads_from_model_grads(const ModelGrads& grads, const SamState& sam, bool fixed_v = false);

// Forward/backward on the effective parameters for one batch, then the
// mapping above. Returns the batch loss through `loss_out`.
SamGrads sam_gradients(const ModelParams& pristine, const SamState& sam, const Tensor& batch_x,
                       const Tensor& batch_target, bool fixed_v, double* loss_out = nullptr);

// v <- v - alpha_v * grad_v, s <- s - alpha_s * grad_m, masks recomputed by
// topk_mask. Returns the mask swap per layer.
std::vector<MaskSwap> sam_step(SamState& sam, const SamGrads& grads);

// Appendix-style first-order estimate of the loss change caused by a swap.
SwapEstimate predicted_loss_delta(const MaskSwap& swap);

struct SamResult {
    SamState state;
    TrainLog log;
    bool diverged = false;
    int64_t steps = 0;
    int64_t swap_steps = 0;  // steps where at least one layer swapped
};

// Algorithm: init scores/values, then repeat batch sampling, sam_gradients
// and sam_step until the epoch budget or early stop (best loss improved by
// less than early_stop_tol for early_stop_patience consecutive epochs). On a
// non-finite loss the state is rolled back to the last finite step and
// `diverged` is set.
SamResult optimize_sam(const ModelParams& pristine, const TrainSet& set, const SamOptions& opt);

// Sparse record of exactly the masked entries; adapted = original + v in the
// f32 arithmetic shared with effective_params.
DeltaPatch extract_delta(const SamState& sam, const ModelParams& pristine);

// The one place where v is folded into an f32 parameter; extract_delta and
// effective_params share it so the patch reproduces the adapted model
// bit-exactly.
inline float apply_modification(float original, double v) {
    return static_cast<float>(static_cast<double>(original) + v);
}

}  // namespace zfda
