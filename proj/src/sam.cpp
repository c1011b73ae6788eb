#include "zfda/sam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "zfda/delta.hpp"
#include "zfda/rng.hpp"

namespace zfda {

namespace {

// Parameterized layers in model order with their global layer ids.
struct TrainableLayer {
    int64_t layer_id;
    bool decoder_side;
    const LayerSpec* spec;
};

std::vector<TrainableLayer> trainable_layers(const ModelParams& model) {
    std::vector<TrainableLayer> out;
    for (size_t k = 0; k < model.encoder.size(); ++k)
        if (model.encoder[k].is_parameterized()) out.push_back({static_cast<int64_t>(k), false, &model.encoder[k]});
    for (size_t k = 0; k < model.decoder.size(); ++k)
        if (model.decoder[k].is_parameterized())
            out.push_back({static_cast<int64_t>(model.encoder.size() + k), true, &model.decoder[k]});
    return out;
}

const Tensor& layer_params(const ModelParams& model, const SamLayer& layer) {
    return layer.decoder_side ? model.dec_params[layer.layer_id - static_cast<int64_t>(model.encoder.size())]
                              : model.enc_params[layer.layer_id];
}

Tensor& layer_params(ModelParams& model, const SamLayer& layer) {
    return layer.decoder_side ? model.dec_params[layer.layer_id - static_cast<int64_t>(model.encoder.size())]
                              : model.enc_params[layer.layer_id];
}

const Tensor& layer_grads(const ModelGrads& grads, const SamLayer& layer, size_t enc_count) {
    return layer.decoder_side ? grads.dec[layer.layer_id - static_cast<int64_t>(enc_count)] : grads.enc[layer.layer_id];
}

}  // namespace

int64_t SamState::total_keep() const {
    int64_t n = 0;
    for (const SamLayer& l : layers) n += l.keep;
    return n;
}

int64_t SamState::encoder_params() const {
    int64_t n = 0;
    for (const SamLayer& l : layers)
        if (!l.decoder_side) n += l.param_count;
    return n;
}

int64_t SamState::decoder_params() const {
    int64_t n = 0;
    for (const SamLayer& l : layers)
        if (l.decoder_side) n += l.param_count;
    return n;
}

double SamState::gamma_encoder() const {
    const int64_t n = encoder_params();
    if (n == 0) return 0.0;
    int64_t keep = 0;
    for (const SamLayer& l : layers)
        if (!l.decoder_side) keep += l.keep;
    return static_cast<double>(keep) / static_cast<double>(n);
}

double SamState::gamma_decoder() const {
    const int64_t n = decoder_params();
    if (n == 0) return 0.0;
    int64_t keep = 0;
    for (const SamLayer& l : layers)
        if (l.decoder_side) keep += l.keep;
    return static_cast<double>(keep) / static_cast<double>(n);
}

std::vector<double> allocate_sparsity(const std::vector<LayerSpec>& layers, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw ConfigError("allocate_sparsity: gamma must be in (0,1], got " + std::to_string(gamma));
    int64_t total = 0;
    for (const LayerSpec& s : layers) total += s.param_count();
    if (total == 0) throw ConfigError("allocate_sparsity: model has zero parameters");

    std::vector<double> budget(layers.size(), 0.0);
    std::vector<bool> active(layers.size(), false);
    for (size_t k = 0; k < layers.size(); ++k) active[k] = layers[k].param_count() > 0;

    double remaining = gamma * static_cast<double>(total);
    while (true) {
        double weight_sum = 0.0;
        for (size_t k = 0; k < layers.size(); ++k)
            if (active[k]) weight_sum += static_cast<double>(layers[k].d_in() + layers[k].d_out());
        if (weight_sum <= 0.0) break;
        bool clamped_any = false;
        for (size_t k = 0; k < layers.size(); ++k) {
            if (!active[k]) continue;
            budget[k] = remaining * static_cast<double>(layers[k].d_in() + layers[k].d_out()) / weight_sum;
        }
        for (size_t k = 0; k < layers.size(); ++k) {
            if (!active[k]) continue;
            const double pk = static_cast<double>(layers[k].param_count());
            if (budget[k] > pk) {
                budget[k] = pk;
                remaining -= pk;
                active[k] = false;
                clamped_any = true;
            }
        }
        if (!clamped_any) break;
    }

    std::vector<double> gamma_k(layers.size(), 0.0);
    for (size_t k = 0; k < layers.size(); ++k) {
        const int64_t pk = layers[k].param_count();
        if (pk > 0) gamma_k[k] = budget[k] / static_cast<double>(pk);
    }
    return gamma_k;
}

std::vector<uint8_t> topk_mask(const std::vector<double>& scores, int64_t k) {
    const int64_t n = static_cast<int64_t>(scores.size());
    if (k < 0 || k > n)
        throw ConfigError("topk_mask: k=" + std::to_string(k) + " out of range for length " + std::to_string(n));
    std::vector<uint8_t> mask(scores.size(), 0);
    if (k == 0) return mask;
    if (k == n) {
        std::fill(mask.begin(), mask.end(), 1);
        return mask;
    }
    std::vector<int64_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](int64_t a, int64_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
    std::nth_element(idx.begin(), idx.begin() + k, idx.end(), better);
    for (int64_t i = 0; i < k; ++i) mask[idx[i]] = 1;
    return mask;
}

SamState init_sam(const ModelParams& model, double gamma, uint64_t seed, Allocation allocation) {
    const std::vector<TrainableLayer> trainables = trainable_layers(model);
    if (trainables.empty()) throw ConfigError("init_sam: model has no parameterized layers");

    std::vector<LayerSpec> all_specs;
    for (const LayerSpec& s : model.encoder) all_specs.push_back(s);
    for (const LayerSpec& s : model.decoder) all_specs.push_back(s);
    std::vector<double> gamma_k;
    if (allocation == Allocation::Linear) {
        gamma_k = allocate_sparsity(all_specs, gamma);
    } else {
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw ConfigError("init_sam: gamma must be in (0,1], got " + std::to_string(gamma));
        gamma_k.assign(all_specs.size(), gamma);
    }

    SamState sam;
    sam.gamma = gamma;
    Rng rng(seed);
    for (const TrainableLayer& t : trainables) {
        SamLayer layer;
        layer.layer_id = t.layer_id;
        layer.decoder_side = t.decoder_side;
        layer.param_count = t.spec->param_count();
        layer.gamma_k = gamma_k[t.layer_id];
        layer.keep = static_cast<int64_t>(std::floor(layer.gamma_k * static_cast<double>(layer.param_count)));
        layer.keep = std::min(layer.keep, layer.param_count);
        layer.scores.resize(layer.param_count);
        for (double& s : layer.scores) s = rng.normal();
        layer.values.assign(layer.param_count, 0.0);
        layer.mask = topk_mask(layer.scores, layer.keep);
        sam.layers.push_back(std::move(layer));
    }
    return sam;
}

ModelParams effective_params(const ModelParams& pristine, const SamState& sam) {
    ModelParams out = pristine;
    for (const SamLayer& layer : sam.layers) {
        Tensor& params = layer_params(out, layer);
        if (params.numel() != layer.param_count)
            throw ShapeError("effective_params: layer " + std::to_string(layer.layer_id) + " has " +
                             std::to_string(params.numel()) + " params, SAM state has " +
                             std::to_string(layer.param_count));
        for (int64_t i = 0; i < layer.param_count; ++i)
            if (layer.mask[i]) params.data[i] = apply_modification(params.data[i], layer.values[i]);
    }
    return out;
}

SamGrads sam_grads_from_model_grads(const ModelGrads& grads, const SamState& sam, bool fixed_v) {
    SamGrads out;
    out.grad_v.resize(sam.layers.size());
    out.grad_m.resize(sam.layers.size());
    const size_t enc_count = grads.enc.size();
    for (size_t li = 0; li < sam.layers.size(); ++li) {
        const SamLayer& layer = sam.layers[li];
        const Tensor& g = layer_grads(grads, layer, enc_count);
        if (g.numel() != layer.param_count)
            throw ShapeError("sam gradients: layer " + std::to_string(layer.layer_id) + " gradient length mismatch");
        std::vector<double>& gm = out.grad_m[li];
        std::vector<double>& gv = out.grad_v[li];
        gm.resize(layer.param_count);
        for (int64_t i = 0; i < layer.param_count; ++i)
            gm[i] = static_cast<double>(g.data[i]) * layer.values[i];
        if (fixed_v) {
            gv.assign(layer.param_count, 0.0);
        } else if (sam.v_grad_mode == VGradMode::Dense) {
            gv.resize(layer.param_count);
            for (int64_t i = 0; i < layer.param_count; ++i) gv[i] = static_cast<double>(g.data[i]);
        } else {
            gv.resize(layer.param_count);
            for (int64_t i = 0; i < layer.param_count; ++i)
                gv[i] = layer.mask[i] ? static_cast<double>(g.data[i]) : 0.0;
        }
        ensure_finite(gm, "sam grad_m layer " + std::to_string(layer.layer_id));
        ensure_finite(gv, "sam grad_v layer " + std::to_string(layer.layer_id));
    }
    return out;
}

SamGrads sam_gradients(const ModelParams& pristine, const SamState& sam, const Tensor& batch_x,
                       const Tensor& batch_target, bool fixed_v, double* loss_out) {
    const ModelParams eff = effective_params(pristine, sam);
    ForwardCache cache;
    const ForwardResult fr = forward(eff, batch_x, cache);
    const double loss = loss_mse(fr.outcome, batch_target);
    if (loss_out) *loss_out = loss;
    const ModelGrads grads = backward(eff, cache, loss_mse_grad(fr.outcome, batch_target));
    return sam_grads_from_model_grads(grads, sam, fixed_v);
}

std::vector<MaskSwap> sam_step(SamState& sam, const SamGrads& grads) {
    if (grads.grad_v.size() != sam.layers.size() || grads.grad_m.size() != sam.layers.size())
        throw ShapeError("sam_step: gradient layout mismatch");
    std::vector<MaskSwap> swaps(sam.layers.size());
    for (size_t li = 0; li < sam.layers.size(); ++li) {
        SamLayer& layer = sam.layers[li];
        const std::vector<double>& gv = grads.grad_v[li];
        const std::vector<double>& gm = grads.grad_m[li];
        if (static_cast<int64_t>(gv.size()) != layer.param_count ||
            static_cast<int64_t>(gm.size()) != layer.param_count)
            throw ShapeError("sam_step: layer " + std::to_string(layer.layer_id) + " gradient length mismatch");
        for (int64_t i = 0; i < layer.param_count; ++i) {
            layer.values[i] -= sam.alpha_v * gv[i];
            layer.scores[i] -= sam.alpha_s * gm[i];
        }
        ensure_finite(layer.values, "sam_step values layer " + std::to_string(layer.layer_id));
        ensure_finite(layer.scores, "sam_step scores layer " + std::to_string(layer.layer_id));
        std::vector<uint8_t> new_mask = topk_mask(layer.scores, layer.keep);
        MaskSwap& swap = swaps[li];
        for (int64_t i = 0; i < layer.param_count; ++i) {
            if (new_mask[i] && !layer.mask[i]) {
                swap.entering.push_back(i);
                swap.entering_grads.push_back(gm[i]);
            } else if (!new_mask[i] && layer.mask[i]) {
                swap.leaving.push_back(i);
                swap.leaving_grads.push_back(gm[i]);
            }
        }
        layer.mask = std::move(new_mask);
    }
    return swaps;
}

SwapEstimate predicted_loss_delta(const MaskSwap& swap) {
    SwapEstimate est;
    if (swap.count() == 0) return est;
    est.no_swap = false;
    est.delta = 0.0;
    est.g_enter_max = swap.entering_grads[0];
    est.g_leave_min = swap.leaving_grads[0];
    for (double g : swap.entering_grads) {
        est.delta += g;
        est.g_enter_max = std::max(est.g_enter_max, g);
    }
    for (double g : swap.leaving_grads) {
        est.delta -= g;
        est.g_leave_min = std::min(est.g_leave_min, g);
    }
    return est;
}

SamResult optimize_sam(const ModelParams& pristine, const TrainSet& set, const SamOptions& opt) {
    const int64_t n = set.size();
    if (n <= 0) throw DataError("optimize_sam: empty domain dataset");
    if (opt.batch_size <= 0) throw ConfigError("optimize_sam: batch size must be positive");
    if (opt.epochs < 0) throw ConfigError("optimize_sam: negative epoch count");

    SamResult result;
    result.state = init_sam(pristine, opt.gamma, opt.seed, opt.allocation);
    result.state.alpha_s = opt.alpha_s;
    result.state.alpha_v = opt.alpha_v;
    result.state.v_grad_mode = opt.v_grad_mode;

    Rng rng(opt.seed);
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double best = std::numeric_limits<double>::infinity();
    int64_t stall = 0;
    SamState prev = result.state;
    for (int64_t e = 0; e < opt.epochs; ++e) {
        rng.shuffle(order);
        double sq_sum = 0.0;
        int64_t samples = 0;
        bool diverged = false;
        for (int64_t start = 0; start < n; start += opt.batch_size) {
            const int64_t count = std::min(opt.batch_size, n - start);
            std::vector<int64_t> rows(order.begin() + start, order.begin() + start + count);
            const Tensor bx = gather_rows(set.inputs, rows);
            const Tensor bt = gather_rows(set.targets, rows);
            double loss = 0.0;
            SamGrads grads;
            try {
                grads = sam_gradients(pristine, result.state, bx, bt, !opt.update_values, &loss);
            } catch (const DivergenceError&) {
                diverged = true;
                break;
            }
            if (!std::isfinite(loss)) {
                diverged = true;
                break;
            }
            prev = result.state;
            if (!opt.update_scores)
                for (auto& gm : grads.grad_m) std::fill(gm.begin(), gm.end(), 0.0);
            std::vector<MaskSwap> swaps;
            try {
                swaps = sam_step(result.state, grads);
            } catch (const DivergenceError&) {
                result.state = prev;
                diverged = true;
                break;
            }
            ++result.steps;
            for (const MaskSwap& s : swaps)
                if (s.count() > 0) {
                    ++result.swap_steps;
                    break;
                }
            sq_sum += loss * static_cast<double>(count);
            samples += count;
        }
        if (diverged) {
            result.state = prev;
            result.diverged = true;
            break;
        }
        const double epoch_loss = sq_sum / static_cast<double>(samples);
        result.log.epoch_loss.push_back(epoch_loss);
        if (best - epoch_loss < opt.early_stop_tol) {
            ++stall;
        } else {
            stall = 0;
        }
        best = std::min(best, epoch_loss);
        if (stall >= opt.early_stop_patience) break;
    }
    return result;
}

DeltaPatch extract_delta(const SamState& sam, const ModelParams& pristine) {
    DeltaPatch patch;
    patch.model_digest = model_digest(pristine);
    patch.gamma = sam.gamma;
    for (const SamLayer& layer : sam.layers) {
        const Tensor& params = layer_params(pristine, layer);
        if (params.numel() != layer.param_count)
            throw ShapeError("extract_delta: layer " + std::to_string(layer.layer_id) + " layout mismatch");
        DeltaLayer dl;
        dl.layer_id = static_cast<uint32_t>(layer.layer_id);
        for (int64_t i = 0; i < layer.param_count; ++i) {
            if (!layer.mask[i]) continue;
            DeltaEntry e;
            e.index = static_cast<uint32_t>(i);
            e.original = params.data[i];
            e.adapted = apply_modification(params.data[i], layer.values[i]);
            dl.entries.push_back(e);
        }
        patch.layers.push_back(std::move(dl));
    }
    return patch;
}

}  // namespace zfda
