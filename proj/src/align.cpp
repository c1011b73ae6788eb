#include "zfda/align.hpp"

#include <cmath>
#include <numeric>

#include "zfda/rng.hpp"

namespace zfda {

double psnr_db(double mse) {
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

ModelParams adapt_full(const ModelParams& pristine, const Domain& domain, int64_t epochs, double lr, uint64_t seed) {
    ModelParams adapted = pristine;
    train_model(adapted, domain.train_set(), epochs, lr, /*batch_size=*/32, seed);
    return adapted;
}

ZfdaResult adapt_zfda(const ModelParams& pristine, const Domain& domain, const SamOptions& opt) {
    ZfdaResult r;
    r.sam = optimize_sam(pristine, domain.train_set(), opt);
    if (r.sam.diverged) throw DivergenceError("adapt_zfda: SAM optimization diverged");
    r.patch = extract_delta(r.sam.state, pristine);
    r.adapted = effective_params(pristine, r.sam.state);
    if (model_digest(apply_patch(pristine, r.patch)) != model_digest(r.adapted))
        throw Error("adapt_zfda: patch application does not reproduce the adapted parameters");
    return r;
}

Tensor sc_round_trip(const ModelParams& encoder_side, const ModelParams& decoder_side, const Tensor& x) {
    return forward(compose_pair(encoder_side, decoder_side), x).outcome;
}

AlignmentReport eval_alignment(const ModelParams& encoder_side, const ModelParams& decoder_side,
                               const Tensor& eval_images, double pristine_baseline_loss,
                               const std::string& eval_set_id, const std::string& encoder_id,
                               const std::string& decoder_id) {
    const ModelParams pair = compose_pair(encoder_side, decoder_side);
    AlignmentReport rep;
    rep.mse = eval_mse(pair, reconstruction_set(eval_images));
    rep.psnr = psnr_db(rep.mse);
    rep.j = rep.mse - pristine_baseline_loss;
    rep.eval_set_id = eval_set_id;
    rep.encoder_id = encoder_id;
    rep.decoder_id = decoder_id;
    return rep;
}

TuningResult realign_tuning(const ModelParams& encoder_side, const ModelParams& decoder_side,
                            const Tensor& shared_images, int64_t iterations, double lr, const Tensor& eval_images,
                            double pristine_baseline_loss, uint64_t seed) {
    if (iterations < 0) throw ConfigError("realign_tuning: negative iteration count");
    ModelParams pair = compose_pair(encoder_side, decoder_side);
    TuningResult result;
    result.j_before = eval_mse(pair, reconstruction_set(eval_images)) - pristine_baseline_loss;

    const int64_t n = shared_images.shape.empty() ? 0 : shared_images.shape[0];
    if (n <= 0) throw DataError("realign_tuning: empty shared dataset");
    const int64_t batch = std::max<int64_t>(1, iterations > 0 ? n / iterations : n);
    Rng rng(seed);
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    int64_t cursor = 0;
    for (int64_t it = 0; it < iterations; ++it) {
        if (cursor + batch > n) {
            rng.shuffle(order);
            cursor = 0;
        }
        std::vector<int64_t> rows(order.begin() + cursor, order.begin() + cursor + batch);
        cursor += batch;
        const Tensor bx = gather_rows(shared_images, rows);
        ForwardCache cache;
        const ForwardResult fr = forward(pair, bx, cache);
        const double loss = loss_mse(fr.outcome, bx);
        if (!std::isfinite(loss)) throw DivergenceError("realign_tuning: non-finite loss");
        sgd_step(pair, backward(pair, cache, loss_mse_grad(fr.outcome, bx)), lr);
    }
    result.j_after = eval_mse(pair, reconstruction_set(eval_images)) - pristine_baseline_loss;
    result.tuned_pair = std::move(pair);
    return result;
}

namespace {

ModelParams identity_equalizer(const Shape& semantics_shape) {
    const int64_t s = shape_numel(semantics_shape);
    ModelParams eq;
    eq.encoder = {dense_spec(s, s), dense_spec(s, s)};
    for (int k = 0; k < 2; ++k) {
        Tensor t({s * s + s});
        for (int64_t i = 0; i < s; ++i) t.data[i * s + i] = 1.0f;
        eq.enc_params.push_back(std::move(t));
    }
    eq.input_shape = {s};
    eq.finalize();
    return eq;
}

}  // namespace

ModelParams equalized_pair(const ModelParams& encoder_side, const ModelParams& decoder_side,
                           const ModelParams& equalizer) {
    ModelParams pair = compose_pair(encoder_side, decoder_side);
    ModelParams out;
    out.encoder = pair.encoder;
    out.enc_params = pair.enc_params;
    for (size_t k = 0; k < equalizer.encoder.size(); ++k) {
        out.encoder.push_back(equalizer.encoder[k]);
        out.enc_params.push_back(equalizer.enc_params[k]);
    }
    out.decoder = pair.decoder;
    out.dec_params = pair.dec_params;
    out.input_shape = pair.input_shape;
    out.finalize();
    return out;
}

EqualizerResult realign_equalizer(const ModelParams& encoder_side, const ModelParams& decoder_side,
                                  const Tensor& shared_images, int64_t epochs, double lr, const Tensor& eval_images,
                                  double pristine_baseline_loss, uint64_t seed) {
    const ModelParams pair = compose_pair(encoder_side, decoder_side);
    EqualizerResult result;
    result.equalizer = identity_equalizer(pair.semantics_shape);
    result.j_before =
        eval_mse(equalized_pair(encoder_side, decoder_side, result.equalizer), reconstruction_set(eval_images)) -
        pristine_baseline_loss;

    // Train E on frozen semantics with the decoder frozen.
    const Tensor semantics = forward_encoder(pair, shared_images);
    ModelParams trainee;
    trainee.encoder = result.equalizer.encoder;
    trainee.enc_params = result.equalizer.enc_params;
    trainee.decoder = pair.decoder;
    trainee.dec_params = pair.dec_params;
    trainee.input_shape = pair.semantics_shape;
    trainee.finalize();
    train_model_selective(trainee, TrainSet{semantics, shared_images}, epochs, lr, /*batch_size=*/32, seed,
                          /*update_encoder=*/true, /*update_decoder=*/false);
    result.equalizer.enc_params = trainee.enc_params;

    result.j_after =
        eval_mse(equalized_pair(encoder_side, decoder_side, result.equalizer), reconstruction_set(eval_images)) -
        pristine_baseline_loss;
    return result;
}

ModelParams restore_alignment(const ModelParams& adapted, const DeltaPatch& patch) {
    return revert_patch(adapted, patch);
}

}  // namespace zfda
