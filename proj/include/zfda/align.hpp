#pragma once

#include <string>

#include "zfda/delta.hpp"
#include "zfda/domain.hpp"
#include "zfda/model.hpp"
#include "zfda/sam.hpp"

namespace zfda {

// PSNR against MAX=1.0: 10*log10(1/mse).
double psnr_db(double mse);

struct AlignmentReport {
    double mse = 0.0;
    double psnr = 0.0;
    double j = 0.0;  // misalignment loss: L(enc,dec) - L(pristine,pristine)
    std::string eval_set_id, encoder_id, decoder_id;
};

// Dense fine-tune of every parameter, starting from a copy of the pristine
// checkpoint.
ModelParams adapt_full(const ModelParams& pristine, const Domain& domain, int64_t epochs, double lr, uint64_t seed);

struct ZfdaResult {
    ModelParams adapted;
    DeltaPatch patch;
    SamResult sam;
};

// optimize_sam + extract_delta + effective_params. The adapted model and the
// patch application agree bit-exactly.
ZfdaResult adapt_zfda(const ModelParams& pristine, const Domain& domain, const SamOptions& opt);

// g_dec(f_enc(x)) over an identity link; semantics pass unmodified.
Tensor sc_round_trip(const ModelParams& encoder_side, const ModelParams& decoder_side, const Tensor& x);

// Cross-pairs the encoder/decoder and evaluates MSE, PSNR and J on an eval
// set drawn from the pre-training distribution.
AlignmentReport eval_alignment(const ModelParams& encoder_side, const ModelParams& decoder_side,
                               const Tensor& eval_images, double pristine_baseline_loss,
                               const std::string& eval_set_id = "", const std::string& encoder_id = "",
                               const std::string& decoder_id = "");

struct TuningResult {
    ModelParams tuned_pair;  // re-tuned cross pair (theta', phi')
    double j_before = 0.0, j_after = 0.0;
};

// Joint gradient fine-tune of the cross pair on shared data: `iterations`
// batch steps, batch size = floor(n / iterations) (at least 1), wrapping
// through reshuffles when iterations exceed one pass.
TuningResult realign_tuning(const ModelParams& encoder_side, const ModelParams& decoder_side,
                            const Tensor& shared_images, int64_t iterations, double lr, const Tensor& eval_images,
                            double pristine_baseline_loss, uint64_t seed);

struct EqualizerResult {
    ModelParams equalizer;  // encoder-only model: two identity-initialized dense layers on the semantics
    double j_before = 0.0, j_after = 0.0;
};

// Trains E to minimize || g_dec(E(f_enc(x))) - x || with both endpoints
// frozen; the SC path becomes encode -> E -> decode.
EqualizerResult realign_equalizer(const ModelParams& encoder_side, const ModelParams& decoder_side,
                                  const Tensor& shared_images, int64_t epochs, double lr, const Tensor& eval_images,
                                  double pristine_baseline_loss, uint64_t seed);

// Inserts the equalizer between the pair's encoder and decoder.
ModelParams equalized_pair(const ModelParams& encoder_side, const ModelParams& decoder_side,
                           const ModelParams& equalizer);

// Digest-checked overwrite restore; the result is byte-identical to the
// pristine checkpoint the patch was extracted from.
ModelParams restore_alignment(const ModelParams& adapted, const DeltaPatch& patch);

}  // namespace zfda
