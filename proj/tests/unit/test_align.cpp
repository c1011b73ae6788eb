#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "zfda/align.hpp"
#include "zfda/digest.hpp"
#include "zfda/experiments.hpp"
#include "zfda/rng.hpp"

using namespace zfda;
using namespace zfda::test;

namespace {

// Small trainable fixture shared across the alignment tests: an 8x8x3
// autoencoder pre-trained on synthetic classes 0..7.
struct Fixture {
    ModelParams pristine;
    Tensor eval_images;
    Domain domain;  // classes 8..9, contrast-varied
    double baseline = 0.0;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture fx;
        const DatasetHandle ds = gen_synthetic(260, 3, 8, 8, 71);
        const Domain pre = make_domain(ds, {0, 1, 2, 3, 4, 5, 6, 7}, {TransformKind::None, 0.0});
        const int64_t n_eval = 48;
        std::vector<int64_t> eval_rows, train_rows;
        for (int64_t i = 0; i < pre.size(); ++i) (i < n_eval ? eval_rows : train_rows).push_back(i);
        fx.eval_images = gather_rows(pre.images, eval_rows);
        const Tensor train_images = gather_rows(pre.images, train_rows);

        fx.pristine = build_autoencoder(
            {conv2d_spec(3, 8, 3, 3, 2, 1), activation_spec(LayerKind::ReLU), dense_spec(128, 32)},
            {dense_spec(32, 128), activation_spec(LayerKind::ReLU), conv_transpose2d_spec(8, 3, 4, 4, 2, 1, 4, 4),
             activation_spec(LayerKind::Sigmoid)},
            {3, 8, 8}, 72);
        pretrain(fx.pristine, train_images, 40, 0.05, 32, 73);
        fx.baseline = eval_mse(fx.pristine, reconstruction_set(fx.eval_images));

        fx.domain = make_domain(ds, {8, 9}, {TransformKind::VariedContrast, 1.8});
        return fx;
    }();
    return f;
}

}  // namespace

TEST_CASE("psnr/mse consistency") {
    CHECK(psnr_db(0.01) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(psnr_db(1.0) == doctest::Approx(0.0));
    CHECK(psnr_db(0.001) > psnr_db(0.01));
    CHECK(std::isinf(psnr_db(0.0)));
}

TEST_CASE("pristine pair has exactly zero misalignment loss") {
    const Fixture& fx = fixture();
    const AlignmentReport rep = eval_alignment(fx.pristine, fx.pristine, fx.eval_images, fx.baseline);
    CHECK(rep.j == 0.0);
    CHECK(rep.mse == fx.baseline);
}

TEST_CASE("sc_round_trip equals the composed forward bit-exactly") {
    const Fixture& fx = fixture();
    std::vector<int64_t> rows = {0, 1, 2};
    const Tensor x = gather_rows(fx.eval_images, rows);
    const Tensor rt = sc_round_trip(fx.pristine, fx.pristine, x);
    CHECK(rt.data == forward(fx.pristine, x).outcome.data);
}

TEST_CASE("incompatible bottleneck widths are a shape error") {
    const Fixture& fx = fixture();
    const ModelParams narrow = build_autoencoder(
        {dense_spec(192, 16)}, {dense_spec(16, 192), activation_spec(LayerKind::Sigmoid)}, {3, 8, 8}, 1);
    CHECK_THROWS_AS(compose_pair(fx.pristine, narrow), ShapeError);
    std::vector<int64_t> rows = {0};
    CHECK_THROWS_AS(sc_round_trip(fx.pristine, narrow, gather_rows(fx.eval_images, rows)), ShapeError);
}

TEST_CASE("adapt_full: zero epochs is a bit-exact no-op, training lowers the domain loss") {
    const Fixture& fx = fixture();
    const ModelParams same = adapt_full(fx.pristine, fx.domain, 0, 1e-3, 5);
    CHECK(canonical_param_bytes(same) == canonical_param_bytes(fx.pristine));

    const double before = eval_mse(fx.pristine, fx.domain.train_set());
    const ModelParams adapted = adapt_full(fx.pristine, fx.domain, 10, 0.02, 5);
    const double after = eval_mse(adapted, fx.domain.train_set());
    CHECK(after < before);
}

TEST_CASE("adapt_zfda: sparsity bound, bit-exact restore, J exactly zero") {
    const Fixture& fx = fixture();
    SamOptions opt;
    opt.gamma = 0.01;
    opt.epochs = 12;
    opt.alpha_s = 1.0;
    opt.alpha_v = 0.01;
    opt.seed = 7;
    const ZfdaResult res = adapt_zfda(fx.pristine, fx.domain, opt);
    CHECK(res.patch.entry_count() <= static_cast<int64_t>(0.01 * static_cast<double>(fx.pristine.param_total())));
    CHECK(res.patch.entry_count() > 0);

    const ModelParams restored = restore_alignment(res.adapted, res.patch);
    CHECK(model_digest(restored) == model_digest(fx.pristine));
    const AlignmentReport rep = eval_alignment(restored, restored, fx.eval_images, fx.baseline);
    CHECK(rep.j == 0.0);

    // Restoring twice is idempotent.
    const ModelParams restored2 = restore_alignment(restored, res.patch);
    CHECK(canonical_param_bytes(restored2) == canonical_param_bytes(restored));
}

TEST_CASE("one-side adaptation misaligns the pair in both directions") {
    const Fixture& fx = fixture();
    const ModelParams adapted = adapt_full(fx.pristine, fx.domain, 10, 0.02, 5);
    const double j_enc = eval_alignment(adapted, fx.pristine, fx.eval_images, fx.baseline).j;
    const double j_dec = eval_alignment(fx.pristine, adapted, fx.eval_images, fx.baseline).j;
    CHECK(j_enc > 0.0);
    CHECK(j_dec > 0.0);
}

TEST_CASE("tuning baseline: zero iterations keep J, a few iterations improve it on most seeds") {
    const Fixture& fx = fixture();
    const ModelParams adapted = adapt_full(fx.pristine, fx.domain, 10, 0.02, 5);

    Rng shared_rng(81);
    const Tensor shared = gather_rows(fx.eval_images, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
                                                       16, 17, 18, 19, 20, 21, 22, 23});
    const TuningResult none =
        realign_tuning(adapted, fx.pristine, shared, 0, 1e-3, fx.eval_images, fx.baseline, 1);
    CHECK(none.j_after == none.j_before);

    int improved = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const TuningResult t =
            realign_tuning(adapted, fx.pristine, shared, 8, 0.01, fx.eval_images, fx.baseline, seed);
        if (t.j_after <= t.j_before) ++improved;
    }
    CHECK(improved >= 4);
}

TEST_CASE("equalizer baseline: identity init keeps an aligned pair at J = 0 and training improves a misaligned one") {
    const Fixture& fx = fixture();
    const EqualizerResult aligned =
        realign_equalizer(fx.pristine, fx.pristine, fx.eval_images, 0, 0.01, fx.eval_images, fx.baseline, 1);
    CHECK(std::fabs(aligned.j_before) <= 1e-9);
    CHECK(std::fabs(aligned.j_after) <= 1e-9);

    const ModelParams adapted = adapt_full(fx.pristine, fx.domain, 10, 0.02, 5);
    double sum_before = 0.0, sum_after = 0.0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        const EqualizerResult eq =
            realign_equalizer(adapted, fx.pristine, fx.eval_images, 10, 0.05, fx.eval_images, fx.baseline, seed);
        sum_before += eq.j_before;
        sum_after += eq.j_after;
    }
    CHECK(sum_after < sum_before);
}
