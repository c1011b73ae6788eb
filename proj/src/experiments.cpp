#include "zfda/experiments.hpp"

#include <algorithm>
#include <numeric>

#include "zfda/digest.hpp"
#include "zfda/model_io.hpp"
#include "zfda/rng.hpp"

namespace zfda {

namespace {

// Fixed tags for the independent random sub-streams of a run.
constexpr uint64_t kTagDataset = 1;
constexpr uint64_t kTagSplit = 2;
constexpr uint64_t kTagModelInit = 3;
constexpr uint64_t kTagPretrain = 4;
constexpr uint64_t kTagDomainSplit = 5;
constexpr uint64_t kTagFullAdapt = 6;
constexpr uint64_t kTagShared = 7;
constexpr uint64_t kTagTuning = 8;
constexpr uint64_t kTagEqualizer = 9;
constexpr uint64_t kTagFrozenMask = 10;

std::vector<int64_t> rows_with_labels(const DatasetHandle& ds, const std::vector<int64_t>& classes) {
    std::vector<int64_t> rows;
    for (int64_t i = 0; i < ds.size(); ++i)
        if (std::find(classes.begin(), classes.end(), ds.labels[i]) != classes.end()) rows.push_back(i);
    return rows;
}

}  // namespace

uint64_t sub_seed(uint64_t base, uint64_t tag) {
    Rng rng(base + 0x9e3779b97f4a7c15ULL * (tag + 1));
    return rng.next_u64();
}

DatasetHandle load_dataset(const RunConfig& cfg) {
    DatasetHandle ds;
    if (cfg.dataset_kind == "synthetic") {
        ds = gen_synthetic(cfg.dataset_n, cfg.dataset_channels, cfg.dataset_height, cfg.dataset_width,
                           sub_seed(cfg.seed, kTagDataset));
    } else if (cfg.dataset_kind == "cifar10" || cfg.dataset_kind == "cifar100") {
        if (cfg.dataset_path.empty())
            throw DataError("dataset.path: required for dataset.kind=" + cfg.dataset_kind);
        ds = read_cifar_binary(cfg.dataset_path,
                               cfg.dataset_kind == "cifar10" ? CifarVariant::Cifar10 : CifarVariant::Cifar100);
    } else {  // zft
        if (cfg.dataset_path.empty()) throw DataError("dataset.path: required for dataset.kind=zft");
        ds.images = read_tensor_file(cfg.dataset_path);
        if (ds.images.shape.size() != 4)
            throw DataError(cfg.dataset_path + ": expected a [N,C,H,W] tensor, got " + shape_str(ds.images.shape));
        ds.source = cfg.dataset_path;
        if (!cfg.dataset_labels_path.empty()) {
            const Tensor labels = read_tensor_file(cfg.dataset_labels_path);
            if (labels.numel() != ds.images.shape[0])
                throw DataError(cfg.dataset_labels_path + ": label count != image count");
            for (float f : labels.data) ds.labels.push_back(static_cast<int64_t>(f));
        } else {
            ds.labels.assign(ds.images.shape[0], 0);
        }
    }
    if (cfg.dataset_downsample) ds.images = avg_pool2(ds.images);
    return ds;
}

DeskData load_desk_data(const RunConfig& cfg) {
    DeskData d;
    d.dataset = load_dataset(cfg);

    std::vector<int64_t> pre_rows = rows_with_labels(d.dataset, cfg.pretrain_classes);
    if (pre_rows.size() < 2) throw DataError("pre-training class split selects fewer than 2 images");
    Rng rng(sub_seed(cfg.seed, kTagSplit));
    rng.shuffle(pre_rows);
    int64_t n_eval = static_cast<int64_t>(cfg.eval_fraction * static_cast<double>(pre_rows.size()));
    n_eval = std::clamp<int64_t>(n_eval, 1, static_cast<int64_t>(pre_rows.size()) - 1);
    std::vector<int64_t> eval_rows(pre_rows.begin(), pre_rows.begin() + n_eval);
    std::vector<int64_t> train_rows(pre_rows.begin() + n_eval, pre_rows.end());
    // Fixed index order inside each split keeps evaluation deterministic.
    std::sort(eval_rows.begin(), eval_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    d.eval_images = gather_rows(d.dataset.images, eval_rows);
    d.pretrain_images = gather_rows(d.dataset.images, train_rows);

    const std::vector<int64_t> dom_rows = rows_with_labels(d.dataset, cfg.domain_classes);
    if (dom_rows.empty()) throw DataError("domain class split selects no images");
    d.domain_pool.images = gather_rows(d.dataset.images, dom_rows);
    d.domain_pool.source = d.dataset.source + ":domain";
    for (int64_t r : dom_rows) d.domain_pool.labels.push_back(d.dataset.labels[r]);
    return d;
}

ModelParams pristine_model(const RunConfig& cfg, const DeskData& data) {
    if (!cfg.pristine_checkpoint.empty()) {
        ModelParams m = read_model(cfg.pristine_checkpoint);
        if (!cfg.pristine_digest.empty()) {
            const Sha256 want = digest_from_hex(cfg.pristine_digest);
            if (model_digest(m) != want)
                throw DigestError(cfg.pristine_checkpoint + ": digest does not match pristine.digest");
        }
        return m;
    }
    const Shape input{cfg.dataset_channels, cfg.dataset_height, cfg.dataset_width};
    ModelParams m = build_autoencoder(parse_layer_list(cfg.encoder_spec), parse_layer_list(cfg.decoder_spec),
                                      input, sub_seed(cfg.seed, kTagModelInit));
    pretrain(m, data.pretrain_images, cfg.pretrain_epochs, cfg.pretrain_lr, cfg.pretrain_batch,
             sub_seed(cfg.seed, kTagPretrain));
    return m;
}

DeskSetup prepare_setup(const RunConfig& cfg) {
    DeskSetup s;
    s.data = load_desk_data(cfg);
    s.pristine = pristine_model(cfg, s.data);
    s.baseline_loss = eval_mse(s.pristine, reconstruction_set(s.data.eval_images));
    return s;
}

DomainSplit domain_split(const RunConfig& cfg, const DeskData& data, TransformKind kind) {
    const Domain full = make_domain(data.domain_pool, cfg.domain_classes, cfg.transform_of(kind));
    const int64_t n = full.size();
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(sub_seed(cfg.seed, kTagDomainSplit));
    rng.shuffle(order);
    int64_t n_test = static_cast<int64_t>(cfg.domain_test_fraction * static_cast<double>(n));
    n_test = std::clamp<int64_t>(n_test, 1, n - 1);
    std::vector<int64_t> test_rows(order.begin(), order.begin() + n_test);
    std::vector<int64_t> train_rows(order.begin() + n_test, order.end());
    std::sort(test_rows.begin(), test_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    DomainSplit split;
    split.train.transform = full.transform;
    split.train.class_filter = full.class_filter;
    split.train.images = gather_rows(full.images, train_rows);
    for (int64_t r : train_rows) split.train.labels.push_back(full.labels[r]);
    split.test.transform = full.transform;
    split.test.class_filter = full.class_filter;
    split.test.images = gather_rows(full.images, test_rows);
    for (int64_t r : test_rows) split.test.labels.push_back(full.labels[r]);
    return split;
}

Tensor shared_pretrain_data(const RunConfig& cfg, const DeskData& data, int64_t n, uint64_t tag) {
    if (n <= 0) throw ConfigError("shared data size must be positive");
    if (cfg.dataset_kind == "synthetic") {
        // Regenerate fresh pre-training-distribution samples.
        std::vector<Tensor> chunks;
        int64_t have = 0;
        uint64_t round = 0;
        while (have < n) {
            DatasetHandle fresh = gen_synthetic(2 * n, cfg.dataset_channels, cfg.dataset_height, cfg.dataset_width,
                                                sub_seed(cfg.seed, tag + 101 * round));
            ++round;
            const std::vector<int64_t> rows = rows_with_labels(fresh, cfg.pretrain_classes);
            if (rows.empty()) continue;
            Tensor take = gather_rows(fresh.images, rows);
            have += take.shape[0];
            chunks.push_back(std::move(take));
        }
        Shape shape = chunks[0].shape;
        shape[0] = n;
        Tensor out(shape);
        const int64_t per = out.numel() / n;
        int64_t filled = 0;
        for (const Tensor& c : chunks) {
            for (int64_t i = 0; i < c.shape[0] && filled < n; ++i, ++filled)
                std::copy_n(c.data.begin() + i * per, per, out.data.begin() + filled * per);
        }
        return out;
    }
    // Finite datasets: resample the pre-training split with replacement.
    Rng rng(sub_seed(cfg.seed, tag));
    const int64_t pool = data.pretrain_images.shape[0];
    std::vector<int64_t> rows(n);
    for (int64_t& r : rows) r = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(pool)));
    return gather_rows(data.pretrain_images, rows);
}

namespace {

const std::vector<TransformKind> kDomains = {TransformKind::VariedAngle, TransformKind::VariedPerspective,
                                             TransformKind::VariedContrast, TransformKind::VariedHue};

std::vector<std::string> alignment_row(const std::string& domain, const std::string& side, const std::string& method,
                                       const std::string& note, uint64_t seed, const AlignmentReport& rep) {
    return {domain,
            side,
            method,
            note,
            std::to_string(seed),
            rep.encoder_id,
            rep.decoder_id,
            rep.eval_set_id,
            format_g6(rep.mse),
            format_g6(rep.psnr),
            format_g6(rep.j)};
}

AlignmentReport report_for(const ModelParams& enc, const ModelParams& dec, const Tensor& eval_images,
                           double baseline, const std::string& enc_id, const std::string& dec_id) {
    return eval_alignment(enc, dec, eval_images, baseline, "pretrain-eval", enc_id, dec_id);
}

}  // namespace

CsvTable suite_misalignment(const RunConfig& cfg) {
    CsvTable table;
    table.header = {"domain", "side",       "method",     "method_note", "seed", "encoder_id",
                    "decoder_id", "eval_set", "mse",        "psnr_db",     "j"};
    for (int64_t si = 0; si < cfg.experiment_seeds; ++si) {
        RunConfig run = cfg;
        run.seed = cfg.seed + static_cast<uint64_t>(si);
        const DeskSetup setup = prepare_setup(run);
        const Tensor shared = shared_pretrain_data(run, setup.data, run.tuning_samples, kTagShared);
        for (TransformKind kind : kDomains) {
            const std::string domain_name = transform_kind_name(kind);
            const DomainSplit split = domain_split(run, setup.data, kind);

            const ModelParams full_adapted = adapt_full(setup.pristine, split.train, run.full_epochs, run.full_lr,
                                                        sub_seed(run.seed, kTagFullAdapt));
            SamOptions sam_opt = run.sam_options();
            sam_opt.seed = run.seed;
            const ZfdaResult zfda = adapt_zfda(setup.pristine, split.train, sam_opt);
            const ModelParams restored = restore_alignment(zfda.adapted, zfda.patch);

            for (const bool encoder_side : {true, false}) {
                const std::string side = encoder_side ? "encoder" : "decoder";
                const std::string adapted_id = "full-" + domain_name;
                const ModelParams& enc_m = encoder_side ? full_adapted : setup.pristine;
                const ModelParams& dec_m = encoder_side ? setup.pristine : full_adapted;
                const std::string enc_id = encoder_side ? adapted_id : "pristine";
                const std::string dec_id = encoder_side ? "pristine" : adapted_id;

                AlignmentReport rep =
                    report_for(enc_m, dec_m, setup.data.eval_images, setup.baseline_loss, enc_id, dec_id);
                table.rows.push_back(alignment_row(domain_name, side, "misaligned", "", run.seed, rep));

                const TuningResult tuned =
                    realign_tuning(enc_m, dec_m, shared, run.tuning_iterations, run.tuning_lr,
                                   setup.data.eval_images, setup.baseline_loss, sub_seed(run.seed, kTagTuning));
                AlignmentReport trep = rep;
                trep.j = tuned.j_after;
                trep.mse = tuned.j_after + setup.baseline_loss;
                trep.psnr = psnr_db(trep.mse);
                table.rows.push_back(
                    alignment_row(domain_name, side, "tuning", "simplified-baseline", run.seed, trep));

                const EqualizerResult eq =
                    realign_equalizer(enc_m, dec_m, shared, run.equalizer_epochs, run.equalizer_lr,
                                      setup.data.eval_images, setup.baseline_loss, sub_seed(run.seed, kTagEqualizer));
                AlignmentReport erep = rep;
                erep.j = eq.j_after;
                erep.mse = eq.j_after + setup.baseline_loss;
                erep.psnr = psnr_db(erep.mse);
                table.rows.push_back(
                    alignment_row(domain_name, side, "equalizer", "simplified-baseline", run.seed, erep));

                const ModelParams& renc = encoder_side ? restored : setup.pristine;
                const ModelParams& rdec = encoder_side ? setup.pristine : restored;
                AlignmentReport zrep = report_for(renc, rdec, setup.data.eval_images, setup.baseline_loss,
                                                  encoder_side ? "zfda-restored" : "pristine",
                                                  encoder_side ? "pristine" : "zfda-restored");
                table.rows.push_back(alignment_row(domain_name, side, "zfda-restore", "", run.seed, zrep));
            }
        }
    }
    return table;
}

CsvTable suite_zfda_sweep(const RunConfig& cfg) {
    CsvTable table;
    table.header = {"domain",        "gamma",       "seed",        "method",          "domain_train_mse",
                    "domain_test_mse", "domain_test_psnr_db", "restore_j", "patch_entries", "patch_bytes",
                    "ckpt_bytes",    "patch_file_ratio", "value_bytes", "value_ratio"};
    for (int64_t si = 0; si < cfg.experiment_seeds; ++si) {
        RunConfig run = cfg;
        run.seed = cfg.seed + static_cast<uint64_t>(si);
        const DeskSetup setup = prepare_setup(run);
        const int64_t ckpt_bytes = static_cast<int64_t>(encode_model(setup.pristine).size());
        for (TransformKind kind : kDomains) {
            const std::string domain_name = transform_kind_name(kind);
            const DomainSplit split = domain_split(run, setup.data, kind);
            const TrainSet train = split.train.train_set();
            const TrainSet test = split.test.train_set();

            const double pristine_test = eval_mse(setup.pristine, test);
            table.rows.push_back({domain_name, "0", std::to_string(run.seed), "pristine",
                                  format_g6(eval_mse(setup.pristine, train)), format_g6(pristine_test),
                                  format_g6(psnr_db(pristine_test)), "", "", "", std::to_string(ckpt_bytes), "", "",
                                  ""});

            ModelParams full_adapted = adapt_full(setup.pristine, split.train, run.full_epochs, run.full_lr,
                                                  sub_seed(run.seed, kTagFullAdapt));
            const double full_test = eval_mse(full_adapted, test);
            table.rows.push_back({domain_name, "0", std::to_string(run.seed), "full",
                                  format_g6(eval_mse(full_adapted, train)), format_g6(full_test),
                                  format_g6(psnr_db(full_test)), "", "", "", std::to_string(ckpt_bytes), "", "", ""});

            for (double gamma : run.experiment_gammas) {
                SamOptions opt = run.sam_options();
                opt.gamma = gamma;
                opt.seed = run.seed;
                const ZfdaResult zfda = adapt_zfda(setup.pristine, split.train, opt);
                const ModelParams restored = restore_alignment(zfda.adapted, zfda.patch);
                const AlignmentReport rrep = report_for(restored, restored, setup.data.eval_images,
                                                        setup.baseline_loss, "zfda-restored", "zfda-restored");
                const double test_mse = eval_mse(zfda.adapted, test);
                const int64_t patch_bytes = static_cast<int64_t>(encode_patch(zfda.patch).size());
                const int64_t entries = zfda.patch.entry_count();
                const int64_t value_bytes = 4 * entries;
                const double denom_params = 4.0 * static_cast<double>(setup.pristine.param_total());
                table.rows.push_back({domain_name, format_g6(gamma), std::to_string(run.seed), "zfda",
                                      format_g6(eval_mse(zfda.adapted, train)), format_g6(test_mse),
                                      format_g6(psnr_db(test_mse)), format_g6(rrep.j), std::to_string(entries),
                                      std::to_string(patch_bytes), std::to_string(ckpt_bytes),
                                      format_g6(static_cast<double>(patch_bytes) / static_cast<double>(ckpt_bytes)),
                                      std::to_string(value_bytes), format_g6(value_bytes / denom_params)});
            }
        }
    }
    return table;
}

CsvTable suite_ablation(const RunConfig& cfg) {
    CsvTable table;
    table.header = {"domain", "gamma", "seed", "mask_mode", "alloc", "domain_test_mse", "domain_test_psnr_db"};
    for (int64_t si = 0; si < cfg.experiment_seeds; ++si) {
        RunConfig run = cfg;
        run.seed = cfg.seed + static_cast<uint64_t>(si);
        const DeskSetup setup = prepare_setup(run);
        for (TransformKind kind : kDomains) {
            const std::string domain_name = transform_kind_name(kind);
            const DomainSplit split = domain_split(run, setup.data, kind);
            const TrainSet test = split.test.train_set();
            for (const bool optimized : {true, false}) {
                for (const bool linear : {true, false}) {
                    SamOptions opt = run.sam_options();
                    opt.gamma = run.ablation_gamma;
                    opt.seed = optimized ? run.seed : sub_seed(run.seed, kTagFrozenMask);
                    opt.update_scores = optimized;
                    opt.allocation = linear ? Allocation::Linear : Allocation::Uniform;
                    const ZfdaResult zfda = adapt_zfda(setup.pristine, split.train, opt);
                    const double test_mse = eval_mse(zfda.adapted, test);
                    table.rows.push_back({domain_name, format_g6(run.ablation_gamma), std::to_string(run.seed),
                                          optimized ? "optimized" : "frozen", linear ? "linear" : "uniform",
                                          format_g6(test_mse), format_g6(psnr_db(test_mse))});
                }
            }
        }
    }
    return table;
}

}  // namespace zfda
