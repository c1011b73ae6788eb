#include "zfda/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "zfda/align.hpp"
#include "zfda/config.hpp"
#include "zfda/delta.hpp"
#include "zfda/digest.hpp"
#include "zfda/experiments.hpp"
#include "zfda/model_io.hpp"

namespace zfda::cli {

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Config file of key = value lines");
    cmd->add_option("--set", opts.sets, "Override a config key, e.g. --set zfda.gamma=0.003")->take_all();
    cmd->add_option("--out", opts.out_dir, "Output directory (config key 'out')");
    cmd->add_option("--seed", opts.seed, "Run seed (config key 'seed')");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg.apply_file(opts.config_path);
    for (const std::string& kv : opts.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opts.out_dir.empty()) cfg.set("out", opts.out_dir);
    if (opts.seed >= 0) cfg.set("seed", std::to_string(opts.seed));
    return cfg;
}

std::string prepare_out_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream echo(fs::path(cfg.out_dir) / "config_resolved.cfg", std::ios::trunc);
    if (!echo) throw DataError("cannot write config echo in " + cfg.out_dir);
    echo << cfg.echo();
    return cfg.out_dir;
}

void write_loss_csv(const std::string& path, const TrainLog& log) {
    std::vector<std::vector<std::string>> rows;
    for (size_t e = 0; e < log.epoch_loss.size(); ++e)
        rows.push_back({std::to_string(e), format_g6(log.epoch_loss[e])});
    write_csv(path, {"epoch", "mse"}, rows);
}

void write_digest_file(const std::string& path, const Sha256& digest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write digest file: " + path);
    out << digest_hex(digest) << "\n";
}

ModelParams train_pristine(const RunConfig& cfg, const DeskData& data, TrainLog* log_out) {
    const Shape input{cfg.dataset_channels, cfg.dataset_height, cfg.dataset_width};
    ModelParams m = build_autoencoder(parse_layer_list(cfg.encoder_spec), parse_layer_list(cfg.decoder_spec), input,
                                      sub_seed(cfg.seed, 3));
    TrainLog log = pretrain(m, data.pretrain_images, cfg.pretrain_epochs, cfg.pretrain_lr, cfg.pretrain_batch,
                            sub_seed(cfg.seed, 4));
    if (log_out) *log_out = std::move(log);
    return m;
}

int cmd_pretrain(const RunConfig& cfg) {
    const std::string out = prepare_out_dir(cfg);
    const DeskData data = load_desk_data(cfg);
    TrainLog log;
    const ModelParams model = train_pristine(cfg, data, &log);
    const fs::path ckpt = fs::path(out) / "model.zfm";
    write_model(model, ckpt.string());
    write_digest_file(ckpt.string() + ".sha256", model_digest(model));
    write_loss_csv((fs::path(out) / "pretrain_loss.csv").string(), log);
    const double eval = eval_mse(model, reconstruction_set(data.eval_images));
    std::cout << "checkpoint: " << ckpt.string() << "\n"
              << "digest: " << digest_hex(model_digest(model)) << "\n"
              << "params: encoder " << model.n_enc << " + decoder " << model.n_dec << "\n"
              << "final train mse: " << format_g6(log.epoch_loss.back()) << "\n"
              << "eval mse: " << format_g6(eval) << " (psnr " << format_g6(psnr_db(eval)) << " dB)\n";
    return 0;
}

int cmd_adapt(const RunConfig& cfg, const std::string& method) {
    if (cfg.pristine_checkpoint.empty())
        throw ConfigError("adapt: pristine.checkpoint must point to the pre-trained model");
    const std::string out = prepare_out_dir(cfg);
    const DeskData data = load_desk_data(cfg);
    const ModelParams pristine = pristine_model(cfg, data);
    const Sha256 pristine_digest = model_digest(pristine);
    const DomainSplit split = domain_split(cfg, data, parse_transform_kind(cfg.domain_transform));

    if (method == "full") {
        ModelParams adapted = pristine;
        const TrainLog log = train_model(adapted, split.train.train_set(), cfg.full_epochs, cfg.full_lr, 32,
                                         sub_seed(cfg.seed, 6));
        const fs::path ckpt = fs::path(out) / "adapted_full.zfm";
        write_model(adapted, ckpt.string());
        if (!log.epoch_loss.empty()) write_loss_csv((fs::path(out) / "domain_loss.csv").string(), log);
        const double test_mse = eval_mse(adapted, split.test.train_set());
        std::cout << "adapted checkpoint: " << ckpt.string() << "\n"
                  << "domain test mse: " << format_g6(test_mse) << " (psnr " << format_g6(psnr_db(test_mse))
                  << " dB)\n";
        return 0;
    }

    SamOptions opt = cfg.sam_options();
    const ZfdaResult zfda = adapt_zfda(pristine, split.train, opt);
    const fs::path ckpt = fs::path(out) / "adapted_zfda.zfm";
    const fs::path patch_path = fs::path(out) / "delta.zfp";
    write_model(zfda.adapted, ckpt.string());
    export_patch(zfda.patch, pristine, patch_path.string());
    write_loss_csv((fs::path(out) / "domain_loss.csv").string(), zfda.sam.log);

    // Zero-forget self-verification: reload the exported patch, restore, and
    // require the pristine digest back, before reporting success.
    const DeltaPatch reloaded = load_patch(patch_path.string());
    const ModelParams restored = revert_patch(zfda.adapted, reloaded);
    if (model_digest(restored) != pristine_digest)
        throw DigestError("adapt: restore verification failed (zero-forget violated)");

    const int64_t budget = static_cast<int64_t>(cfg.zfda_gamma * static_cast<double>(pristine.param_total()));
    const double test_mse = eval_mse(zfda.adapted, split.test.train_set());
    std::cout << "adapted checkpoint: " << ckpt.string() << "\n"
              << "patch: " << patch_path.string() << "\n"
              << "patch entries: " << zfda.patch.entry_count() << " (budget " << budget << " = gamma*"
              << pristine.param_total() << ")\n"
              << "patch bytes: " << encode_patch(zfda.patch).size() << "\n"
              << "domain test mse: " << format_g6(test_mse) << " (psnr " << format_g6(psnr_db(test_mse)) << " dB)\n"
              << "restore verification: OK (digest " << digest_hex(pristine_digest) << ")\n";
    return 0;
}

int cmd_align_eval(const RunConfig& cfg, const std::string& encoder_path, const std::string& decoder_path) {
    if (cfg.pristine_checkpoint.empty())
        throw ConfigError("align-eval: pristine.checkpoint must point to the pre-trained model");
    const std::string out = prepare_out_dir(cfg);
    const DeskData data = load_desk_data(cfg);
    const ModelParams pristine = pristine_model(cfg, data);
    const double baseline = eval_mse(pristine, reconstruction_set(data.eval_images));
    const ModelParams enc_side = read_model(encoder_path);
    const ModelParams dec_side = read_model(decoder_path);
    const AlignmentReport rep =
        eval_alignment(enc_side, dec_side, data.eval_images, baseline, "pretrain-eval",
                       fs::path(encoder_path).filename().string(), fs::path(decoder_path).filename().string());
    append_csv_row((fs::path(out) / "alignment.csv").string(),
                   {"encoder_id", "decoder_id", "eval_set", "mse", "psnr_db", "j"},
                   {rep.encoder_id, rep.decoder_id, rep.eval_set_id, format_g6(rep.mse), format_g6(rep.psnr),
                    format_g6(rep.j)});
    std::cout << "encoder: " << rep.encoder_id << "\ndecoder: " << rep.decoder_id << "\nmse: " << format_g6(rep.mse)
              << "\npsnr_db: " << format_g6(rep.psnr) << "\nj: " << format_g6(rep.j) << "\n";
    return 0;
}

int cmd_patch(const std::string& action, const std::string& checkpoint, const std::string& patch_path,
              std::string out_path) {
    const ModelParams model = read_model(checkpoint);
    const DeltaPatch patch = load_patch(patch_path);
    if (out_path.empty()) out_path = checkpoint;
    if (action == "verify") {
        if (verify_digest(model, patch)) {
            std::cout << "OK (digest " << digest_hex(patch.model_digest) << ")\n";
            return 0;
        }
        std::cout << "MISMATCH: checkpoint digest " << digest_hex(model_digest(model)) << " != patch digest "
                  << digest_hex(patch.model_digest) << "\n";
        return 4;
    }
    if (action == "apply") {
        const ModelParams adapted = apply_patch(model, patch);
        write_model(adapted, out_path);
        std::cout << "applied " << patch.entry_count() << " entries\n"
                  << "digest: " << digest_hex(model_digest(adapted)) << "\n";
        return 0;
    }
    // revert
    const ModelParams restored = revert_patch(model, patch);
    write_model(restored, out_path);
    std::cout << "reverted " << patch.entry_count() << " entries\n"
              << "digest: " << digest_hex(model_digest(restored)) << "\n";
    return 0;
}

int cmd_experiment(const RunConfig& cfg, const std::string& suite) {
    const std::string out = prepare_out_dir(cfg);
    CsvTable table;
    std::string name;
    if (suite == "misalignment") {
        table = suite_misalignment(cfg);
        name = "misalignment.csv";
    } else if (suite == "zfda-sweep") {
        table = suite_zfda_sweep(cfg);
        name = "zfda_sweep.csv";
    } else {
        table = suite_ablation(cfg);
        name = "ablation.csv";
    }
    const fs::path path = fs::path(out) / name;
    write_csv(path.string(), table.header, table.rows);
    std::cout << "wrote " << table.rows.size() << " rows to " << path.string() << "\n";
    return 0;
}

int cmd_gen_data(const RunConfig& cfg) {
    const std::string out = prepare_out_dir(cfg);
    const DatasetHandle ds = load_dataset(cfg);
    const fs::path images = fs::path(out) / "images.zft";
    const fs::path labels = fs::path(out) / "labels.zft";
    write_tensor_file(images.string(), ds.images);
    Tensor label_tensor({ds.size()});
    for (int64_t i = 0; i < ds.size(); ++i) label_tensor.data[i] = static_cast<float>(ds.labels[i]);
    write_tensor_file(labels.string(), label_tensor);
    std::cout << "wrote " << ds.size() << " images " << shape_str(ds.images.shape) << " to " << images.string()
              << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Zero-forget domain adaptation for semantic-communication autoencoders"};
    app.require_subcommand(1);

    CommonOpts pre_opts, adapt_opts, align_opts, exp_opts, gen_opts;
    std::string adapt_method = "zfda";
    std::string align_encoder, align_decoder;
    std::string patch_action, patch_checkpoint, patch_file, patch_out;
    std::string exp_suite;

    CLI::App* pre = app.add_subcommand("pretrain", "Pre-train the autoencoder and write a checkpoint");
    add_common(pre, pre_opts);

    CLI::App* adapt = app.add_subcommand("adapt", "Adapt the pristine checkpoint to the configured domain");
    add_common(adapt, adapt_opts);
    adapt->add_option("--method", adapt_method, "full|zfda")->check(CLI::IsMember({"full", "zfda"}));
    adapt->add_option("--checkpoint", [&adapt_opts](const std::vector<std::string>& v) {
        adapt_opts.sets.push_back("pristine.checkpoint=" + v.back());
        return true;
    }, "Pristine checkpoint path (config key 'pristine.checkpoint')");
    adapt->add_option("--transform", [&adapt_opts](const std::vector<std::string>& v) {
        adapt_opts.sets.push_back("domain.transform=" + v.back());
        return true;
    }, "Domain transform (config key 'domain.transform')");
    adapt->add_option("--gamma", [&adapt_opts](const std::vector<std::string>& v) {
        adapt_opts.sets.push_back("zfda.gamma=" + v.back());
        return true;
    }, "Sparsity ratio (config key 'zfda.gamma')");

    CLI::App* align = app.add_subcommand("align-eval", "Evaluate a cross-paired encoder/decoder");
    add_common(align, align_opts);
    align->add_option("--encoder", align_encoder, "Checkpoint providing the encoder")->required();
    align->add_option("--decoder", align_decoder, "Checkpoint providing the decoder")->required();

    CLI::App* patch = app.add_subcommand("patch", "Verify, apply or revert a sparse patch");
    patch->add_option("action", patch_action, "verify|apply|revert")
        ->required()
        ->check(CLI::IsMember({"verify", "apply", "revert"}));
    patch->add_option("--checkpoint", patch_checkpoint, "Model checkpoint (.zfm)")->required();
    patch->add_option("--patch", patch_file, "Patch file (.zfp)")->required();
    patch->add_option("--out", patch_out, "Output checkpoint path (default: in place)");

    CLI::App* exp = app.add_subcommand("experiment", "Run a desk-scale experiment suite");
    add_common(exp, exp_opts);
    exp->add_option("suite", exp_suite, "misalignment|zfda-sweep|ablation")
        ->required()
        ->check(CLI::IsMember({"misalignment", "zfda-sweep", "ablation"}));

    CLI::App* gen = app.add_subcommand("gen-data", "Write the configured dataset as .zft tensors");
    add_common(gen, gen_opts);

    std::vector<const char*> argv;
    argv.push_back("zfda");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(pre)) return cmd_pretrain(resolve_config(pre_opts));
        if (app.got_subcommand(adapt)) return cmd_adapt(resolve_config(adapt_opts), adapt_method);
        if (app.got_subcommand(align))
            return cmd_align_eval(resolve_config(align_opts), align_encoder, align_decoder);
        if (app.got_subcommand(patch)) return cmd_patch(patch_action, patch_checkpoint, patch_file, patch_out);
        if (app.got_subcommand(exp)) return cmd_experiment(resolve_config(exp_opts), exp_suite);
        if (app.got_subcommand(gen)) return cmd_gen_data(resolve_config(gen_opts));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const DigestError& e) {
        std::cerr << "digest mismatch: " << e.what() << "\n";
        return 4;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 10;
    }
    return 1;
}

}  // namespace zfda::cli
