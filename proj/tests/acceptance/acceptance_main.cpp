// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Each criterion pins its tolerance in code.

#include <algorithm>
#include <limits>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "zfda/align.hpp"
#include "zfda/delta.hpp"
#include "zfda/digest.hpp"
#include "zfda/experiments.hpp"
#include "zfda/io_util.hpp"
#include "zfda/model_io.hpp"
#include "zfda/rng.hpp"
#include "zfda/sam.hpp"

namespace fs = std::filesystem;
using namespace zfda;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string scratch_dir() {
    static const std::string dir = [] {
        const fs::path p = fs::temp_directory_path() / "zfda_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p.string();
    }();
    return dir;
}

// Desk-scale configuration shared by the experiment-driven criteria.
RunConfig desk_config() {
    RunConfig cfg;
    cfg.seed = 1000;
    cfg.dataset_n = 480;
    cfg.pretrain_epochs = 15;
    cfg.pretrain_lr = 0.02;
    cfg.full_epochs = 10;
    cfg.full_lr = 0.002;
    cfg.zfda_epochs = 30;
    cfg.zfda_alpha_s = 1.0;
    cfg.zfda_alpha_v = 0.002;
    cfg.tuning_samples = 256;
    cfg.tuning_lr = 0.002;
    cfg.equalizer_samples = 256;
    cfg.equalizer_epochs = 10;
    cfg.equalizer_lr = 0.02;
    cfg.experiment_seeds = 3;
    cfg.experiment_gammas = {0.0025, 0.01};
    cfg.ablation_gamma = 0.003;
    return cfg;
}

struct Check {
    bool ok = true;
    std::string detail;
    void fail(const std::string& msg) {
        ok = false;
        if (!detail.empty()) detail += "; ";
        detail += msg;
    }
    void note(const std::string& msg) {
        if (detail.empty()) detail = msg;
    }
};

// ---------------------------------------------------------------------------
// Criteria 1 + 2 share one grid of ZFDA runs over gamma x seed x transform.

struct ZeroForgetRun {
    double gamma;
    uint64_t seed;
    TransformKind kind;
    bool digest_ok;
    bool j_zero;
    int64_t patch_entries;  // from the reloaded file
    int64_t budget;
};

struct ZeroForgetGrid {
    std::vector<ZeroForgetRun> runs;
    double seconds = 0.0;
};

const ZeroForgetGrid& zero_forget_grid() {
    static const ZeroForgetGrid grid = [] {
        ZeroForgetGrid g;
        const double t0 = now_seconds();
        RunConfig cfg = desk_config();
        cfg.pretrain_epochs = 8;  // restoration does not depend on model quality
        const DeskSetup setup = prepare_setup(cfg);
        const std::string dir = scratch_dir();
        const std::vector<double> gammas = {0.0003, 0.001, 0.01};
        const std::vector<TransformKind> kinds = {TransformKind::VariedAngle, TransformKind::VariedPerspective,
                                                  TransformKind::VariedContrast, TransformKind::VariedHue};
        int run_id = 0;
        for (double gamma : gammas) {
            for (uint64_t seed = 1; seed <= 3; ++seed) {
                for (TransformKind kind : kinds) {
                    const DomainSplit split = domain_split(cfg, setup.data, kind);
                    SamOptions opt = cfg.sam_options();
                    opt.gamma = gamma;
                    opt.seed = cfg.seed + 17 * seed;
                    const ZfdaResult res = adapt_zfda(setup.pristine, split.train, opt);
                    const std::string path = dir + "/zf_" + std::to_string(run_id++) + ".zfp";
                    export_patch(res.patch, setup.pristine, path);
                    const DeltaPatch reloaded = load_patch(path);
                    const ModelParams restored = revert_patch(res.adapted, reloaded);
                    ZeroForgetRun r;
                    r.gamma = gamma;
                    r.seed = seed;
                    r.kind = kind;
                    r.digest_ok = model_digest(restored) == model_digest(setup.pristine);
                    const AlignmentReport rep =
                        eval_alignment(restored, restored, setup.data.eval_images, setup.baseline_loss);
                    r.j_zero = rep.j == 0.0;
                    r.patch_entries = reloaded.entry_count();
                    r.budget = static_cast<int64_t>(gamma * static_cast<double>(setup.pristine.param_total()));
                    g.runs.push_back(r);
                }
            }
        }
        g.seconds = now_seconds() - t0;
        return g;
    }();
    return grid;
}

Check criterion1() {
    Check c;
    const ZeroForgetGrid& grid = zero_forget_grid();
    int bad = 0;
    for (const ZeroForgetRun& r : grid.runs)
        if (!r.digest_ok || !r.j_zero) ++bad;
    if (bad > 0) c.fail(std::to_string(bad) + "/36 runs broke byte-identity or J=0");
    if (grid.runs.size() != 36) c.fail("expected 36 runs, got " + std::to_string(grid.runs.size()));
    if (grid.seconds >= 600.0) c.fail("runtime " + format_g6(grid.seconds) + "s >= 600s");
    c.note("36 runs, all byte-identical, J=0 exactly, " + format_g6(grid.seconds) + "s");
    return c;
}

Check criterion2() {
    Check c;
    int bad = 0;
    for (const ZeroForgetRun& r : zero_forget_grid().runs)
        if (r.patch_entries > r.budget) ++bad;
    if (bad > 0) c.fail(std::to_string(bad) + " patches exceed gamma*(N_E+N_D)");
    c.note("all 36 patch files within the l0 budget");
    return c;
}

// ---------------------------------------------------------------------------

Check criterion3() {
    Check c;
    const ModelParams pristine = build_model({dense_spec(16, 8, false)}, {}, {16}, 301);
    Rng rng(302);
    Tensor x({24, 16});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    Tensor y({24, 8});
    for (auto& v : y.data) v = static_cast<float>(rng.normal());

    SamState sam = init_sam(pristine, 0.25, 303);
    sam.alpha_s = 1.0;
    Rng vrng(304);
    for (double& v : sam.layers[0].values) v = 0.4 * vrng.normal();

    int64_t steps = 0, swap_steps = 0, violations = 0;
    for (int it = 0; it < 150; ++it) {
        const SamGrads grads = sam_gradients(pristine, sam, x, y, /*fixed_v=*/true);
        const std::vector<MaskSwap> swaps = sam_step(sam, grads);
        ++steps;
        for (const MaskSwap& swap : swaps) {
            if (swap.count() == 0) continue;
            ++swap_steps;
            const SwapEstimate est = predicted_loss_delta(swap);
            if (!(est.g_enter_max < est.g_leave_min) || !(est.delta < 0.0)) ++violations;
        }
    }
    if (steps < 100) c.fail("only " + std::to_string(steps) + " score steps");
    if (swap_steps < 1) c.fail("no swaps occurred; property would be vacuous");
    if (violations > 0) c.fail(std::to_string(violations) + " swap steps violated the first-order inequality");
    c.note(std::to_string(steps) + " steps, " + std::to_string(swap_steps) + " swap events, 0 violations");
    return c;
}

Check criterion4() {
    Check c;
    Rng rng(401);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.next_below(512));
        std::vector<double> s(n);
        for (auto& v : s) v = std::floor(rng.uniform(-4.0, 4.0) * 8.0) / 8.0;  // coarse grid forces ties
        const int64_t k = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n + 1)));
        const std::vector<uint8_t> mask = topk_mask(s, k);
        std::vector<int64_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) { return s[a] > s[b]; });
        std::vector<uint8_t> oracle(n, 0);
        for (int64_t i = 0; i < k; ++i) oracle[idx[i]] = 1;
        if (mask != oracle) ++mismatches;
    }
    if (mismatches > 0) c.fail(std::to_string(mismatches) + "/1000 vectors disagree with the sort oracle");
    c.note("1000 vectors, exact equality");
    return c;
}

Check criterion5() {
    Check c;
    const double t0 = now_seconds();
    const int64_t dim = 8, n = 64;
    ModelParams pristine = build_model({dense_spec(dim, 1, false)}, {}, {dim}, 501);
    Rng rng(502);
    Tensor x({n, dim});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    std::vector<double> w_true(dim);
    for (int64_t i = 0; i < dim; ++i)
        w_true[i] = static_cast<double>(pristine.enc_params[0].data[i]) + 0.02 * rng.normal();
    w_true[1] += 1.8;
    w_true[6] -= 1.2;
    Tensor y({n, 1});
    for (int64_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int64_t i = 0; i < dim; ++i) acc += static_cast<double>(x.data[r * dim + i]) * w_true[i];
        y.data[r] = static_cast<float>(acc);
    }

    // Exhaustive least-squares oracle over all C(8,2) = 28 masks.
    std::vector<double> resid(n);
    for (int64_t r = 0; r < n; ++r) {
        double pred = 0.0;
        for (int64_t i = 0; i < dim; ++i)
            pred += static_cast<double>(x.data[r * dim + i]) * static_cast<double>(pristine.enc_params[0].data[i]);
        resid[r] = static_cast<double>(y.data[r]) - pred;
    }
    double best = std::numeric_limits<double>::infinity();
    for (int64_t a = 0; a < dim; ++a) {
        for (int64_t b = a + 1; b < dim; ++b) {
            double g00 = 0, g01 = 0, g11 = 0, r0 = 0, r1 = 0;
            for (int64_t r = 0; r < n; ++r) {
                const double xa = x.data[r * dim + a], xb = x.data[r * dim + b];
                g00 += xa * xa;
                g01 += xa * xb;
                g11 += xb * xb;
                r0 += xa * resid[r];
                r1 += xb * resid[r];
            }
            const double det = g00 * g11 - g01 * g01;
            const double va = (g11 * r0 - g01 * r1) / det;
            const double vb = (g00 * r1 - g01 * r0) / det;
            double loss = 0.0;
            for (int64_t r = 0; r < n; ++r) {
                const double e = resid[r] - va * x.data[r * dim + a] - vb * x.data[r * dim + b];
                loss += e * e;
            }
            best = std::min(best, loss / static_cast<double>(n));
        }
    }

    SamOptions opt;
    opt.gamma = 0.25;
    opt.epochs = 400;
    opt.alpha_s = 1.0;
    opt.alpha_v = 0.05;
    opt.batch_size = n;
    opt.seed = 503;
    opt.early_stop_tol = 0.0;
    opt.early_stop_patience = 1000;
    const SamResult res = optimize_sam(pristine, TrainSet{x, y}, opt);
    const double final_loss = eval_mse(effective_params(pristine, res.state), TrainSet{x, y});
    const double seconds = now_seconds() - t0;
    if (res.state.layers[0].keep != 2) c.fail("keep count != 2");
    if (!(final_loss <= 1.1 * best))
        c.fail("final loss " + format_g6(final_loss) + " > 1.1 * oracle " + format_g6(best));
    if (seconds >= 60.0) c.fail("runtime " + format_g6(seconds) + "s >= 60s");
    c.note("final " + format_g6(final_loss) + " vs oracle " + format_g6(best) + ", " + format_g6(seconds) + "s");
    return c;
}

// ---------------------------------------------------------------------------

double fd_param(const ModelParams& model, const Tensor& x, const Tensor& target, bool enc_side, size_t layer,
                int64_t index, double h) {
    ModelParams m = model;
    Tensor& t = enc_side ? m.enc_params[layer] : m.dec_params[layer];
    const float p0 = t.data[index];
    const float pp = static_cast<float>(static_cast<double>(p0) + h);
    const float pm = static_cast<float>(static_cast<double>(p0) - h);
    t.data[index] = pp;
    const double lp = loss_mse(forward(m, x).outcome, target);
    t.data[index] = pm;
    const double lm = loss_mse(forward(m, x).outcome, target);
    return (lp - lm) / (static_cast<double>(pp) - static_cast<double>(pm));
}

Check criterion6() {
    Check c;
    Rng rng(601);
    const double h = 5e-3, tol = 1e-4;
    // One model per layer kind; activations are probed through the models
    // that contain them.
    struct Case {
        const char* name;
        ModelParams model;
        Shape in_shape;
    };
    std::vector<Case> cases;
    cases.push_back({"dense", build_autoencoder({dense_spec(6, 5), activation_spec(LayerKind::ReLU),
                                                 dense_spec(5, 4, false)},
                                                {dense_spec(4, 6), activation_spec(LayerKind::Sigmoid)}, {6}, 611),
                     {6}});
    cases.push_back({"conv2d", build_model({conv2d_spec(2, 3, 3, 3, 2, 1), activation_spec(LayerKind::ReLU),
                                            conv2d_spec(3, 2, 3, 3, 1, 1, 0, 0, false)},
                                           {}, {2, 6, 6}, 612),
                     {2, 6, 6}});
    cases.push_back({"conv_transpose2d",
                     build_model({conv_transpose2d_spec(2, 3, 4, 4, 2, 1), activation_spec(LayerKind::Sigmoid),
                                  conv_transpose2d_spec(3, 1, 3, 3, 1, 1, 0, 0, false)},
                                 {}, {2, 3, 3}, 613),
                     {2, 3, 3}});
    int64_t total_probes = 0, failures = 0;
    for (const Case& cs : cases) {
        Shape xshape = cs.in_shape;
        xshape.insert(xshape.begin(), 3);
        Tensor x(xshape);
        for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        Shape yshape = cs.model.output_shape;
        yshape.insert(yshape.begin(), 3);
        Tensor y(yshape);
        for (auto& v : y.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
        ForwardCache cache;
        const ForwardResult fr = forward(cs.model, x, cache);
        const ModelGrads grads = backward(cs.model, cache, loss_mse_grad(fr.outcome, y));
        for (int probe = 0; probe < 110; ++probe) {
            const bool enc_side = cs.model.decoder.empty() ? true : rng.uniform() < 0.5;
            const auto& params = enc_side ? cs.model.enc_params : cs.model.dec_params;
            size_t layer = static_cast<size_t>(rng.next_below(params.size()));
            while (params[layer].numel() == 0) layer = static_cast<size_t>(rng.next_below(params.size()));
            const int64_t index = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(params[layer].numel())));
            const double analytic = (enc_side ? grads.enc : grads.dec)[layer].data[index];
            const double fd = fd_param(cs.model, x, y, enc_side, layer, index, h);
            const double err = std::fabs(analytic - fd) / std::max({1.0, std::fabs(analytic), std::fabs(fd)});
            ++total_probes;
            if (err > tol) ++failures;
        }
    }
    if (failures > 0) c.fail(std::to_string(failures) + "/" + std::to_string(total_probes) + " probes off by >1e-4");
    c.note(std::to_string(total_probes) + " probes across dense/conv/conv_transpose/relu/sigmoid, tol 1e-4");
    return c;
}

// ---------------------------------------------------------------------------
// Experiment-driven criteria (7..10) parse the CSV tables the suites emit.

struct ParsedCsv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw Error("missing CSV column " + name);
    }
};

ParsedCsv parse_csv(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    ParsedCsv csv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        cells.push_back(cur);
        if (first) {
            csv.header = cells;
            first = false;
        } else {
            csv.rows.push_back(cells);
        }
    }
    return csv;
}

const ParsedCsv& misalignment_csv() {
    static const ParsedCsv csv = [] {
        const RunConfig cfg = desk_config();
        const CsvTable table = suite_misalignment(cfg);
        const std::string path = scratch_dir() + "/misalignment.csv";
        write_csv(path, table.header, table.rows);
        return parse_csv(path);
    }();
    return csv;
}

struct SweepResult {
    ParsedCsv csv;
    double seconds;
};

const SweepResult& sweep_csv() {
    static const SweepResult result = [] {
        const double t0 = now_seconds();
        const RunConfig cfg = desk_config();
        const CsvTable table = suite_zfda_sweep(cfg);
        const std::string path = scratch_dir() + "/zfda_sweep.csv";
        write_csv(path, table.header, table.rows);
        return SweepResult{parse_csv(path), now_seconds() - t0};
    }();
    return result;
}

const ParsedCsv& ablation_csv() {
    static const ParsedCsv csv = [] {
        const RunConfig cfg = desk_config();
        const CsvTable table = suite_ablation(cfg);
        const std::string path = scratch_dir() + "/ablation.csv";
        write_csv(path, table.header, table.rows);
        return parse_csv(path);
    }();
    return csv;
}

Check criterion7() {
    Check c;
    const ParsedCsv& csv = misalignment_csv();
    const int c_dom = csv.col("domain"), c_side = csv.col("side"), c_method = csv.col("method"), c_j = csv.col("j");
    std::map<std::string, std::vector<double>> enc_j, dec_j;
    for (const auto& row : csv.rows) {
        if (row[c_method] != "misaligned") continue;
        (row[c_side] == "encoder" ? enc_j : dec_j)[row[c_dom]].push_back(std::stod(row[c_j]));
    }
    double enc_sum = 0.0, dec_sum = 0.0;
    int64_t enc_n = 0, dec_n = 0;
    for (const auto& [dom, js] : enc_j) {
        const double mean = std::accumulate(js.begin(), js.end(), 0.0) / static_cast<double>(js.size());
        if (!(mean > 0.0)) c.fail("mean J(encoder-adapted) <= 0 in domain " + dom);
        enc_sum += std::accumulate(js.begin(), js.end(), 0.0);
        enc_n += static_cast<int64_t>(js.size());
    }
    for (const auto& [dom, js] : dec_j) {
        const double mean = std::accumulate(js.begin(), js.end(), 0.0) / static_cast<double>(js.size());
        if (!(mean > 0.0)) c.fail("mean J(decoder-adapted) <= 0 in domain " + dom);
        dec_sum += std::accumulate(js.begin(), js.end(), 0.0);
        dec_n += static_cast<int64_t>(js.size());
    }
    if (enc_j.size() != 4 || dec_j.size() != 4) c.fail("expected 4 domains per side");
    const double enc_mean = enc_sum / static_cast<double>(enc_n);
    const double dec_mean = dec_sum / static_cast<double>(dec_n);
    if (!(dec_mean >= enc_mean))
        c.fail("mean J decoder " + format_g6(dec_mean) + " < encoder " + format_g6(enc_mean));
    c.note("mean J: encoder " + format_g6(enc_mean) + ", decoder " + format_g6(dec_mean) + ", all domains > 0");
    return c;
}

Check criterion8() {
    Check c;
    const SweepResult& sweep = sweep_csv();
    const ParsedCsv& csv = sweep.csv;
    const int c_dom = csv.col("domain"), c_gamma = csv.col("gamma"), c_method = csv.col("method"),
              c_mse = csv.col("domain_test_mse");
    std::map<std::string, std::vector<double>> zfda_mse, full_mse;
    for (const auto& row : csv.rows) {
        if (row[c_method] == "zfda" && std::stod(row[c_gamma]) == 0.01)
            zfda_mse[row[c_dom]].push_back(std::stod(row[c_mse]));
        if (row[c_method] == "full") full_mse[row[c_dom]].push_back(std::stod(row[c_mse]));
    }
    if (zfda_mse.size() != 4 || full_mse.size() != 4) c.fail("expected 4 domains");
    std::string detail;
    for (const auto& [dom, zs] : zfda_mse) {
        const double z = std::accumulate(zs.begin(), zs.end(), 0.0) / static_cast<double>(zs.size());
        const auto& fs_ = full_mse[dom];
        const double f = std::accumulate(fs_.begin(), fs_.end(), 0.0) / static_cast<double>(fs_.size());
        if (!(z <= 1.25 * f))
            c.fail(dom + ": zfda mse " + format_g6(z) + " > 1.25 * full " + format_g6(f));
        detail += (detail.empty() ? "" : ", ") + dom + " " + format_g6(z / f);
    }
    if (sweep.seconds >= 900.0) c.fail("sweep runtime " + format_g6(sweep.seconds) + "s >= 900s");
    c.note("zfda/full mse ratios: " + detail + "; sweep " + format_g6(sweep.seconds) + "s");
    return c;
}

Check criterion9() {
    Check c;
    const ParsedCsv& csv = ablation_csv();
    const int c_mask = csv.col("mask_mode"), c_alloc = csv.col("alloc"), c_psnr = csv.col("domain_test_psnr_db");
    std::map<std::string, std::vector<double>> by_mask, by_alloc;
    for (const auto& row : csv.rows) {
        by_mask[row[c_mask]].push_back(std::stod(row[c_psnr]));
        by_alloc[row[c_alloc]].push_back(std::stod(row[c_psnr]));
    }
    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    const double opt = mean(by_mask["optimized"]), frozen = mean(by_mask["frozen"]);
    const double lin = mean(by_alloc["linear"]), uni = mean(by_alloc["uniform"]);
    if (!(opt >= frozen)) c.fail("optimized " + format_g6(opt) + " dB < frozen " + format_g6(frozen) + " dB");
    if (!(lin >= uni)) c.fail("linear " + format_g6(lin) + " dB < uniform " + format_g6(uni) + " dB");
    c.note("psnr: optimized " + format_g6(opt) + " vs frozen " + format_g6(frozen) + "; linear " + format_g6(lin) +
           " vs uniform " + format_g6(uni));
    return c;
}

Check criterion10() {
    Check c;
    const ParsedCsv& csv = sweep_csv().csv;
    const int c_gamma = csv.col("gamma"), c_method = csv.col("method"), c_ratio = csv.col("patch_file_ratio");
    int n_small = 0, n_large = 0;
    for (const auto& row : csv.rows) {
        if (row[c_method] != "zfda") continue;
        const double gamma = std::stod(row[c_gamma]);
        const double ratio = std::stod(row[c_ratio]);
        if (gamma == 0.0025) {
            ++n_small;
            if (!(ratio <= 0.01)) c.fail("gamma 0.25%: file ratio " + format_g6(ratio) + " > 1%");
        } else if (gamma == 0.01) {
            ++n_large;
            if (!(ratio <= 0.03)) c.fail("gamma 1%: file ratio " + format_g6(ratio) + " > 3%");
        }
    }
    if (n_small == 0 || n_large == 0) c.fail("sweep CSV missing gamma=0.25% or gamma=1% rows");
    c.note(std::to_string(n_small + n_large) + " CSV rows within the size bounds");
    return c;
}

// ---------------------------------------------------------------------------

Check criterion11() {
    Check c;
    const std::string dir = scratch_dir();
    // Valid reference files.
    const ModelParams model =
        build_autoencoder({dense_spec(6, 4), activation_spec(LayerKind::ReLU), dense_spec(4, 3)},
                          {dense_spec(3, 6), activation_spec(LayerKind::Sigmoid)}, {6}, 1101);
    SamState sam = init_sam(model, 0.3, 1102);
    Rng vr(1103);
    for (SamLayer& l : sam.layers)
        for (int64_t i = 0; i < l.param_count; ++i)
            if (l.mask[i]) l.values[i] = vr.normal();
    const DeltaPatch patch = extract_delta(sam, model);
    Tensor tensor({3, 4, 2});
    for (auto& v : tensor.data) v = static_cast<float>(vr.uniform(-2.0, 2.0));

    const std::vector<uint8_t> zfm = encode_model(model);
    const std::vector<uint8_t> zfp = encode_patch(patch);
    const std::vector<uint8_t> zft = encode_tensor(tensor);

    // Bit-exact round trips of the valid files.
    if (encode_model(decode_model(zfm, "t")) != zfm) c.fail(".zfm round trip not bit-exact");
    if (encode_patch(decode_patch(zfp, "t")) != zfp) c.fail(".zfp round trip not bit-exact");
    if (encode_tensor(decode_tensor(zft, "t")) != zft) c.fail(".zft round trip not bit-exact");

    // Every patch layer must carry entries so that layer-id mutations cannot
    // land on an equivalent well-formed file.
    for (const DeltaLayer& l : patch.layers)
        if (l.entries.empty()) c.fail("fuzz fixture: patch layer without entries");

    // Structural fuzz: every mutant must be rejected. Bit flips are restricted
    // to byte spans that the readers validate (magic, version, counts, kinds,
    // dims, digests); truncation and extension apply anywhere.
    Rng rng(1104);
    int64_t mutants = 0, silent = 0;
    using Spans = std::vector<std::pair<size_t, size_t>>;
    struct Target {
        const char* name;
        const std::vector<uint8_t>* bytes;
        Spans spans;
        std::function<void(const std::vector<uint8_t>&)> load;
    };
    const std::vector<Target> targets = {
        // header 10 + first layer record: kind 1 + dimcount 1 + dims 12 + param-count 8
        {"zfm", &zfm, {{0, 32}}, [&](const std::vector<uint8_t>& b) { decode_model(b, "fuzz"); }},
        // header without the free-form gamma field, then layer-id + entry-count
        {"zfp", &zfp, {{0, 40}, {48, 64}},
         [&](const std::vector<uint8_t>& b) {
             const DeltaPatch p = decode_patch(b, "fuzz");
             validate_patch_layout(p, model);
             if (!verify_digest(model, p)) throw DigestError("fuzz: digest mismatch");
         }},
        // header 8 + three dims
        {"zft", &zft, {{0, 20}}, [&](const std::vector<uint8_t>& b) { decode_tensor(b, "fuzz"); }},
    };
    for (const Target& target : targets) {
        size_t span_total = 0;
        for (const auto& [lo, hi] : target.spans) span_total += hi - lo;
        for (int trial = 0; trial < 400; ++trial) {
            std::vector<uint8_t> mutated = *target.bytes;
            const int op = static_cast<int>(rng.next_below(4));
            if (op == 0) {
                mutated.resize(rng.next_below(mutated.size()));  // truncate
            } else if (op == 1) {
                const size_t extra = 1 + rng.next_below(16);
                for (size_t i = 0; i < extra; ++i) mutated.push_back(static_cast<uint8_t>(rng.next_below(256)));
            } else {
                size_t off = rng.next_below(span_total);
                size_t pos = 0;
                for (const auto& [lo, hi] : target.spans) {
                    if (off < hi - lo) {
                        pos = lo + off;
                        break;
                    }
                    off -= hi - lo;
                }
                mutated[pos] ^= static_cast<uint8_t>(1 + rng.next_below(255));
            }
            if (mutated == *target.bytes) continue;
            ++mutants;
            try {
                target.load(mutated);
                ++silent;
            } catch (const Error&) {
                // rejected, as required
            }
        }
    }
    if (mutants < 1000) c.fail("only " + std::to_string(mutants) + " mutants generated");
    if (silent > 0) c.fail(std::to_string(silent) + " mutants silently accepted");
    c.note(std::to_string(mutants) + " structural mutants, 0 silent acceptances");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Check()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "zero-forget exactness (gamma x seed x transform grid)", criterion1},
        {2, "sparsity constraint from the patch files", criterion2},
        {3, "first-order descent on every mask swap (fixed v)", criterion3},
        {4, "topk_mask equals the sort oracle on 1000 vectors", criterion4},
        {5, "subset-selection oracle on the 8-dim linear toy", criterion5},
        {6, "analytic gradients match finite differences", criterion6},
        {7, "misalignment direction (Fig. 2 analogue)", criterion7},
        {8, "zfda-vs-full domain MSE within 25% at gamma=1%", criterion8},
        {9, "ablation directions (mask optimization, allocation)", criterion9},
        {10, "patch economics at gamma=0.25% and 1%", criterion10},
        {11, "format round-trips and fuzzed rejection", criterion11},
    };
    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);
    int failed = 0;
    for (const Criterion& cr : criteria) {
        if (only != 0 && cr.id != only) continue;
        const double t0 = now_seconds();
        Check result;
        try {
            result = cr.run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        const double secs = now_seconds() - t0;
        std::printf("[%s] C%-2d %s  (%s) [%.1fs]\n", result.ok ? "PASS" : "FAIL", cr.id, cr.name,
                    result.detail.c_str(), secs);
        std::fflush(stdout);
        if (!result.ok) ++failed;
    }
    return failed;
}
