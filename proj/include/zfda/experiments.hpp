#pragma once

#include <string>
#include <vector>

#include "zfda/align.hpp"
#include "zfda/config.hpp"
#include "zfda/dataio.hpp"
#include "zfda/domain.hpp"

namespace zfda {

// Deterministic sub-stream seeds for the independent random decisions of a
// run (dataset, splits, model init, training order...).
uint64_t sub_seed(uint64_t base, uint64_t tag);

// Desk-scale data derived from a config: the pre-training split, the held-out
// pretrain-distribution eval split, and the untransformed domain-class pool.
struct DeskData {
    DatasetHandle dataset;
    Tensor pretrain_images;
    Tensor eval_images;
    DatasetHandle domain_pool;
};

DeskData load_desk_data(const RunConfig& cfg);

// Full dataset load honoring dataset.kind / dataset.downsample.
DatasetHandle load_dataset(const RunConfig& cfg);

// Loads pristine.checkpoint when set (optionally pinning pristine.digest),
// otherwise builds and pre-trains the configured autoencoder.
ModelParams pristine_model(const RunConfig& cfg, const DeskData& data);

struct DeskSetup {
    DeskData data;
    ModelParams pristine;
    double baseline_loss = 0.0;  // L(theta*, phi*) on the eval split
};

DeskSetup prepare_setup(const RunConfig& cfg);

// Domain-class pool restricted + transformed, split into train/test.
struct DomainSplit {
    Domain train, test;
};
DomainSplit domain_split(const RunConfig& cfg, const DeskData& data, TransformKind kind);

// Fresh samples from the pre-training distribution (synthetic regeneration or
// resampling of the pretrain split) used by the re-alignment baselines.
Tensor shared_pretrain_data(const RunConfig& cfg, const DeskData& data, int64_t n, uint64_t tag);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Fig.2-style table: 4 transforms x {encoder,decoder} adapted x {misaligned,
// tuning, equalizer, zfda-restore}, one row per cell per seed.
CsvTable suite_misalignment(const RunConfig& cfg);

// Fig.3-style table: gamma grid x 4 domains, ZFDA vs full fine-tune vs
// pristine, with patch size accounting.
CsvTable suite_zfda_sweep(const RunConfig& cfg);

// {optimized|frozen mask} x {linear|uniform allocation} grid at the ablation
// gamma.
CsvTable suite_ablation(const RunConfig& cfg);

}  // namespace zfda
