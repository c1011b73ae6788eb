#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "zfda/domain.hpp"
#include "zfda/sam.hpp"

namespace zfda {

// Every run setting, parsed from `key = value` lines (# starts a comment)
// plus CLI flag overrides. Every numeric key is range-checked at parse time
// and unknown keys are errors. echo() serializes the fully-resolved config so
// a run can be reproduced from its output directory alone.
struct RunConfig {
    uint64_t seed = 7;
    std::string out_dir = "out";

    std::string dataset_kind = "synthetic";  // synthetic|cifar10|cifar100|zft
    std::string dataset_path;
    std::string dataset_labels_path;
    int64_t dataset_n = 480;
    int64_t dataset_channels = 3, dataset_height = 16, dataset_width = 16;
    bool dataset_downsample = false;

    std::vector<int64_t> pretrain_classes = {0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int64_t> domain_classes = {8, 9};
    double eval_fraction = 0.2;
    double domain_test_fraction = 0.25;

    std::string encoder_spec =
        "conv:3:12:3:3:2:1, relu, conv:12:24:3:3:2:1, relu, dense:384:128, relu, dense:128:128";
    std::string decoder_spec =
        "dense:128:128, relu, dense:128:384, relu, convt:24:12:4:4:2:1:4:4, relu, convt:12:3:4:4:2:1, sigmoid";
    std::string pristine_checkpoint;
    std::string pristine_digest;  // optional hex64 pin

    int64_t pretrain_epochs = 40;
    double pretrain_lr = 0.01;
    int64_t pretrain_batch = 32;

    std::string domain_transform = "va";
    double va_angle = 30.0;
    double vp_shift = 0.2;
    double vc_contrast = 1.8;
    double vh_angle = 60.0;

    int64_t full_epochs = 10;
    double full_lr = 1e-4;

    double zfda_gamma = 0.01;
    int64_t zfda_epochs = 30;
    double zfda_alpha_s = 1.0;
    double zfda_alpha_v = 1e-4;
    int64_t zfda_batch = 32;
    std::string zfda_v_grad_mode = "dense";   // dense|masked
    std::string zfda_allocation = "linear";   // linear|uniform
    bool zfda_update_scores = true;

    int64_t tuning_iterations = 8;
    int64_t tuning_samples = 1024;
    double tuning_lr = 1e-3;

    int64_t equalizer_epochs = 30;
    int64_t equalizer_samples = 1024;
    double equalizer_lr = 0.01;

    std::vector<double> experiment_gammas = {0.0003, 0.001, 0.003, 0.01};
    int64_t experiment_seeds = 3;
    double ablation_gamma = 0.003;

    // Throws ConfigError on unknown keys or out-of-range values.
    void set(const std::string& key, const std::string& value);
    void apply_file(const std::string& path);
    void apply_overrides(const std::vector<std::pair<std::string, std::string>>& kv);
    std::string echo() const;

    Transform transform() const;
    // Transform with the kind overridden but parameters from this config.
    Transform transform_of(TransformKind kind) const;
    SamOptions sam_options() const;
};

// Parses `key = value` lines; returns pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_config_lines(const std::string& text);

}  // namespace zfda
