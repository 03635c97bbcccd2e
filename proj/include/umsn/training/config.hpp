#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "umsn/losses/losses.hpp"

namespace umsn::training {

struct TrainConfig {
    std::string phase;  // snet | snet_finetune | stage1 | umsn
    int class_index = 0;  // stage1 only, 1..4
    double learning_rate = 0.0002;
    int iterations = 1;
    int batch_size = 16;
    std::uint64_t master_seed = 0;
    double width_multiplier = 1.0;
    losses::LossConfig loss;
    int checkpoint_every = 1000;
    std::string dataset_manifest;
    std::string out_dir;
    std::string mask_source = "ground_truth";  // or "snet"
    std::string snet_checkpoint;
    std::array<std::string, 4> stage1_checkpoints;
    std::string resume_checkpoint;
    std::uint64_t extractor_seed = 77;
    std::string extractor_file;
    int log_every = 10;
    bool deterministic = true;  // opt-out enables free-threaded data loading only
    // ablation switches (umsn phase)
    bool use_streams = true;
    bool use_mask_concat = false;
    bool use_nrl = true;
    bool use_confidence = true;
    bool keep_stage1_heads = true;

    void validate() const;
    std::string to_json_text() const;
    static TrainConfig from_json_text(const std::string& text);
    std::string digest() const { return digest_text(to_json_text()); }

private:
    static std::string digest_text(const std::string& text);
};

/// Documented full-scale defaults per phase (learning rate, iteration count,
/// batch size); tests and desk runs override with tiny values.
TrainConfig default_train_config(const std::string& phase);

}  // namespace umsn::training
