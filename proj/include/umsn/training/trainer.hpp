#pragma once

#include <vector>

#include "umsn/synthesis/dataset.hpp"
#include "umsn/training/checkpoint.hpp"
#include "umsn/training/config.hpp"

namespace umsn::training {

struct TrainRecord {
    long iter = 0;
    std::string phase;
    real loss = 0.0;
    std::array<real, 4> per_class{};   // phase-dependent: f-scores (snet) or class losses
    std::array<real, 4> confidence{};  // 1s outside the joint phase
    real lr = 0.0;
    real wallclock = 0.0;
};

struct TrainResult {
    std::vector<TrainRecord> history;
    std::string final_checkpoint;
    real final_train_psnr = 0.0;   // stage1/umsn: mean train-set PSNR after training
    real input_train_psnr = 0.0;   // stage1/umsn: mean PSNR of the raw inputs
    real final_f_score = 0.0;      // snet phases: mean train F-score
};

/// Per-iteration batch indices; a pure function of (master seed, iteration) so
/// any parallel data loading reproduces the serial order.
std::vector<int> batch_indices(std::uint64_t master_seed, long iteration, int sample_count, int batch_size);

TrainResult train_snet(const TrainConfig& config);
TrainResult train_stage1(const TrainConfig& config);
TrainResult train_umsn(const TrainConfig& config);

/// Dispatches on config.phase.
TrainResult train(const TrainConfig& config);

}  // namespace umsn::training
