#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "umsn/core/rng.hpp"
#include "umsn/core/tensor.hpp"

namespace umsn::synthesis {

/// Random-walk camera trajectory: velocity follows an auto-regressive process
/// with an inertia coefficient and Gaussian jitter.
struct TrajectoryParams {
    int steps = 256;
    double inertia = 0.9;   // velocity carry-over per step
    double jitter = 1.0;    // stddev of the per-step velocity kick
};

struct CameraTrajectory {
    std::vector<std::array<double, 2>> positions;  // sub-pixel (x,y)
    std::uint64_t seed = 0;
};

CameraTrajectory generate_trajectory(std::uint64_t seed, const TrajectoryParams& params);

/// Odd-sized, non-negative, unit-sum point-spread function.
struct BlurKernel {
    int side = 0;
    Tensor weights;  // {side,side}

    void validate() const;
};

constexpr int kDefaultKernelSideMin = 13;
constexpr int kDefaultKernelSideMax = 29;

/// Rasterizes a seeded trajectory onto a side x side grid with bilinear
/// splatting, then normalizes. Deterministic in (seed, side, params).
BlurKernel generate_kernel(std::uint64_t seed, int side, const TrajectoryParams& params,
                           int side_min = kDefaultKernelSideMin, int side_max = kDefaultKernelSideMax);

/// All mass on the center tap (identity under convolution).
BlurKernel delta_kernel(int side);

}  // namespace umsn::synthesis
