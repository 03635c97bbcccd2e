#include <algorithm>
#include <cmath>

#include "umsn/synthesis/kernel.hpp"

namespace umsn::synthesis {

CameraTrajectory generate_trajectory(std::uint64_t seed, const TrajectoryParams& params) {
    require(params.steps >= 1, "trajectory: step count must be >= 1");
    require(params.jitter >= 0.0, "trajectory: jitter must be >= 0");
    Rng rng(seed);
    CameraTrajectory traj;
    traj.seed = seed;
    traj.positions.reserve(static_cast<size_t>(params.steps));
    double px = 0.0, py = 0.0, vx = 0.0, vy = 0.0;
    traj.positions.push_back({px, py});
    for (int t = 1; t < params.steps; ++t) {
        vx = params.inertia * vx + params.jitter * rng.normal();
        vy = params.inertia * vy + params.jitter * rng.normal();
        px += vx;
        py += vy;
        traj.positions.push_back({px, py});
    }
    return traj;
}

void BlurKernel::validate() const {
    require(side >= 1 && side % 2 == 1, "kernel side must be odd and positive");
    require(weights.rank() == 2 && weights.dim(0) == side && weights.dim(1) == side,
            "kernel weights must be {side,side}");
    real sum = 0.0;
    for (std::int64_t i = 0; i < weights.size(); ++i) {
        require(weights[i] >= 0.0, "kernel weight is negative");
        sum += weights[i];
    }
    require(std::fabs(sum - 1.0) <= 1e-6, "kernel weights do not sum to 1");
}

BlurKernel generate_kernel(std::uint64_t seed, int side, const TrajectoryParams& params, int side_min,
                           int side_max) {
    require(side % 2 == 1, "kernel side must be odd, got " + std::to_string(side));
    require(side >= side_min && side <= side_max,
            "kernel side " + std::to_string(side) + " outside [" + std::to_string(side_min) + "," +
                std::to_string(side_max) + "]");
    const CameraTrajectory traj = generate_trajectory(seed, params);

    double min_x = traj.positions[0][0], max_x = min_x;
    double min_y = traj.positions[0][1], max_y = min_y;
    for (const auto& p : traj.positions) {
        min_x = std::min(min_x, p[0]);
        max_x = std::max(max_x, p[0]);
        min_y = std::min(min_y, p[1]);
        max_y = std::max(max_y, p[1]);
    }
    const double extent = std::max(max_x - min_x, max_y - min_y);
    const double margin = 1.0;
    const double usable = static_cast<double>(side - 1) - 2.0 * margin;
    // shrink oversized walks into the canvas; never magnify gentle motion
    const double scale = extent > usable ? usable / extent : 1.0;
    const double cx = 0.5 * (min_x + max_x);
    const double cy = 0.5 * (min_y + max_y);
    const double center = static_cast<double>(side - 1) / 2.0;

    BlurKernel k;
    k.side = side;
    k.weights = Tensor({side, side});
    for (const auto& p : traj.positions) {
        const double x = (p[0] - cx) * scale + center;
        const double y = (p[1] - cy) * scale + center;
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0;
        const double fy = y - y0;
        struct Tap {
            int dy, dx;
            double w;
        };
        const Tap taps[4] = {{0, 0, (1 - fy) * (1 - fx)},
                             {0, 1, (1 - fy) * fx},
                             {1, 0, fy * (1 - fx)},
                             {1, 1, fy * fx}};
        for (const Tap& t : taps) {
            const int yy = y0 + t.dy;
            const int xx = x0 + t.dx;
            if (yy >= 0 && yy < side && xx >= 0 && xx < side && t.w > 0.0) k.weights.at(yy, xx) += t.w;
        }
    }
    real sum = 0.0;
    for (std::int64_t i = 0; i < k.weights.size(); ++i) sum += k.weights[i];
    require(sum > 0.0, "kernel rasterization left no mass");
    for (std::int64_t i = 0; i < k.weights.size(); ++i) k.weights[i] /= sum;
    return k;
}

BlurKernel delta_kernel(int side) {
    require(side >= 1 && side % 2 == 1, "kernel side must be odd and positive");
    BlurKernel k;
    k.side = side;
    k.weights = Tensor({side, side});
    k.weights.at(side / 2, side / 2) = 1.0;
    return k;
}

}  // namespace umsn::synthesis
