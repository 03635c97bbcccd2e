#pragma once

#include <vector>

#include "umsn/ad/graph.hpp"

namespace umsn::ad {

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, real s);
Var add_scalar(const Var& a, real s);
Var relu(const Var& a);
Var abs(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var clamp_min(const Var& a, real lo);
Var detach(const Var& a);

/// Elementwise product with a constant tensor of the same shape.
Var mul_const(const Var& a, const Tensor& c);
/// Broadcast product of {N,C,H,W} features with a constant {N,1,H,W} plane.
Var mul_plane(const Var& a, const Tensor& plane);

// ---- reductions / shape ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
/// {N,...} -> {N}: sum over everything but the leading dimension.
Var sum_per_sample(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& parts);
Var add_n(const std::vector<Var>& parts);

// ---- neural-net ops ----
/// 2D convolution, stride 1, odd kernel, zero "same" padding so spatial size
/// is preserved. x:{N,C,H,W} w:{O,C,k,k} b:{O}.
Var conv2d(const Var& x, const Var& w, const Var& b, int dilation = 1);

/// Separable smoothing convolution shared across channels: one 1-D kernel
/// applied horizontally then vertically (zero "same" padding).
Var sep_shared_conv(const Var& x, const Var& k1d);

Var instance_norm(const Var& x, real eps = 1e-5);
Var avg_pool2(const Var& x);
Var upsample_bilinear2(const Var& x);
Var global_avg_pool(const Var& x);

Var softmax_channels(const Var& x);
/// Mean per-pixel cross entropy between softmax(logits) and a one-hot target.
Var cross_entropy_softmax(const Var& logits, const Tensor& target_onehot);

/// Worker cap for the convolution batch loop; honors UMSN_NUM_WORKERS.
int conv_workers(int batch);

}  // namespace umsn::ad
