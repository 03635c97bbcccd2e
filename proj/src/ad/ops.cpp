#include "umsn/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

namespace umsn::ad {

namespace {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void accum(const NodePtr& p, const Tensor& g) {
    if (p && p->requires_grad) p->accumulate(g);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.value().same_shape(b.value()),
            std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace

int conv_workers(int batch) {
    static const int cap = [] {
        if (const char* env = std::getenv("UMSN_NUM_WORKERS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return std::max(1, std::min(cap, batch));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.value().shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        accum(self.parents[0], self.grad);
        accum(self.parents[1], self.grad);
    }));
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value().shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        accum(self.parents[0], self.grad);
        if (self.parents[1] && self.parents[1]->requires_grad) {
            Tensor g(self.grad.shape());
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] = -self.grad[i];
            self.parents[1]->accumulate(g);
        }
    }));
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor g(self.grad.shape());
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * bv[i];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            Tensor g(self.grad.shape());
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * av[i];
            self.parents[1]->accumulate(g);
        }
    }));
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, real s) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
    return Var(make_node(std::move(out), {a.node()}, [s](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * s;
        self.parents[0]->accumulate(g);
    }));
}

Var add_scalar(const Var& a, real s) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
    return Var(make_node(std::move(out), {a.node()}, [](Node& self) { accum(self.parents[0], self.grad); }));
}

Var relu(const Var& a) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
    return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& x = self.parents[0]->value;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = x[i] > 0.0 ? self.grad[i] : 0.0;
        self.parents[0]->accumulate(g);
    }));
}

Var abs(const Var& a) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.value()[i]);
    return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& x = self.parents[0]->value;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i)
            g[i] = x[i] > 0.0 ? self.grad[i] : (x[i] < 0.0 ? -self.grad[i] : 0.0);
        self.parents[0]->accumulate(g);
    }));
}

Var log(const Var& a) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::log(a.value()[i]);
    return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& x = self.parents[0]->value;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / x[i];
        self.parents[0]->accumulate(g);
    }));
}

Var sigmoid(const Var& a) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    Tensor y = out;
    return Var(make_node(std::move(out), {a.node()}, [y = std::move(y)](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * y[i] * (1.0 - y[i]);
        self.parents[0]->accumulate(g);
    }));
}

Var clamp_min(const Var& a, real lo) {
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(a.value()[i], lo);
    return Var(make_node(std::move(out), {a.node()}, [lo](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& x = self.parents[0]->value;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = x[i] > lo ? self.grad[i] : 0.0;
        self.parents[0]->accumulate(g);
    }));
}

Var detach(const Var& a) { return Var::constant(a.value()); }

Var mul_const(const Var& a, const Tensor& c) {
    require(a.value().same_shape(c), "mul_const: shape mismatch");
    Tensor out(a.value().shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c[i];
    return Var(make_node(std::move(out), {a.node()}, [c](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor g(self.grad.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * c[i];
        self.parents[0]->accumulate(g);
    }));
}

Var mul_plane(const Var& a, const Tensor& plane) {
    const Tensor& x = a.value();
    require(x.rank() == 4 && plane.rank() == 4 && plane.dim(1) == 1 && plane.dim(0) == x.dim(0) &&
                plane.dim(2) == x.dim(2) && plane.dim(3) == x.dim(3),
            "mul_plane: expected {N,C,H,W} features and {N,1,H,W} plane");
    const int N = x.dim(0), C = x.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    Tensor out(x.shape());
    for (int n = 0; n < N; ++n) {
        const real* p = plane.data() + n * hw;
        for (int c = 0; c < C; ++c) {
            const real* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            real* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * p[i];
        }
    }
    return Var(make_node(std::move(out), {a.node()}, [plane, N, C, hw](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor g(self.grad.shape());
        for (int n = 0; n < N; ++n) {
            const real* p = plane.data() + n * hw;
            for (int c = 0; c < C; ++c) {
                const real* go = self.grad.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
                real* gi = g.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) gi[i] = go[i] * p[i];
            }
        }
        self.parents[0]->accumulate(g);
    }));
}

// ---------------------------------------------------------------------------
// reductions / shape
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
    real s = 0.0;
    for (std::int64_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    return Var(make_node(Tensor::scalar(s), {a.node()}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor g(self.parents[0]->value.shape(), self.grad[0]);
        self.parents[0]->accumulate(g);
    }));
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<real>(a.value().size())); }

Var sum_per_sample(const Var& a) {
    const Tensor& x = a.value();
    require(x.rank() >= 2, "sum_per_sample: rank >= 2 required");
    const int N = x.dim(0);
    const std::int64_t per = x.size() / N;
    Tensor out({N});
    for (int n = 0; n < N; ++n) {
        real s = 0.0;
        const real* src = x.data() + n * per;
        for (std::int64_t i = 0; i < per; ++i) s += src[i];
        out[n] = s;
    }
    return Var(make_node(std::move(out), {a.node()}, [N, per](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor g(self.parents[0]->value.shape());
        for (int n = 0; n < N; ++n) {
            real* dst = g.data() + n * per;
            for (std::int64_t i = 0; i < per; ++i) dst[i] = self.grad[n];
        }
        self.parents[0]->accumulate(g);
    }));
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a.value().reshaped(shape);
    return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
    }));
}

Var concat_channels(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_channels: empty input");
    const Tensor& first = parts[0].value();
    require(first.rank() == 4, "concat_channels: expected {N,C,H,W}");
    const int N = first.dim(0), H = first.dim(2), W = first.dim(3);
    int ctot = 0;
    for (const auto& p : parts) {
        require(p.value().rank() == 4 && p.value().dim(0) == N && p.value().dim(2) == H && p.value().dim(3) == W,
                "concat_channels: mismatched shapes");
        ctot += p.value().dim(1);
    }
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out({N, ctot, H, W});
    std::vector<int> widths;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        widths.push_back(p.value().dim(1));
        parents.push_back(p.node());
    }
    for (int n = 0; n < N; ++n) {
        int coff = 0;
        for (size_t k = 0; k < parts.size(); ++k) {
            const Tensor& src = parts[k].value();
            const int c = widths[k];
            std::copy(src.data() + static_cast<std::int64_t>(n) * c * hw,
                      src.data() + static_cast<std::int64_t>(n + 1) * c * hw,
                      out.data() + (static_cast<std::int64_t>(n) * ctot + coff) * hw);
            coff += c;
        }
    }
    return Var(make_node(std::move(out), std::move(parents), [widths, N, ctot, hw](Node& self) {
        int coff = 0;
        for (size_t k = 0; k < self.parents.size(); ++k) {
            const int c = widths[k];
            if (self.parents[k] && self.parents[k]->requires_grad) {
                Tensor g(self.parents[k]->value.shape());
                for (int n = 0; n < N; ++n)
                    std::copy(self.grad.data() + (static_cast<std::int64_t>(n) * ctot + coff) * hw,
                              self.grad.data() + (static_cast<std::int64_t>(n) * ctot + coff + c) * hw,
                              g.data() + static_cast<std::int64_t>(n) * c * hw);
                self.parents[k]->accumulate(g);
            }
            coff += c;
        }
    }));
}

Var add_n(const std::vector<Var>& parts) {
    require(!parts.empty(), "add_n: empty input");
    Var acc = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
    return acc;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

/// Gathers dilated k*k patches (zero padded) of one sample into a
/// {C*k*k, H*W} column matrix.
void im2col(const real* x, int C, int H, int W, int k, int d, real* col) {
    const int pad = d * (k - 1) / 2;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c) {
        const real* plane = x + static_cast<std::int64_t>(c) * hw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                real* dst = col + row * hw;
                const int dy = ki * d - pad;
                const int dx = kj * d - pad;
                for (int h = 0; h < H; ++h) {
                    const int sy = h + dy;
                    if (sy < 0 || sy >= H) {
                        std::fill(dst + static_cast<std::int64_t>(h) * W, dst + static_cast<std::int64_t>(h + 1) * W,
                                  0.0);
                        continue;
                    }
                    const real* srow = plane + static_cast<std::int64_t>(sy) * W;
                    real* drow = dst + static_cast<std::int64_t>(h) * W;
                    for (int w = 0; w < W; ++w) {
                        const int sx = w + dx;
                        drow[w] = (sx < 0 || sx >= W) ? 0.0 : srow[sx];
                    }
                }
            }
        }
    }
}

/// Scatter-adds a {C*k*k, H*W} column-gradient back onto the input layout.
void col2im(const real* col, int C, int H, int W, int k, int d, real* dx) {
    const int pad = d * (k - 1) / 2;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c) {
        real* plane = dx + static_cast<std::int64_t>(c) * hw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                const real* src = col + row * hw;
                const int dy = ki * d - pad;
                const int dx2 = kj * d - pad;
                for (int h = 0; h < H; ++h) {
                    const int sy = h + dy;
                    if (sy < 0 || sy >= H) continue;
                    real* drow = plane + static_cast<std::int64_t>(sy) * W;
                    const real* srow = src + static_cast<std::int64_t>(h) * W;
                    for (int w = 0; w < W; ++w) {
                        const int sx = w + dx2;
                        if (sx >= 0 && sx < W) drow[sx] += srow[w];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int dilation) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    require(xv.rank() == 4, "conv2d: input must be {N,C,H,W}");
    require(wv.rank() == 4, "conv2d: weights must be {O,C,k,k}");
    require(wv.dim(2) == wv.dim(3) && wv.dim(2) % 2 == 1, "conv2d: kernel must be square and odd");
    require(wv.dim(1) == xv.dim(1), "conv2d: channel mismatch: input has " + std::to_string(xv.dim(1)) +
                                        ", weights expect " + std::to_string(wv.dim(1)));
    require(bv.rank() == 1 && bv.dim(0) == wv.dim(0), "conv2d: bias size mismatch");
    require(dilation >= 1, "conv2d: dilation must be >= 1");

    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int O = wv.dim(0), k = wv.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const std::int64_t ckk = static_cast<std::int64_t>(C) * k * k;

    Tensor out({N, O, H, W});
    const int nw = conv_workers(N);
#pragma omp parallel for num_threads(nw) schedule(static) if (nw > 1)
    for (int n = 0; n < N; ++n) {
        std::vector<real> col(static_cast<size_t>(ckk * hw));
        im2col(xv.data() + static_cast<std::int64_t>(n) * C * hw, C, H, W, k, dilation, col.data());
        CMapRM wm(wv.data(), O, ckk);
        CMapRM cm(col.data(), ckk, hw);
        MapRM om(out.data() + static_cast<std::int64_t>(n) * O * hw, O, hw);
        om.noalias() = wm * cm;
        for (int o = 0; o < O; ++o) om.row(o).array() += bv[o];
    }

    const int d = dilation;
    return Var(make_node(std::move(out), {x.node(), w.node(), b.node()}, [N, C, H, W, O, k, d](Node& self) {
        const NodePtr& xp = self.parents[0];
        const NodePtr& wp = self.parents[1];
        const NodePtr& bp = self.parents[2];
        const std::int64_t hw = static_cast<std::int64_t>(H) * W;
        const std::int64_t ckk = static_cast<std::int64_t>(C) * k * k;
        const bool need_x = xp->requires_grad;
        const bool need_w = wp->requires_grad;
        const bool need_b = bp->requires_grad;

        Tensor dx = need_x ? Tensor(xp->value.shape()) : Tensor();
        // per-sample weight-gradient partials, reduced in sample order below
        std::vector<Tensor> dw_parts(need_w ? static_cast<size_t>(N) : 0);

        const int nw = conv_workers(N);
#pragma omp parallel for num_threads(nw) schedule(static) if (nw > 1)
        for (int n = 0; n < N; ++n) {
            CMapRM gm(self.grad.data() + static_cast<std::int64_t>(n) * O * hw, O, hw);
            std::vector<real> col(static_cast<size_t>(ckk * hw));
            if (need_w || need_x) im2col(xp->value.data() + static_cast<std::int64_t>(n) * C * hw, C, H, W, k, d, col.data());
            if (need_w) {
                dw_parts[static_cast<size_t>(n)] = Tensor(wp->value.shape());
                MapRM dwm(dw_parts[static_cast<size_t>(n)].data(), O, ckk);
                CMapRM cm(col.data(), ckk, hw);
                dwm.noalias() = gm * cm.transpose();
            }
            if (need_x) {
                std::vector<real> dcol(static_cast<size_t>(ckk * hw));
                MapRM dcm(dcol.data(), ckk, hw);
                CMapRM wm(wp->value.data(), O, ckk);
                dcm.noalias() = wm.transpose() * gm;
                col2im(dcol.data(), C, H, W, k, d, dx.data() + static_cast<std::int64_t>(n) * C * hw);
            }
        }
        if (need_x) xp->accumulate(dx);
        if (need_w) {
            Tensor dw(wp->value.shape());
            for (int n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < dw.size(); ++i) dw[i] += dw_parts[static_cast<size_t>(n)][i];
            wp->accumulate(dw);
        }
        if (need_b) {
            Tensor db({O});
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < O; ++o) {
                    const real* g = self.grad.data() + (static_cast<std::int64_t>(n) * O + o) * hw;
                    real s = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) s += g[i];
                    db[o] += s;
                }
            bp->accumulate(db);
        }
    }));
}

// ---------------------------------------------------------------------------
// separable shared smoothing convolution
// ---------------------------------------------------------------------------

namespace {

// horizontal pass: y[h,w] = sum_j kern[j] * x[h, w + j - c0], zero padded
void sep_pass_h(const real* x, int H, int W, const real* kern, int L, real* y) {
    const int c0 = L / 2;
    for (int h = 0; h < H; ++h) {
        const real* xr = x + static_cast<std::int64_t>(h) * W;
        real* yr = y + static_cast<std::int64_t>(h) * W;
        for (int w = 0; w < W; ++w) {
            real s = 0.0;
            for (int j = 0; j < L; ++j) {
                const int sx = w + j - c0;
                if (sx >= 0 && sx < W) s += kern[j] * xr[sx];
            }
            yr[w] = s;
        }
    }
}

void sep_pass_v(const real* x, int H, int W, const real* kern, int L, real* y) {
    const int c0 = L / 2;
    for (int h = 0; h < H; ++h) {
        real* yr = y + static_cast<std::int64_t>(h) * W;
        for (int w = 0; w < W; ++w) {
            real s = 0.0;
            for (int i = 0; i < L; ++i) {
                const int sy = h + i - c0;
                if (sy >= 0 && sy < H) s += kern[i] * x[static_cast<std::int64_t>(sy) * W + w];
            }
            yr[w] = s;
        }
    }
}

// transposed passes (kernel flipped) used for input gradients
void sep_pass_h_t(const real* g, int H, int W, const real* kern, int L, real* out) {
    const int c0 = L / 2;
    for (int h = 0; h < H; ++h) {
        const real* gr = g + static_cast<std::int64_t>(h) * W;
        real* orow = out + static_cast<std::int64_t>(h) * W;
        for (int w = 0; w < W; ++w) {
            real s = 0.0;
            for (int j = 0; j < L; ++j) {
                const int gx = w - (j - c0);
                if (gx >= 0 && gx < W) s += kern[j] * gr[gx];
            }
            orow[w] = s;
        }
    }
}

void sep_pass_v_t(const real* g, int H, int W, const real* kern, int L, real* out) {
    const int c0 = L / 2;
    for (int h = 0; h < H; ++h) {
        real* orow = out + static_cast<std::int64_t>(h) * W;
        for (int w = 0; w < W; ++w) {
            real s = 0.0;
            for (int i = 0; i < L; ++i) {
                const int gy = h - (i - c0);
                if (gy >= 0 && gy < H) s += kern[i] * g[static_cast<std::int64_t>(gy) * W + w];
            }
            orow[w] = s;
        }
    }
}

}  // namespace

Var sep_shared_conv(const Var& x, const Var& k1d) {
    const Tensor& xv = x.value();
    const Tensor& kv = k1d.value();
    require(xv.rank() == 4, "sep_shared_conv: input must be {N,C,H,W}");
    require(kv.rank() == 1 && kv.dim(0) % 2 == 1, "sep_shared_conv: kernel must be odd-length 1-D");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3), L = kv.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;

    Tensor mid(xv.shape());
    Tensor out(xv.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
            sep_pass_h(xv.data() + off, H, W, kv.data(), L, mid.data() + off);
            sep_pass_v(mid.data() + off, H, W, kv.data(), L, out.data() + off);
        }

    Tensor mid_saved = mid;
    return Var(make_node(std::move(out), {x.node(), k1d.node()},
                         [N, C, H, W, L, hw, mid = std::move(mid_saved)](Node& self) {
        const NodePtr& xp = self.parents[0];
        const NodePtr& kp = self.parents[1];
        const real* kern = kp->value.data();
        const bool need_x = xp->requires_grad;
        const bool need_k = kp->requires_grad;
        Tensor dmid(xp->value.shape());
        Tensor dx = need_x ? Tensor(xp->value.shape()) : Tensor();
        Tensor dk({L});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
                const real* g = self.grad.data() + off;
                // vertical pass backward
                sep_pass_v_t(g, H, W, kern, L, dmid.data() + off);
                if (need_k) {
                    const real* m = mid.data() + off;
                    const int c0 = L / 2;
                    for (int i = 0; i < L; ++i) {
                        real s = 0.0;
                        for (int h = 0; h < H; ++h) {
                            const int sy = h + i - c0;
                            if (sy < 0 || sy >= H) continue;
                            const real* gr = g + static_cast<std::int64_t>(h) * W;
                            const real* mr = m + static_cast<std::int64_t>(sy) * W;
                            for (int w = 0; w < W; ++w) s += gr[w] * mr[w];
                        }
                        dk[i] += s;
                    }
                }
                // horizontal pass backward
                if (need_x) sep_pass_h_t(dmid.data() + off, H, W, kern, L, dx.data() + off);
                if (need_k) {
                    const real* gm = dmid.data() + off;
                    const real* xr = xp->value.data() + off;
                    const int c0 = L / 2;
                    for (int j = 0; j < L; ++j) {
                        real s = 0.0;
                        for (int h = 0; h < H; ++h) {
                            const real* gr = gm + static_cast<std::int64_t>(h) * W;
                            const real* xrow = xr + static_cast<std::int64_t>(h) * W;
                            for (int w = 0; w < W; ++w) {
                                const int sx = w + j - c0;
                                if (sx >= 0 && sx < W) s += gr[w] * xrow[sx];
                            }
                        }
                        dk[j] += s;
                    }
                }
            }
        if (need_x) xp->accumulate(dx);
        if (need_k) kp->accumulate(dk);
    }));
}

// ---------------------------------------------------------------------------
// normalization / resampling
// ---------------------------------------------------------------------------

Var instance_norm(const Var& x, real eps) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4, "instance_norm: input must be {N,C,H,W}");
    const int N = xv.dim(0), C = xv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out(xv.shape());
    Tensor inv_std({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
            const real* src = xv.data() + off;
            real mean = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) mean += src[i];
            mean /= static_cast<real>(hw);
            real var = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) {
                const real d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<real>(hw);
            const real is = 1.0 / std::sqrt(var + eps);
            inv_std.at(n, c) = is;
            real* dst = out.data() + off;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * is;
        }

    Tensor y_saved = out;
    return Var(make_node(std::move(out), {x.node()},
                         [N, C, hw, inv_std = std::move(inv_std), y = std::move(y_saved)](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor dx(self.parents[0]->value.shape());
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * hw;
                const real* g = self.grad.data() + off;
                const real* yn = y.data() + off;
                real gsum = 0.0, gysum = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) {
                    gsum += g[i];
                    gysum += g[i] * yn[i];
                }
                const real gmean = gsum / static_cast<real>(hw);
                const real gymean = gysum / static_cast<real>(hw);
                const real is = inv_std.at(n, c);
                real* dst = dx.data() + off;
                for (std::int64_t i = 0; i < hw; ++i) dst[i] = is * (g[i] - gmean - yn[i] * gymean);
            }
        self.parents[0]->accumulate(dx);
    }));
}

Var avg_pool2(const Var& x) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4, "avg_pool2: input must be {N,C,H,W}");
    require(xv.dim(2) % 2 == 0 && xv.dim(3) % 2 == 0,
            "avg_pool2: spatial dims must be even, got " + xv.shape_str());
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Ho = H / 2, Wo = W / 2;
    Tensor out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < Ho; ++h)
                for (int w = 0; w < Wo; ++w)
                    out.at(n, c, h, w) = 0.25 * (xv.at(n, c, 2 * h, 2 * w) + xv.at(n, c, 2 * h, 2 * w + 1) +
                                                 xv.at(n, c, 2 * h + 1, 2 * w) + xv.at(n, c, 2 * h + 1, 2 * w + 1));
    return Var(make_node(std::move(out), {x.node()}, [N, C, Ho, Wo](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor dx(self.parents[0]->value.shape());
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < Ho; ++h)
                    for (int w = 0; w < Wo; ++w) {
                        const real g = 0.25 * self.grad.at(n, c, h, w);
                        dx.at(n, c, 2 * h, 2 * w) = g;
                        dx.at(n, c, 2 * h, 2 * w + 1) = g;
                        dx.at(n, c, 2 * h + 1, 2 * w) = g;
                        dx.at(n, c, 2 * h + 1, 2 * w + 1) = g;
                    }
        self.parents[0]->accumulate(dx);
    }));
}

namespace {

struct LerpTable {
    std::vector<int> i0, i1;
    std::vector<real> w0, w1;
};

// half-pixel bilinear sampling positions for x2 upsampling, clamped at edges
LerpTable lerp_table_x2(int in, int out) {
    LerpTable t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.w0.resize(out);
    t.w1.resize(out);
    for (int i = 0; i < out; ++i) {
        const real src = (i + 0.5) / 2.0 - 0.5;
        int lo = static_cast<int>(std::floor(src));
        real frac = src - lo;
        int hi = lo + 1;
        if (lo < 0) lo = 0;
        if (hi > in - 1) hi = in - 1;
        if (lo > in - 1) lo = in - 1;
        t.i0[i] = lo;
        t.i1[i] = hi;
        t.w0[i] = 1.0 - frac;
        t.w1[i] = frac;
    }
    return t;
}

}  // namespace

Var upsample_bilinear2(const Var& x) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4, "upsample_bilinear2: input must be {N,C,H,W}");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Ho = 2 * H, Wo = 2 * W;
    const LerpTable ty = lerp_table_x2(H, Ho);
    const LerpTable tx = lerp_table_x2(W, Wo);
    Tensor out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < Ho; ++h)
                for (int w = 0; w < Wo; ++w)
                    out.at(n, c, h, w) = ty.w0[h] * (tx.w0[w] * xv.at(n, c, ty.i0[h], tx.i0[w]) +
                                                     tx.w1[w] * xv.at(n, c, ty.i0[h], tx.i1[w])) +
                                         ty.w1[h] * (tx.w0[w] * xv.at(n, c, ty.i1[h], tx.i0[w]) +
                                                     tx.w1[w] * xv.at(n, c, ty.i1[h], tx.i1[w]));
    return Var(make_node(std::move(out), {x.node()}, [N, C, Ho, Wo, ty, tx](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor dx(self.parents[0]->value.shape());
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < Ho; ++h)
                    for (int w = 0; w < Wo; ++w) {
                        const real g = self.grad.at(n, c, h, w);
                        dx.at(n, c, ty.i0[h], tx.i0[w]) += ty.w0[h] * tx.w0[w] * g;
                        dx.at(n, c, ty.i0[h], tx.i1[w]) += ty.w0[h] * tx.w1[w] * g;
                        dx.at(n, c, ty.i1[h], tx.i0[w]) += ty.w1[h] * tx.w0[w] * g;
                        dx.at(n, c, ty.i1[h], tx.i1[w]) += ty.w1[h] * tx.w1[w] * g;
                    }
        self.parents[0]->accumulate(dx);
    }));
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4, "global_avg_pool: input must be {N,C,H,W}");
    const int N = xv.dim(0), C = xv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out({N, C, 1, 1});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const real* src = xv.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            real s = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) s += src[i];
            out.at(n, c, 0, 0) = s / static_cast<real>(hw);
        }
    return Var(make_node(std::move(out), {x.node()}, [N, C, hw](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor dx(self.parents[0]->value.shape());
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const real g = self.grad.at(n, c, 0, 0) / static_cast<real>(hw);
                real* dst = dx.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) dst[i] = g;
            }
        self.parents[0]->accumulate(dx);
    }));
}

// ---------------------------------------------------------------------------
// softmax / cross entropy
// ---------------------------------------------------------------------------

namespace {

Tensor softmax_over_channels(const Tensor& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor y(x.shape());
    for (int n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < hw; ++p) {
            real mx = x.data()[(static_cast<std::int64_t>(n) * C) * hw + p];
            for (int c = 1; c < C; ++c)
                mx = std::max(mx, x.data()[(static_cast<std::int64_t>(n) * C + c) * hw + p]);
            real sum = 0.0;
            for (int c = 0; c < C; ++c) {
                const real e = std::exp(x.data()[(static_cast<std::int64_t>(n) * C + c) * hw + p] - mx);
                y.data()[(static_cast<std::int64_t>(n) * C + c) * hw + p] = e;
                sum += e;
            }
            for (int c = 0; c < C; ++c) y.data()[(static_cast<std::int64_t>(n) * C + c) * hw + p] /= sum;
        }
    return y;
}

}  // namespace

Var softmax_channels(const Var& x) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4, "softmax_channels: input must be {N,C,H,W}");
    Tensor y = softmax_over_channels(xv);
    Tensor y_saved = y;
    const int N = xv.dim(0), C = xv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    return Var(make_node(std::move(y), {x.node()}, [N, C, hw, y = std::move(y_saved)](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor dx(self.parents[0]->value.shape());
        for (int n = 0; n < N; ++n)
            for (std::int64_t p = 0; p < hw; ++p) {
                real dot = 0.0;
                for (int c = 0; c < C; ++c) {
                    const std::int64_t i = (static_cast<std::int64_t>(n) * C + c) * hw + p;
                    dot += self.grad[i] * y[i];
                }
                for (int c = 0; c < C; ++c) {
                    const std::int64_t i = (static_cast<std::int64_t>(n) * C + c) * hw + p;
                    dx[i] = y[i] * (self.grad[i] - dot);
                }
            }
        self.parents[0]->accumulate(dx);
    }));
}

Var cross_entropy_softmax(const Var& logits, const Tensor& target_onehot) {
    const Tensor& xv = logits.value();
    require(xv.rank() == 4, "cross_entropy_softmax: logits must be {N,C,H,W}");
    require(xv.same_shape(target_onehot), "cross_entropy_softmax: target shape mismatch");
    const int N = xv.dim(0), C = xv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor soft = softmax_over_channels(xv);
    const real inv_count = 1.0 / (static_cast<real>(N) * static_cast<real>(hw));
    real loss = 0.0;
    for (std::int64_t i = 0; i < soft.size(); ++i)
        if (target_onehot[i] != 0.0) loss -= target_onehot[i] * std::log(std::max(soft[i], 1e-12));
    loss *= inv_count;
    Tensor soft_saved = std::move(soft);
    return Var(make_node(Tensor::scalar(loss), {logits.node()},
                         [target_onehot, inv_count, soft = std::move(soft_saved)](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const real g = self.grad[0] * inv_count;
        Tensor dx(self.parents[0]->value.shape());
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] = g * (soft[i] - target_onehot[i]);
        self.parents[0]->accumulate(dx);
    }));
}

}  // namespace umsn::ad
