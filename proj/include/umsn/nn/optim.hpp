#pragma once

#include "umsn/nn/blocks.hpp"

namespace umsn::nn {

/// Adaptive-moment first-order optimizer; state follows parameter order and is
/// checkpointable so interrupted runs resume exactly.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamMap& params);

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

    long iteration_count() const { return t_; }

    /// Serializes moments into `pm` under "<optimizer prefix>" names.
    void collect_state(const ParamMap& params, ParamMap& pm) const;
    /// Restores moments from a loaded parameter map; missing entries reset.
    void restore_state(const ParamMap& params, const ParamMap& loaded, long t);

private:
    void ensure_slots(const ParamMap& params);

    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace umsn::nn
