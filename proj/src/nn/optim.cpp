#include "umsn/nn/optim.hpp"

#include <cmath>

namespace umsn::nn {

void Adam::ensure_slots(const ParamMap& params) {
    if (m_.size() == params.items.size()) return;
    m_.clear();
    v_.clear();
    for (const auto& [name, var] : params.items) {
        m_.emplace_back(var.value().shape());
        v_.emplace_back(var.value().shape());
    }
}

void Adam::step(ParamMap& params) {
    ensure_slots(params);
    ++t_;
    const real bc1 = 1.0 - std::pow(beta1_, static_cast<real>(t_));
    const real bc2 = 1.0 - std::pow(beta2_, static_cast<real>(t_));
    for (size_t p = 0; p < params.items.size(); ++p) {
        Var& var = params.items[p].second;
        if (!var.has_grad()) continue;
        const Tensor& g = var.grad();
        Tensor& m = m_[p];
        Tensor& v = v_[p];
        Tensor value = var.value();
        for (std::int64_t i = 0; i < value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const real mhat = m[i] / bc1;
            const real vhat = v[i] / bc2;
            value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        var.set_value(std::move(value));
    }
}

void Adam::collect_state(const ParamMap& params, ParamMap& pm) const {
    for (size_t p = 0; p < params.items.size() && p < m_.size(); ++p) {
        pm.add("adam.m." + params.items[p].first, Var::constant(m_[p]));
        pm.add("adam.v." + params.items[p].first, Var::constant(v_[p]));
    }
}

void Adam::restore_state(const ParamMap& params, const ParamMap& loaded, long t) {
    ensure_slots(params);
    t_ = t;
    for (size_t p = 0; p < params.items.size(); ++p) {
        if (const Var* m = loaded.find("adam.m." + params.items[p].first)) m_[p] = m->value();
        if (const Var* v = loaded.find("adam.v." + params.items[p].first)) v_[p] = v->value();
    }
}

}  // namespace umsn::nn
