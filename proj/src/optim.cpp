#include "optim.hpp"

#include <cmath>

#include "errors.hpp"

namespace squidlet {

void AdamW::add_param(const std::string& name, Tensor param) {
    for (const auto& e : entries_) {
        if (e.param.id() == param.id()) {
            throw UsageError("optimizer: parameter '" + name + "' registered twice");
        }
    }
    Entry e;
    e.name = name;
    e.m = Tensor::zeros(param.shape());
    e.v = Tensor::zeros(param.shape());
    e.param = std::move(param);
    entries_.push_back(std::move(e));
}

void AdamW::step(double lr_override) {
    const double lr = lr_override < 0.0 ? cfg_.lr : lr_override;
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

    for (auto& e : entries_) {
        if (!e.active) continue;
        if (!e.param.has_grad()) {
            throw UsageError("optimizer: parameter '" + e.name + "' has no gradient");
        }
        auto p = e.param.data();
        auto g = e.param.grad();
        auto m = e.m.data();
        auto v = e.v.data();
        const bool decay = e.param.rank() > 1 && cfg_.weight_decay != 0.0;
        const float b1 = static_cast<float>(cfg_.beta1);
        const float b2 = static_cast<float>(cfg_.beta2);
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const double mhat = static_cast<double>(m[i]) / bc1;
            const double vhat = static_cast<double>(v[i]) / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg_.eps);
            if (decay) update += cfg_.weight_decay * static_cast<double>(p[i]);
            p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * update);
        }
    }
}

void AdamW::zero_grads() {
    for (auto& e : entries_) {
        e.param.ensure_grad();
        e.param.zero_grad();
    }
}

void AdamW::set_active_prefix(const std::string& prefix, bool active) {
    for (auto& e : entries_) {
        if (e.name.rfind(prefix, 0) == 0) e.active = active;
    }
}

double lr_schedule(double lr, int64_t step, int64_t warmup_steps, int64_t total_steps,
                   double min_ratio) {
    if (warmup_steps > 0 && step < warmup_steps) {
        return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    if (total_steps <= warmup_steps) return lr;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    const double clamped = progress < 0.0 ? 0.0 : (progress > 1.0 ? 1.0 : progress);
    const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * clamped));
    return lr * (min_ratio + (1.0 - min_ratio) * cosine);
}

} // namespace squidlet
