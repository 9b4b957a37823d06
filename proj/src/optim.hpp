#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace squidlet {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
};

// Decoupled weight decay with bias correction. Decay skips rank-1 tensors
// (norm gains and biases). Update order follows registration order.
class AdamW {
public:
    AdamW() = default;
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void add_param(const std::string& name, Tensor param);

    struct Entry {
        std::string name;
        Tensor param;
        Tensor m;
        Tensor v;
        bool active = true;
    };

    // One update over all active params; every active param must carry a
    // populated grad. lr_override < 0 uses cfg.lr.
    void step(double lr_override = -1.0);

    void zero_grads();

    // enable/disable groups by name prefix
    void set_active_prefix(const std::string& prefix, bool active);

    const AdamWConfig& config() const { return cfg_; }
    AdamWConfig& config() { return cfg_; }
    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t t) { step_count_ = t; }
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    AdamWConfig cfg_;
    std::vector<Entry> entries_;
    int64_t step_count_ = 0;
};

// Linear warmup to `lr`, then cosine decay to min_ratio * lr at total_steps.
double lr_schedule(double lr, int64_t step, int64_t warmup_steps, int64_t total_steps,
                   double min_ratio);

} // namespace squidlet
