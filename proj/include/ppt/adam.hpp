#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ppt/tensor.hpp"

namespace ppt {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment buffers for one fixed parameter list. Bound to the
// parameter count and sizes seen at construction; adam_step re-checks them.
class AdamState {
public:
    explicit AdamState(std::span<const Tensor> params, AdamConfig config = {});

    const AdamConfig& config() const { return config_; }
    int64_t steps() const { return steps_; }

private:
    friend void adam_step(std::span<Tensor> params, AdamState& state);

    AdamConfig config_;
    int64_t steps_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

// One bias-corrected update over the accumulated gradients. A parameter with
// no gradient buffer counts as zero gradient. Gradients are left in place;
// callers decide when to clear them.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace ppt
