#pragma once

#include <map>
#include <string>
#include <vector>

#include "pathvlm/nn.hpp"

namespace pathvlm {

// Decoupled-weight-decay Adam. Group learning rates can differ per step;
// frozen params (requires_grad == false) are skipped entirely.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    AdamW();
    explicit AdamW(Options opts);

    // lr per group name; groups missing from the map are skipped
    void step(ParamRegistry& reg, const std::map<std::string, double>& group_lr);
    void zero_grad(ParamRegistry& reg);
    void reset_state() { state_.clear(); t_ = 0; }

private:
    struct Slot {
        Mat m, v;
    };
    Options opts_;
    std::map<Tensor*, Slot> state_;
    long t_ = 0;
};

}  // namespace pathvlm
