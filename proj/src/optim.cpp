#include "pathvlm/optim.hpp"

#include <cmath>

namespace pathvlm {

AdamW::AdamW() : opts_() {}
AdamW::AdamW(Options opts) : opts_(opts) {}

void AdamW::step(ParamRegistry& reg, const std::map<std::string, double>& group_lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& [gname, group] : reg.groups) {
        auto it = group_lr.find(gname);
        if (it == group_lr.end()) continue;
        const double lr = it->second;
        for (auto& [pname, p] : group->params) {
            if (!p->requires_grad) continue;
            if (p->g.size() == 0) continue;  // no gradient reached this param
            Slot& s = state_[p.get()];
            if (s.m.size() == 0) {
                s.m = Mat::Zero(p->v.rows(), p->v.cols());
                s.v = Mat::Zero(p->v.rows(), p->v.cols());
            }
            s.m = opts_.beta1 * s.m + (1.0 - opts_.beta1) * p->g;
            s.v = opts_.beta2 * s.v.array().matrix() + (1.0 - opts_.beta2) * p->g.cwiseProduct(p->g);
            Mat mhat = s.m / bc1;
            Mat vhat = s.v / bc2;
            p->v.array() -= lr * (mhat.array() / (vhat.array().sqrt() + opts_.eps) + opts_.weight_decay * p->v.array());
        }
    }
}

void AdamW::zero_grad(ParamRegistry& reg) {
    for (auto& [gname, group] : reg.groups)
        for (auto& [pname, p] : group->params) p->zero_grad();
}

}  // namespace pathvlm
