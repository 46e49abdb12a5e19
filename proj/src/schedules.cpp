#include "pathvlm/schedules.hpp"

#include <cmath>
#include <stdexcept>

namespace pathvlm {

void ScheduleSpec::validate() const {
    if (!(floor_lr >= 0.0) || !(peak_lr >= floor_lr)) throw std::invalid_argument("schedule: need 0 <= floor <= peak");
    if (init_lr < 0.0 || !std::isfinite(init_lr) || !std::isfinite(peak_lr) || !std::isfinite(floor_lr))
        throw std::invalid_argument("schedule: rates must be finite and >= 0");
    if (warmup_steps < 0 || warmup_steps > total_steps) throw std::invalid_argument("schedule: need 0 <= warmup <= total");
    if (kind == Kind::warmup_interval_decay && interval_steps < 1)
        throw std::invalid_argument("schedule: interval_steps must be >= 1 for interval decay");
}

static void check_step(long step, const ScheduleSpec& spec) {
    spec.validate();
    if (step < 0 || step > spec.total_steps) throw std::invalid_argument("schedule: step out of range");
}

static double warmup_value(long step, const ScheduleSpec& spec) {
    if (spec.warmup_steps == 0) return spec.peak_lr;
    return spec.init_lr + (spec.peak_lr - spec.init_lr) * (static_cast<double>(step) / spec.warmup_steps);
}

double plip_lr(long step, const ScheduleSpec& spec) {
    check_step(step, spec);
    if (step < spec.warmup_steps) return warmup_value(step, spec);
    const long decay_span = spec.total_steps - spec.warmup_steps;
    if (decay_span <= 0) return spec.peak_lr;
    // boundary count n chosen so the final step is exactly floor_lr
    const long n = std::max(1L, decay_span / spec.interval_steps);
    long k = (step - spec.warmup_steps) / spec.interval_steps;
    if (k > n || step == spec.total_steps) k = n;
    if (k == 0) return spec.peak_lr;
    if (spec.floor_lr == 0.0) return k >= n ? 0.0 : spec.peak_lr;  // degenerate gamma
    const double ratio = spec.floor_lr / spec.peak_lr;
    return spec.peak_lr * std::pow(ratio, static_cast<double>(k) / static_cast<double>(n));
}

double warmup_cosine(long step, const ScheduleSpec& spec) {
    check_step(step, spec);
    if (step < spec.warmup_steps) return warmup_value(step, spec);
    if (step == spec.warmup_steps) return spec.peak_lr;
    if (step == spec.total_steps) return spec.floor_lr;
    const double frac = static_cast<double>(step - spec.warmup_steps) /
                        static_cast<double>(spec.total_steps - spec.warmup_steps);
    return spec.floor_lr + (spec.peak_lr - spec.floor_lr) * 0.5 * (1.0 + std::cos(M_PI * frac));
}

double schedule_lr(long step, const ScheduleSpec& spec) {
    return spec.kind == ScheduleSpec::Kind::warmup_interval_decay ? plip_lr(step, spec)
                                                                  : warmup_cosine(step, spec);
}

long effective_batch(long micro_batch, long accum, long workers) {
    if (micro_batch < 1 || accum < 1 || workers < 1)
        throw std::invalid_argument("effective_batch: all factors must be >= 1");
    return micro_batch * accum * workers;
}

}  // namespace pathvlm
