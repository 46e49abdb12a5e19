#pragma once

#include <cstdint>
#include <string>

namespace pathvlm {

// Closed-form LR trajectories. Every query is stateless, so step-by-step
// iteration and direct evaluation are bitwise identical by construction.
struct ScheduleSpec {
    enum class Kind { warmup_interval_decay, warmup_cosine };

    Kind kind = Kind::warmup_cosine;
    double init_lr = 0.0;
    double peak_lr = 0.0;
    double floor_lr = 0.0;
    long warmup_steps = 0;
    long total_steps = 0;
    long interval_steps = 0;  // interval decay only

    void validate() const;  // throws std::invalid_argument
};

// Linear warmup init->peak, then a multiplicative drop at each interval
// boundary sized so the last step lands exactly on floor_lr.
double plip_lr(long step, const ScheduleSpec& spec);

// Linear warmup init->peak, then cosine decay to floor_lr; endpoints exact.
double warmup_cosine(long step, const ScheduleSpec& spec);

// Dispatch on spec.kind.
double schedule_lr(long step, const ScheduleSpec& spec);

// micro_batch x accumulation x workers
long effective_batch(long micro_batch, long accum, long workers);

}  // namespace pathvlm
