#pragma once

#include <filesystem>
#include <functional>
#include <map>

#include "pathvlm/data_pipeline.hpp"
#include "pathvlm/lm.hpp"
#include "pathvlm/optim.hpp"

namespace pathvlm {

// One optimizer step from `accum` micro-batch losses, each scaled by
// 1/accum before backprop so accumulation matches a single large batch of
// equal-sized micro-batches.
double accumulate_and_step(AdamW& optim, ParamRegistry& reg, const std::map<std::string, double>& lrs,
                           int accum, const std::function<TensorPtr(int)>& micro_loss);

struct TrainStageOptions {
    long steps = 100;
    int micro_batch = 2;
    int accum = 1;
    uint64_t seed = 0;
    std::filesystem::path image_root;
    // optional early stop: checked every eval_interval steps; training ends
    // once stop_when() returns true
    long eval_interval = 0;
    std::function<bool()> stop_when;
};

struct TrainStageResult {
    std::vector<double> losses;  // per optimizer step
};

// Stage 2 (alignment) and stage 3 (VQA instruction learning): answer-masked
// LM loss through the frozen vision tower; freeze_policy(stage) is applied on
// entry. `scheds` maps each trainable group to its LR trajectory.
TrainStageResult train_stage(int stage, const std::vector<VQARecord>& dataset, VlmModel& model,
                             const std::map<std::string, ScheduleSpec>& scheds,
                             const TrainStageOptions& opts);

// Answer-masked loss for one record; shared by the trainer and tests.
TensorPtr vqa_item_loss(VlmModel& model, const VQARecord& rec, const ByteTokenizer& tok,
                        const std::filesystem::path& image_root, bool encoder_frozen);

}  // namespace pathvlm
