#include "pathvlm/trainer.hpp"

#include <numeric>
#include <stdexcept>

namespace pathvlm {

double accumulate_and_step(AdamW& optim, ParamRegistry& reg, const std::map<std::string, double>& lrs,
                           int accum, const std::function<TensorPtr(int)>& micro_loss) {
    if (accum < 1) throw std::invalid_argument("accumulate_and_step: accum must be >= 1");
    optim.zero_grad(reg);
    double total = 0.0;
    for (int a = 0; a < accum; ++a) {
        TensorPtr loss = scale(micro_loss(a), 1.0 / accum);
        backward(loss);
        total += loss->v(0, 0);
    }
    optim.step(reg, lrs);
    return total;
}

TensorPtr vqa_item_loss(VlmModel& model, const VQARecord& rec, const ByteTokenizer& tok,
                        const std::filesystem::path& image_root, bool encoder_frozen) {
    const ImageArray img = load_image_ref(rec.image_ref, image_root);
    TensorPtr prefix = model.connector.connect(img, model.vision, encoder_frozen);
    AssembledSequence seq = assemble(prefix, rec.question, rec.answer, tok, model.lm.cfg.context);
    const std::vector<int> text = seq.text_ids();
    TensorPtr embs = concat_rows({seq.visual_prefix, model.lm.embed_tokens(text)});
    TensorPtr logits = model.lm.forward_embs(embs);
    // logits row (K-1+i) predicts text token i
    const int k = prefix->rows();
    TensorPtr text_logits = slice_rows(logits, k - 1, static_cast<int>(text.size()));
    return masked_cross_entropy(text_logits, text, seq.loss_mask);
}

TrainStageResult train_stage(int stage, const std::vector<VQARecord>& dataset, VlmModel& model,
                             const std::map<std::string, ScheduleSpec>& scheds,
                             const TrainStageOptions& opts) {
    if (dataset.empty()) throw std::invalid_argument("train_stage: empty dataset");
    for (const auto& r : dataset) r.validate();
    if (opts.micro_batch < 1 || opts.accum < 1)
        throw std::invalid_argument("train_stage: micro_batch and accum must be >= 1");
    const FreezePlan plan = freeze_policy(stage);
    plan.apply(model.params);
    for (const auto& gname : plan.trainable) {
        if (!scheds.count(gname))
            throw ConfigError("train_stage: missing schedule for trainable group " + gname);
        scheds.at(gname).validate();
    }
    const bool encoder_frozen = plan.frozen.count("vision_encoder") > 0;

    ByteTokenizer tok;
    Rng order_rng(derive_seed(opts.seed, "stage" + std::to_string(stage) + ".order"));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    size_t cursor = 0;
    auto next_item = [&]() -> const VQARecord& {
        if (cursor == order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        return dataset[order[cursor++]];
    };

    AdamW optim({.weight_decay = 0.01});
    TrainStageResult result;
    for (long step = 0; step < opts.steps; ++step) {
        std::map<std::string, double> lrs;
        for (const auto& gname : plan.trainable) {
            const ScheduleSpec& s = scheds.at(gname);
            lrs[gname] = schedule_lr(std::min(step, s.total_steps), s);
        }
        const double loss = accumulate_and_step(optim, model.params, lrs, opts.accum, [&](int) {
            std::vector<TensorPtr> losses;
            for (int b = 0; b < opts.micro_batch; ++b)
                losses.push_back(vqa_item_loss(model, next_item(), tok, opts.image_root, encoder_frozen));
            TensorPtr sum = losses[0];
            for (size_t i = 1; i < losses.size(); ++i) sum = add(sum, losses[i]);
            return scale(sum, 1.0 / opts.micro_batch);
        });
        result.losses.push_back(loss);
        if (opts.eval_interval > 0 && opts.stop_when && (step + 1) % opts.eval_interval == 0 &&
            opts.stop_when())
            break;
    }
    return result;
}

}  // namespace pathvlm
