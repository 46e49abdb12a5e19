#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pathvlm/image.hpp"
#include "pathvlm/nn.hpp"
#include "pathvlm/rng.hpp"
#include "pathvlm/schedules.hpp"
#include "pathvlm/tokenizer.hpp"

namespace pathvlm {

struct PairRecord;  // data_pipeline.hpp

struct PlipConfig {
    int patch_size = 16;
    int enc_dim = 128;
    int enc_layers = 2;
    int enc_heads = 4;
    int d_proj = 64;
    double temperature = 0.07;  // initial value of the learnable tau
    int max_text_len = 100;
    int vocab = ByteTokenizer::kVocab;
    uint64_t seed = 0;

    void validate() const;
};

// Image tower: linear patch embed + 2D sin-cos positions + transformer
// blocks + final LN. Pooled embedding is the mean token pushed through the
// projection head and L2-normalized.
struct PlipImageTower {
    PlipConfig cfg;
    Linear patch_embed;
    std::vector<TransformerBlock> blocks;
    LayerNorm final_ln;
    Linear proj;

    // returns (patch_tokens L_v x enc_dim, pooled 1 x d_proj unit norm)
    std::pair<TensorPtr, TensorPtr> encode(const ImageArray& image) const;
};

struct PlipTextTower {
    PlipConfig cfg;
    TensorPtr tok_emb;  // vocab x enc_dim
    TensorPtr pos_emb;  // max_text_len x enc_dim
    std::vector<TransformerBlock> blocks;
    LayerNorm final_ln;
    Linear proj;

    // returns (text_tokens L x enc_dim, pooled 1 x d_proj unit norm)
    std::pair<TensorPtr, TensorPtr> encode(const std::vector<int>& ids) const;
};

// Cross-attention fusion (text queries attend to patch tokens) and a linear
// match head on the first fused token.
struct ItmHead {
    Attention cross;
    LayerNorm ln;
    Linear head;  // enc_dim -> 1

    TensorPtr match_logit(const TensorPtr& text_tokens, const TensorPtr& patch_tokens) const;
};

struct PlipModel {
    PlipConfig cfg;
    ParamRegistry params;
    PlipImageTower image_tower;
    PlipTextTower text_tower;
    ItmHead itm_head;
    TensorPtr tau;  // 1x1 learnable temperature, clamped to [0.001, 0.5]

    static constexpr double kTauMin = 0.001;
    static constexpr double kTauMax = 0.5;

    explicit PlipModel(const PlipConfig& cfg);
    void clamp_tau();
};

// Symmetric InfoNCE over unit-norm batches (value-level surface; the graph
// op behind it is infonce_pair_loss).
double itc_loss(const Mat& img_emb, const Mat& txt_emb, double tau);

// For each row/column, draws one off-diagonal index with probability
// proportional to softmax of the off-diagonal similarities.
std::pair<std::vector<int>, std::vector<int>> sample_hard_negatives(const Mat& sim, Rng& rng);

// Mean binary cross-entropy with logits over the 3N matched/negative layout.
double itm_loss(const std::vector<double>& match_logits, const std::vector<int>& labels);

struct PlipTrainOptions {
    long steps = 200;
    int batch = 16;
    std::filesystem::path image_root;  // for non-synth image refs
};

struct PlipTrainResult {
    std::vector<double> losses;      // total loss per step
    std::vector<double> itc_losses;  // ITC term per step
    long steps = 0;
};

// Stage-1 training loop: AdamW(weight decay 0.01), loss = itc + itm,
// deterministic for a fixed seed. Model is updated in place.
PlipTrainResult train_plip(PlipModel& model, const std::vector<PairRecord>& manifest,
                           const ScheduleSpec& sched, const PlipTrainOptions& opts);

}  // namespace pathvlm
