#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "pathvlm/connector.hpp"
#include "pathvlm/nn.hpp"
#include "pathvlm/tokenizer.hpp"

namespace pathvlm {

struct LMConfig {
    int d_model = 256;
    int layers = 4;
    int heads = 4;
    int context = 512;
    int vocab = ByteTokenizer::kVocab;
    uint64_t seed = 0;

    void validate() const;
};

// Decoder-only toy LM. The visual prefix occupies the first K positions as
// continuous embeddings; text tokens follow.
struct ToyLM {
    LMConfig cfg;
    TensorPtr tok_emb;  // vocab x d_model
    TensorPtr pos_emb;  // context x d_model
    std::vector<TransformerBlock> blocks;
    LayerNorm final_ln;
    Linear head;  // d_model -> vocab

    // embs (prefix rows + token rows) -> logits T x vocab, causal
    TensorPtr forward_embs(const TensorPtr& embs) const;
    TensorPtr embed_tokens(const std::vector<int>& ids) const;
};

struct LoraConfig {
    int rank = 16;
    double alpha = 32.0;
    std::vector<std::string> target_patterns = {".wq", ".wk", ".wv", ".wo"};
    uint64_t seed = 0;
};

struct AssembledSequence {
    TensorPtr visual_prefix;      // K x d_llm
    std::vector<int> prompt_ids;  // BOS + question bytes + SEP
    std::vector<int> answer_ids;  // answer bytes + EOS (empty for inference)
    std::vector<int> loss_mask;   // over text positions, 1 exactly on answer positions

    std::vector<int> text_ids() const {
        std::vector<int> ids = prompt_ids;
        ids.insert(ids.end(), answer_ids.begin(), answer_ids.end());
        return ids;
    }
};

struct FreezePlan {
    int stage = 0;
    std::set<std::string> trainable;
    std::set<std::string> frozen;

    void apply(ParamRegistry& reg) const;  // toggles requires_grad, validates coverage
};

// The full vision-language model: PLIP vision tower + connector + LM (+LoRA).
struct VlmModel {
    PlipConfig plip_cfg;
    ConnectorConfig conn_cfg;
    LMConfig lm_cfg;
    LoraConfig lora_cfg;
    ParamRegistry params;  // groups: vision_encoder, connector, lm_base, lora
    PlipImageTower vision;
    Connector connector;
    ToyLM lm;
    std::vector<std::shared_ptr<LoraAdapter>> adapters;

    VlmModel(const PlipConfig& plip, const ConnectorConfig& conn, const LMConfig& lm);
};

// Wires zero-initialized low-rank adapters into every Linear whose name
// matches a target pattern; registers them as ParamGroup "lora". Forward
// outputs are bitwise unchanged at attachment time.
int attach_lora(VlmModel& model, const LoraConfig& cfg);

FreezePlan freeze_policy(int stage);

// Prompt layout: [visual_prefix | BOS question SEP | answer EOS].
AssembledSequence assemble(const TensorPtr& visual_prefix, const std::string& question_text,
                           const std::string& answer_text, const ByteTokenizer& tok, int context);

// Mean next-token cross-entropy over masked positions only.
double lm_loss(const Mat& logits, const std::vector<int>& targets, const std::vector<int>& mask);

// Greedy decoding; deterministic, stops at EOS or max_new_tokens.
std::string generate(const VlmModel& model, const ImageArray& image, const std::string& question,
                     int max_new_tokens);

}  // namespace pathvlm
