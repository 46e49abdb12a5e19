#include "pathvlm/lm.hpp"

#include <algorithm>
#include <stdexcept>

#include "pathvlm/common.hpp"

namespace pathvlm {

void LMConfig::validate() const {
    if (d_model < 1 || layers < 1 || context < 1 || vocab < 1)
        throw std::invalid_argument("lm config: dims must be >= 1");
    if (d_model % heads != 0) throw std::invalid_argument("lm config: d_model must divide heads");
}

TensorPtr ToyLM::embed_tokens(const std::vector<int>& ids) const {
    for (int id : ids)
        if (id < 0 || id >= cfg.vocab) throw std::invalid_argument("lm: token id out of vocab");
    return gather_rows(tok_emb, ids);
}

TensorPtr ToyLM::forward_embs(const TensorPtr& embs) const {
    const int t = embs->rows();
    if (t > cfg.context) throw std::invalid_argument("lm: sequence exceeds context");
    TensorPtr h = add(embs, slice_rows(pos_emb, 0, t));
    const Mat mask = causal_mask(t);
    for (const auto& blk : blocks) h = blk.forward(h, &mask);
    return head.forward(final_ln.forward(h));
}

static ToyLM build_lm(ParamRegistry& params, const LMConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "lm"));
    auto g = params.group("lm_base");
    ToyLM lm;
    lm.cfg = cfg;
    auto table = [&](int rows, int cols) {
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, 0.02);
        return m;
    };
    lm.tok_emb = g->add("tok_emb", table(cfg.vocab, cfg.d_model));
    lm.pos_emb = g->add("pos_emb", table(cfg.context, cfg.d_model));
    for (int i = 0; i < cfg.layers; ++i)
        lm.blocks.push_back(make_block(*g, "block" + std::to_string(i), cfg.d_model, cfg.heads, 4, rng));
    lm.final_ln = make_layer_norm(*g, "final_ln", cfg.d_model);
    lm.head = make_linear(*g, "head", cfg.d_model, cfg.vocab, rng);
    return lm;
}

VlmModel::VlmModel(const PlipConfig& plip, const ConnectorConfig& conn, const LMConfig& lm_c)
    : plip_cfg(plip), conn_cfg(conn), lm_cfg(lm_c) {
    plip_cfg.validate();
    if (conn.d_llm != lm_c.d_model)
        throw ConfigError("vlm: connector d_llm must equal the LM hidden size");

    // vision tower only; the text tower and ITM head stay in the PLIP model
    Rng rng(derive_seed(plip_cfg.seed, "plip"));
    auto vision_group = params.group("vision_encoder");
    vision.cfg = plip_cfg;
    vision.patch_embed = make_linear(*vision_group, "patch_embed",
                                     plip_cfg.patch_size * plip_cfg.patch_size * 3, plip_cfg.enc_dim, rng);
    for (int i = 0; i < plip_cfg.enc_layers; ++i)
        vision.blocks.push_back(make_block(*vision_group, "block" + std::to_string(i), plip_cfg.enc_dim,
                                           plip_cfg.enc_heads, 4, rng));
    vision.final_ln = make_layer_norm(*vision_group, "final_ln", plip_cfg.enc_dim);
    vision.proj = make_linear(*vision_group, "proj", plip_cfg.enc_dim, plip_cfg.d_proj, rng);

    connector = make_connector(params, conn_cfg, plip_cfg.enc_dim, plip_cfg.patch_size);
    lm = build_lm(params, lm_cfg);
}

int attach_lora(VlmModel& model, const LoraConfig& cfg) {
    if (cfg.rank < 1) throw ConfigError("lora: rank must be >= 1");
    auto lm_group = model.params.get("lm_base");
    auto lora_group = model.params.group("lora");
    Rng rng(derive_seed(cfg.seed, "lora"));
    int attached = 0;
    auto matches = [&](const std::string& name) {
        for (const auto& pat : cfg.target_patterns)
            if (name.find(pat) != std::string::npos) return true;
        return false;
    };
    for (auto& blk : model.lm.blocks) {
        Linear* linears[] = {&blk.attn.wq, &blk.attn.wk, &blk.attn.wv, &blk.attn.wo, &blk.fc1, &blk.fc2};
        for (Linear* lin : linears) {
            // recover the registered name of this weight
            std::string wname;
            for (const auto& [n, t] : lm_group->params)
                if (t.get() == lin->W.get()) wname = n;
            if (wname.empty() || !matches(wname)) continue;
            auto adapter = std::make_shared<LoraAdapter>();
            adapter->rank = cfg.rank;
            adapter->alpha = cfg.alpha;
            adapter->target = wname;
            const std::string base = wname.substr(0, wname.size() - 2);  // strip ".W"
            Mat a(cfg.rank, lin->d_in());
            for (int i = 0; i < a.rows(); ++i)
                for (int j = 0; j < a.cols(); ++j) a(i, j) = rng.normal(0.0, 0.02);
            adapter->A = lora_group->add(base + ".lora_A", std::move(a));
            adapter->B = lora_group->add(base + ".lora_B", Mat::Zero(lin->d_out(), cfg.rank));
            lin->lora = adapter;
            model.adapters.push_back(adapter);
            ++attached;
        }
    }
    if (attached == 0) throw ConfigError("lora: no layers matched the target patterns");
    return attached;
}

void FreezePlan::apply(ParamRegistry& reg) const {
    for (const auto& name : trainable)
        if (frozen.count(name)) throw ConfigError("freeze plan: group both trainable and frozen: " + name);
    for (const auto& [gname, group] : reg.groups) {
        const bool is_trainable = trainable.count(gname) > 0;
        const bool is_frozen = frozen.count(gname) > 0;
        if (!is_trainable && !is_frozen)
            throw ConfigError("freeze plan: group not covered: " + gname);
        group->set_trainable(is_trainable);
    }
}

FreezePlan freeze_policy(int stage) {
    if (stage != 2 && stage != 3) throw ConfigError("freeze_policy: unknown stage " + std::to_string(stage));
    FreezePlan plan;
    plan.stage = stage;
    // both alignment and VQA fine-tuning train the connector and the LM's
    // low-rank adapters; the vision tower and LM base stay frozen
    plan.trainable = {"connector", "lora"};
    plan.frozen = {"vision_encoder", "lm_base"};
    return plan;
}

AssembledSequence assemble(const TensorPtr& visual_prefix, const std::string& question_text,
                           const std::string& answer_text, const ByteTokenizer& tok, int context) {
    if (question_text.empty()) throw std::invalid_argument("assemble: question must be non-empty");
    AssembledSequence seq;
    seq.visual_prefix = visual_prefix;
    seq.prompt_ids.push_back(ByteTokenizer::kBos);
    for (int id : tok.encode(question_text)) seq.prompt_ids.push_back(id);
    seq.prompt_ids.push_back(ByteTokenizer::kSep);
    if (!answer_text.empty()) {
        for (int id : tok.encode(answer_text)) seq.answer_ids.push_back(id);
        seq.answer_ids.push_back(ByteTokenizer::kEos);
    }
    const long total = visual_prefix->rows() + static_cast<long>(seq.prompt_ids.size()) +
                       static_cast<long>(seq.answer_ids.size());
    if (total > context)
        throw std::invalid_argument("assemble: sequence needs " + std::to_string(total) +
                                    " positions but context is " + std::to_string(context));
    seq.loss_mask.assign(seq.prompt_ids.size() + seq.answer_ids.size(), 0);
    for (size_t i = seq.prompt_ids.size(); i < seq.loss_mask.size(); ++i) seq.loss_mask[i] = 1;
    return seq;
}

double lm_loss(const Mat& logits, const std::vector<int>& targets, const std::vector<int>& mask) {
    return masked_cross_entropy(constant(logits), targets, mask)->v(0, 0);
}

std::string generate(const VlmModel& model, const ImageArray& image, const std::string& question,
                     int max_new_tokens) {
    if (max_new_tokens < 1) throw std::invalid_argument("generate: max_new_tokens must be >= 1");
    ByteTokenizer tok;
    TensorPtr prefix = detach(model.connector.connect(image, model.vision, /*encoder_frozen=*/true));
    AssembledSequence seq = assemble(prefix, question, "", tok, model.lm.cfg.context);
    std::vector<int> ids = seq.prompt_ids;
    std::vector<int> out_ids;
    for (int n = 0; n < max_new_tokens; ++n) {
        if (prefix->rows() + static_cast<int>(ids.size()) >= model.lm.cfg.context) break;
        TensorPtr embs = concat_rows({prefix, model.lm.embed_tokens(ids)});
        TensorPtr logits = model.lm.forward_embs(embs);
        const int last = logits->rows() - 1;
        int best = 0;
        double best_v = logits->v(last, 0);
        for (int v = 1; v < logits->cols(); ++v)
            if (logits->v(last, v) > best_v) {
                best_v = logits->v(last, v);
                best = v;
            }
        if (best == ByteTokenizer::kEos) break;
        ids.push_back(best);
        out_ids.push_back(best);
    }
    return tok.decode(out_ids);
}

}  // namespace pathvlm
