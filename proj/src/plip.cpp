#include "pathvlm/plip.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pathvlm/data_pipeline.hpp"
#include "pathvlm/optim.hpp"

namespace pathvlm {

void PlipConfig::validate() const {
    if (patch_size < 1 || enc_dim < 1 || enc_layers < 1 || d_proj < 1)
        throw std::invalid_argument("plip config: dims must be >= 1");
    if (enc_dim % enc_heads != 0) throw std::invalid_argument("plip config: enc_dim must divide enc_heads");
    if (!(temperature > 0.0)) throw std::invalid_argument("plip config: temperature must be > 0");
    if (max_text_len < 1 || vocab < 1) throw std::invalid_argument("plip config: text dims must be >= 1");
}

// fixed 2D sin-cos grid positions, any grid size
static Mat sincos_positions_2d(int gh, int gw, int dim) {
    Mat pos = Mat::Zero(gh * gw, dim);
    const int quarter = dim / 4;
    for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
            const int row = y * gw + x;
            for (int k = 0; k < quarter; ++k) {
                const double omega = std::pow(10000.0, -static_cast<double>(k) / quarter);
                pos(row, 2 * k) = std::sin(y * omega);
                pos(row, 2 * k + 1) = std::cos(y * omega);
                pos(row, 2 * quarter + 2 * k) = std::sin(x * omega);
                pos(row, 2 * quarter + 2 * k + 1) = std::cos(x * omega);
            }
        }
    }
    return pos;
}

std::pair<TensorPtr, TensorPtr> PlipImageTower::encode(const ImageArray& image) const {
    image.validate();
    if (image.height < cfg.patch_size || image.width < cfg.patch_size)
        throw std::invalid_argument("encode_image: image smaller than one patch");
    const ImageArray padded = pad_to_multiple(image, cfg.patch_size);
    const int gh = padded.height / cfg.patch_size;
    const int gw = padded.width / cfg.patch_size;
    const int p = cfg.patch_size;
    Mat patches(gh * gw, p * p * 3);
    for (int ty = 0; ty < gh; ++ty)
        for (int tx = 0; tx < gw; ++tx) {
            const int row = ty * gw + tx;
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x)
                    for (int c = 0; c < 3; ++c)
                        patches(row, (y * p + x) * 3 + c) = padded.at(ty * p + y, tx * p + x, c);
        }
    TensorPtr h = add_const(patch_embed.forward(constant(std::move(patches))),
                            sincos_positions_2d(gh, gw, cfg.enc_dim));
    for (const auto& blk : blocks) h = blk.forward(h);
    TensorPtr tokens = final_ln.forward(h);
    TensorPtr pooled = l2_normalize_rows(proj.forward(mean_rows(tokens)));
    return {tokens, pooled};
}

std::pair<TensorPtr, TensorPtr> PlipTextTower::encode(const std::vector<int>& ids) const {
    if (ids.empty()) throw std::invalid_argument("encode_text: empty sequence");
    if (static_cast<int>(ids.size()) > cfg.max_text_len)
        throw std::invalid_argument("encode_text: sequence longer than max_text_len");
    for (int id : ids)
        if (id < 0 || id >= cfg.vocab) throw std::invalid_argument("encode_text: token id out of vocab");
    TensorPtr h = add(gather_rows(tok_emb, ids), slice_rows(pos_emb, 0, static_cast<int>(ids.size())));
    for (const auto& blk : blocks) h = blk.forward(h);
    TensorPtr tokens = final_ln.forward(h);
    TensorPtr pooled = l2_normalize_rows(proj.forward(mean_rows(tokens)));
    return {tokens, pooled};
}

TensorPtr ItmHead::match_logit(const TensorPtr& text_tokens, const TensorPtr& patch_tokens) const {
    TensorPtr fused = cross.forward(ln.forward(text_tokens), patch_tokens);
    return head.forward(slice_rows(fused, 0, 1));
}

PlipModel::PlipModel(const PlipConfig& c) : cfg(c) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "plip"));

    auto vision = params.group("vision_encoder");
    image_tower.cfg = cfg;
    image_tower.patch_embed = make_linear(*vision, "patch_embed", cfg.patch_size * cfg.patch_size * 3,
                                          cfg.enc_dim, rng);
    for (int i = 0; i < cfg.enc_layers; ++i)
        image_tower.blocks.push_back(make_block(*vision, "block" + std::to_string(i), cfg.enc_dim,
                                                cfg.enc_heads, 4, rng));
    image_tower.final_ln = make_layer_norm(*vision, "final_ln", cfg.enc_dim);
    image_tower.proj = make_linear(*vision, "proj", cfg.enc_dim, cfg.d_proj, rng);

    auto text = params.group("text_encoder");
    text_tower.cfg = cfg;
    text_tower.tok_emb = text->add("tok_emb", [&] {
        Mat m(cfg.vocab, cfg.enc_dim);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, 0.02);
        return m;
    }());
    text_tower.pos_emb = text->add("pos_emb", [&] {
        Mat m(cfg.max_text_len, cfg.enc_dim);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, 0.02);
        return m;
    }());
    for (int i = 0; i < cfg.enc_layers; ++i)
        text_tower.blocks.push_back(make_block(*text, "block" + std::to_string(i), cfg.enc_dim,
                                               cfg.enc_heads, 4, rng));
    text_tower.final_ln = make_layer_norm(*text, "final_ln", cfg.enc_dim);
    text_tower.proj = make_linear(*text, "proj", cfg.enc_dim, cfg.d_proj, rng);

    auto itm = params.group("itm_head");
    itm_head.cross = make_attention(*itm, "cross", cfg.enc_dim, cfg.enc_heads, rng);
    itm_head.ln = make_layer_norm(*itm, "ln", cfg.enc_dim);
    itm_head.head = make_linear(*itm, "head", cfg.enc_dim, 1, rng);

    auto temp = params.group("itc_temperature");
    Mat t0(1, 1);
    t0(0, 0) = cfg.temperature;
    tau = temp->add("tau", t0);
}

void PlipModel::clamp_tau() {
    tau->v(0, 0) = std::clamp(tau->v(0, 0), kTauMin, kTauMax);
}

double itc_loss(const Mat& img_emb, const Mat& txt_emb, double tau) {
    Mat t0(1, 1);
    t0(0, 0) = tau;
    return infonce_pair_loss(constant(img_emb), constant(txt_emb), constant(t0))->v(0, 0);
}

std::pair<std::vector<int>, std::vector<int>> sample_hard_negatives(const Mat& sim, Rng& rng) {
    const int n = static_cast<int>(sim.rows());
    if (sim.cols() != n) throw std::invalid_argument("sample_hard_negatives: sim must be square");
    if (n < 2) throw std::invalid_argument("sample_hard_negatives: need N >= 2, no negative exists");
    auto draw = [&](auto value_at, int fixed) {
        // softmax over off-diagonal entries, max-sub for stability
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
            if (j != fixed) mx = std::max(mx, value_at(j));
        std::vector<double> w(n, 0.0);
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == fixed) continue;
            w[j] = std::exp(value_at(j) - mx);
            total += w[j];
        }
        double r = rng.u01() * total;
        for (int j = 0; j < n; ++j) {
            if (j == fixed) continue;
            r -= w[j];
            if (r <= 0.0) return j;
        }
        return fixed == n - 1 ? n - 2 : n - 1;  // fp corner: last valid index
    };
    std::vector<int> neg_text(n), neg_img(n);
    for (int i = 0; i < n; ++i) neg_text[i] = draw([&](int j) { return sim(i, j); }, i);
    for (int j = 0; j < n; ++j) neg_img[j] = draw([&](int i) { return sim(i, j); }, j);
    return {neg_text, neg_img};
}

double itm_loss(const std::vector<double>& match_logits, const std::vector<int>& labels) {
    if (match_logits.size() != labels.size() || match_logits.empty() || match_logits.size() % 3 != 0)
        throw std::invalid_argument("itm_loss: length must be a positive multiple of 3");
    Mat l(static_cast<int>(match_logits.size()), 1);
    for (size_t i = 0; i < match_logits.size(); ++i) l(static_cast<int>(i), 0) = match_logits[i];
    return bce_with_logits(constant(std::move(l)), labels)->v(0, 0);
}

PlipTrainResult train_plip(PlipModel& model, const std::vector<PairRecord>& manifest,
                           const ScheduleSpec& sched, const PlipTrainOptions& opts) {
    if (manifest.empty()) throw std::invalid_argument("train_plip: empty manifest");
    for (const auto& r : manifest) r.validate();
    const int batch = std::min<int>(opts.batch, static_cast<int>(manifest.size()));
    if (batch < 2)
        throw ConfigError("train_plip: batch of 1 cannot mine hard negatives; need >= 2 pairs per step");
    sched.validate();

    ByteTokenizer tok;
    Rng order_rng(derive_seed(model.cfg.seed, "plip.order"));
    Rng neg_rng(derive_seed(model.cfg.seed, "plip.negatives"));
    AdamW optim({.weight_decay = 0.01});

    std::vector<size_t> order(manifest.size());
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    size_t cursor = 0;

    PlipTrainResult result;
    for (long step = 0; step < opts.steps; ++step) {
        std::vector<const PairRecord*> items;
        for (int b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            items.push_back(&manifest[order[cursor++]]);
        }
        std::vector<TensorPtr> patch_tokens, text_tokens, img_pooled, txt_pooled;
        for (const PairRecord* r : items) {
            const ImageArray img = load_image_ref(r->image_ref, opts.image_root);
            auto [ptoks, ipool] = model.image_tower.encode(img);
            auto ids = tok.truncate(tok.encode(r->caption), static_cast<size_t>(model.cfg.max_text_len));
            auto [ttoks, tpool] = model.text_tower.encode(ids);
            patch_tokens.push_back(ptoks);
            text_tokens.push_back(ttoks);
            img_pooled.push_back(ipool);
            txt_pooled.push_back(tpool);
        }
        TensorPtr img_batch = concat_rows(img_pooled);
        TensorPtr txt_batch = concat_rows(txt_pooled);
        TensorPtr itc = infonce_pair_loss(img_batch, txt_batch, model.tau);

        const Mat sim = (img_batch->v * txt_batch->v.transpose()) / model.tau->v(0, 0);
        auto [neg_text, neg_img] = sample_hard_negatives(sim, neg_rng);

        std::vector<TensorPtr> logits;
        std::vector<int> labels;
        const int n = batch;
        for (int i = 0; i < n; ++i) {
            logits.push_back(model.itm_head.match_logit(text_tokens[i], patch_tokens[i]));
            labels.push_back(1);
        }
        for (int i = 0; i < n; ++i) {
            logits.push_back(model.itm_head.match_logit(text_tokens[neg_text[i]], patch_tokens[i]));
            labels.push_back(0);
        }
        for (int i = 0; i < n; ++i) {
            logits.push_back(model.itm_head.match_logit(text_tokens[i], patch_tokens[neg_img[i]]));
            labels.push_back(0);
        }
        TensorPtr itm = bce_with_logits(concat_rows(logits), labels);
        TensorPtr total = add(itc, itm);

        optim.zero_grad(model.params);
        backward(total);
        const double lr = schedule_lr(std::min(step, sched.total_steps), sched);
        std::map<std::string, double> lrs;
        for (const auto& [gname, g] : model.params.groups) lrs[gname] = lr;
        optim.step(model.params, lrs);
        model.clamp_tau();

        result.losses.push_back(total->v(0, 0));
        result.itc_losses.push_back(itc->v(0, 0));
    }
    result.steps = opts.steps;
    return result;
}

}  // namespace pathvlm
