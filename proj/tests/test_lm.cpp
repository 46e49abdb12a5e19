#include <cmath>
#include <cstring>
#include <memory>
#include <thread>

#include <doctest.h>

#include "pathvlm/checkpoint.hpp"
#include "pathvlm/lm.hpp"
#include "pathvlm/trainer.hpp"
#include "testutil.hpp"

using namespace pathvlm;
using testutil::seeded_matrix;

static std::unique_ptr<VlmModel> tiny_vlm(uint64_t seed = 4, int d = 64) {
    PlipConfig pc;
    pc.patch_size = 16;
    pc.enc_dim = 32;
    pc.enc_layers = 1;
    pc.enc_heads = 2;
    pc.d_proj = 16;
    pc.seed = seed;
    ConnectorConfig cc;
    cc.tile_size = 32;
    cc.max_tiles = 4;
    cc.query_count = 4;
    cc.d_llm = d;
    cc.seed = seed;
    LMConfig lc;
    lc.d_model = d;
    lc.layers = 2;
    lc.heads = 2;
    lc.context = 128;
    lc.seed = seed;
    return std::make_unique<VlmModel>(pc, cc, lc);
}

TEST_CASE("assemble: mask arithmetic, inference mode, overflow") {
    ByteTokenizer tok;
    auto prefix = constant(seeded_matrix(32, 16, 1));
    AssembledSequence seq = assemble(prefix, "0123456789", "abcde", tok, 512);
    CHECK(seq.prompt_ids.size() == 12);  // BOS + 10 bytes + SEP
    CHECK(seq.answer_ids.size() == 6);   // 5 bytes + EOS
    int ones = 0;
    for (int m : seq.loss_mask) ones += m;
    CHECK(ones == 6);
    for (size_t i = 0; i < seq.prompt_ids.size(); ++i) CHECK(seq.loss_mask[i] == 0);

    AssembledSequence inf = assemble(prefix, "question", "", tok, 512);
    CHECK(inf.answer_ids.empty());
    for (int m : inf.loss_mask) CHECK(m == 0);

    AssembledSequence again = assemble(prefix, "0123456789", "abcde", tok, 512);
    CHECK(again.prompt_ids == seq.prompt_ids);
    CHECK(again.answer_ids == seq.answer_ids);

    CHECK_THROWS_WITH_AS(assemble(prefix, std::string(100, 'q'), "a", tok, 64),
                         doctest::Contains("needs"), std::invalid_argument);
    CHECK_THROWS_AS(assemble(prefix, "", "a", tok, 512), std::invalid_argument);
}

TEST_CASE("lm_loss: uniform logits give ln V, saturated give ~0") {
    const int v = 11;
    Mat logits = Mat::Zero(6, v);
    std::vector<int> targets = {3, 7, 0, 10, 5, 2};
    std::vector<int> mask = {0, 1, 1, 0, 1, 0};
    CHECK(std::abs(lm_loss(logits, targets, mask) - std::log(static_cast<double>(v))) < 1e-12);

    Mat hot = Mat::Zero(6, v);
    for (int i = 0; i < 6; ++i) hot(i, targets[static_cast<size_t>(i)]) = 30.0;
    CHECK(lm_loss(hot, targets, mask) < 1e-8);
}

TEST_CASE("lm_loss: frozen brute-force oracle value") {
    Mat logits(6, 11);
    logits << -0.204708, 0.478943, -0.519439, -0.55573, 1.965781, 1.393406, 0.092908, 0.281746,
        0.769023, 1.246435, 1.007189,
        -1.296221, 0.274992, 0.228913, 1.352917, 0.886429, -2.001637, -0.371843, 1.669025, -0.43857,
        -0.539741, 0.476985,
        3.248944, -1.021228, -0.577087, 0.124121, 0.302614, 0.523772, 0.00094, 1.34381, -0.713544,
        -0.831154, -2.370232,
        -1.860761, -0.860757, 0.560145, -1.265934, 0.119827, -1.063512, 0.332883, -2.359419,
        -0.199543, -1.541996, -0.970736,
        -1.30703, 0.28635, 0.377984, -0.753887, 0.331286, 1.349742, 0.069877, 0.246674, -0.011862,
        1.004812, 1.327195,
        -0.919262, -1.549106, 0.022185, 0.758363, -0.660524, 0.86258, -0.010032, 0.050009, 0.670216,
        0.852965, -0.955869;
    const std::vector<int> targets = {3, 7, 0, 10, 5, 2};
    const std::vector<int> mask = {0, 1, 1, 0, 1, 0};
    CHECK(std::abs(lm_loss(logits, targets, mask) - 1.05215137310799) < 1e-12);
}

TEST_CASE("lm_loss: mask locality and all-zero mask rejection") {
    Mat logits = seeded_matrix(5, 9, 2);
    const std::vector<int> targets = {1, 2, 3, 4, 5};
    const std::vector<int> mask = {0, 1, 0, 1, 0};
    const double base = lm_loss(logits, targets, mask);
    logits.row(0).array() += 3.7;  // unmasked position
    logits.row(2).array() -= 1.1;
    CHECK(lm_loss(logits, targets, mask) == base);
    CHECK_THROWS_AS(lm_loss(logits, targets, {0, 0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("attach_lora: exact identity at init on random inputs") {
    auto plain = tiny_vlm(8);
    auto adapted = tiny_vlm(8);
    const int n = attach_lora(*adapted, LoraConfig{.rank = 4, .alpha = 8.0, .seed = 8});
    CHECK(n == 8);  // 2 layers x 4 attention projections

    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        std::vector<int> ids;
        for (int i = 0; i < 12; ++i) ids.push_back(static_cast<int>(rng.uniform_int(512)));
        const Mat a = plain->lm.forward_embs(plain->lm.embed_tokens(ids))->v;
        const Mat b = adapted->lm.forward_embs(adapted->lm.embed_tokens(ids))->v;
        REQUIRE(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    }
}

TEST_CASE("lora: merged dense weights reproduce the adapted forward within 1e-6") {
    auto model = tiny_vlm(9);
    attach_lora(*model, LoraConfig{.rank = 4, .alpha = 8.0, .seed = 9});
    // give the adapters non-trivial content
    Rng rng(10);
    for (auto& ad : model->adapters)
        for (int i = 0; i < ad->B->v.rows(); ++i)
            for (int j = 0; j < ad->B->v.cols(); ++j) ad->B->v(i, j) = rng.normal(0.0, 0.05);

    std::vector<int> ids = {5, 99, 300, 7, 42, 42, 17};
    const Mat adapted = model->lm.forward_embs(model->lm.embed_tokens(ids))->v;

    // merge deltas into the dense weights, drop the adapters
    for (auto& blk : model->lm.blocks) {
        for (Linear* lin : {&blk.attn.wq, &blk.attn.wk, &blk.attn.wv, &blk.attn.wo}) {
            REQUIRE(lin->lora != nullptr);
            const auto& ad = *lin->lora;
            lin->W->v += (ad.alpha / ad.rank) * (ad.B->v * ad.A->v).transpose();
            lin->lora = nullptr;
        }
    }
    const Mat dense = model->lm.forward_embs(model->lm.embed_tokens(ids))->v;
    CHECK((adapted - dense).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("lora: alpha = 0 contributes nothing even after updates") {
    auto model = tiny_vlm(11);
    auto plain = tiny_vlm(11);
    attach_lora(*model, LoraConfig{.rank = 4, .alpha = 0.0, .seed = 11});
    Rng rng(12);
    for (auto& ad : model->adapters) ad->B->v.setConstant(rng.normal(0.0, 0.3));
    std::vector<int> ids = {1, 2, 3, 4};
    const Mat a = model->lm.forward_embs(model->lm.embed_tokens(ids))->v;
    const Mat b = plain->lm.forward_embs(plain->lm.embed_tokens(ids))->v;
    CHECK(a.isApprox(b));
}

TEST_CASE("lora: no matching layers is a configuration error") {
    auto model = tiny_vlm(13);
    CHECK_THROWS_AS(attach_lora(*model, LoraConfig{.rank = 4, .alpha = 8.0,
                                                   .target_patterns = {".nothing"}, .seed = 13}),
                    ConfigError);
}

TEST_CASE("freeze_policy: stage contracts") {
    for (int stage : {2, 3}) {
        const FreezePlan plan = freeze_policy(stage);
        CHECK(plan.frozen.count("vision_encoder") == 1);
        CHECK(plan.frozen.count("lm_base") == 1);
        CHECK(plan.trainable.count("connector") == 1);
        CHECK(plan.trainable.count("lora") == 1);
        CHECK(plan.trainable.count("lm_base") == 0);
    }
    CHECK_THROWS_AS(freeze_policy(1), ConfigError);
    CHECK_THROWS_AS(freeze_policy(4), ConfigError);
}

TEST_CASE("freeze plan application toggles requires_grad and demands coverage") {
    auto model = tiny_vlm(14);
    attach_lora(*model, LoraConfig{.seed = 14});
    freeze_policy(2).apply(model->params);
    for (const auto& [pname, t] : model->params.get("vision_encoder")->params)
        CHECK(t->requires_grad == false);
    for (const auto& [pname, t] : model->params.get("connector")->params)
        CHECK(t->requires_grad == true);

    FreezePlan bad = freeze_policy(2);
    bad.trainable.erase("lora");
    CHECK_THROWS_AS(bad.apply(model->params), ConfigError);
}

TEST_CASE("generate: determinism and token budget") {
    auto model = tiny_vlm(15);
    const ImageArray img = synth_image(40, 40, 7);
    const std::string a = generate(*model, img, "what is this?", 6);
    const std::string b = generate(*model, img, "what is this?", 6);
    CHECK(a == b);
    CHECK(a.size() <= 6);

    // read-only inference is thread-safe on a loaded model
    std::vector<std::thread> threads;
    std::vector<std::string> results(3);
    for (int t = 0; t < 3; ++t)
        threads.emplace_back(
            [&, t] { results[static_cast<size_t>(t)] = generate(*model, img, "what is this?", 6); });
    for (auto& th : threads) th.join();
    for (const auto& r : results) CHECK(r == a);

    const std::string one = generate(*model, img, "what is this?", 1);
    CHECK(one.size() == 1);  // exactly one token when EOS does not fire first

    CHECK_THROWS_AS(generate(*model, img, "q", 0), std::invalid_argument);
}

TEST_CASE("overfitting one QA pair makes generate reproduce its answer verbatim") {
    auto model = tiny_vlm(16);
    attach_lora(*model, LoraConfig{.rank = 8, .alpha = 16.0, .seed = 16});

    VQARecord rec;
    rec.id = "single";
    rec.image_ref = "synth:32x32:123";
    rec.question = "What is shown?";
    rec.answer = "tumor";
    rec.kind = "open";

    ScheduleSpec sched;
    sched.kind = ScheduleSpec::Kind::warmup_cosine;
    sched.init_lr = 1e-3;
    sched.peak_lr = 5e-3;
    sched.floor_lr = 1e-4;
    sched.warmup_steps = 10;
    sched.total_steps = 300;
    TrainStageOptions opts;
    opts.steps = 300;
    opts.micro_batch = 1;
    opts.accum = 1;
    opts.seed = 16;
    train_stage(3, {rec}, *model, {{"connector", sched}, {"lora", sched}}, opts);

    CHECK(generate(*model, load_image_ref(rec.image_ref, ""), rec.question, 16) == "tumor");
}
