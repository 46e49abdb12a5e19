#include <cmath>
#include <cstring>
#include <thread>

#include <doctest.h>

#include "pathvlm/checkpoint.hpp"
#include "pathvlm/fixtures.hpp"
#include "pathvlm/plip.hpp"
#include "testutil.hpp"

using namespace pathvlm;
using testutil::seeded_matrix;
using testutil::unit_rows;

static PlipConfig tiny_cfg(uint64_t seed = 3) {
    PlipConfig c;
    c.patch_size = 16;
    c.enc_dim = 32;
    c.enc_layers = 1;
    c.enc_heads = 2;
    c.d_proj = 16;
    c.max_text_len = 100;
    c.seed = seed;
    return c;
}

// ---- frozen oracle fixtures (computed with an independent float64
// brute-force implementation before the build) ----

static Mat itc_img_fixture() {
    Mat m(3, 8);
    m << 0.9, -0.1, 0.3, 0.0, 0.2, -0.4, 0.1, 0.5,
        -0.2, 0.7, 0.1, 0.6, -0.3, 0.2, 0.0, -0.1,
        0.1, 0.2, -0.5, 0.3, 0.8, -0.1, 0.4, 0.2;
    return unit_rows(m);
}

static Mat itc_txt_fixture() {
    Mat m(3, 8);
    m << -0.3, 0.5, 0.2, 0.4, 0.1, -0.2, 0.6, 0.1,
        0.4, -0.6, 0.3, 0.1, 0.2, 0.5, -0.1, 0.2,
        0.2, 0.1, -0.4, 0.2, 0.7, 0.0, 0.5, 0.1;
    return unit_rows(m);
}

TEST_CASE("encode_image: grid arithmetic, padding, unit norm, determinism") {
    PlipModel model(tiny_cfg());
    const ImageArray big = synth_image(224, 224, 1);
    auto [tokens, pooled] = model.image_tower.encode(big);
    CHECK(tokens->rows() == 196);  // 14x14 grid
    CHECK(tokens->cols() == 32);
    CHECK(std::abs(pooled->v.row(0).norm() - 1.0) < 1e-6);

    const ImageArray odd = synth_image(17, 17, 2);
    auto [tokens2, pooled2] = model.image_tower.encode(odd);
    CHECK(tokens2->rows() == 4);  // padded to 32x32

    auto [tokens3, pooled3] = model.image_tower.encode(odd);
    CHECK(std::memcmp(pooled2->v.data(), pooled3->v.data(), sizeof(double) * 16) == 0);

    CHECK_THROWS_AS(model.image_tower.encode(synth_image(8, 20, 3)), std::invalid_argument);
}

TEST_CASE("encode_text: boundaries and determinism") {
    PlipModel model(tiny_cfg());
    std::vector<int> ids(100, 7);
    auto [tokens, pooled] = model.text_tower.encode(ids);
    CHECK(tokens->rows() == 100);
    CHECK(std::abs(pooled->v.row(0).norm() - 1.0) < 1e-6);

    std::vector<int> too_long(101, 7);
    CHECK_THROWS_AS(model.text_tower.encode(too_long), std::invalid_argument);
    CHECK_THROWS_AS(model.text_tower.encode({}), std::invalid_argument);
    CHECK_THROWS_AS(model.text_tower.encode({512}), std::invalid_argument);

    auto [t2, p2] = model.text_tower.encode(ids);
    CHECK(std::memcmp(pooled->v.data(), p2->v.data(), sizeof(double) * 16) == 0);
}

TEST_CASE("itc_loss: degenerate and uniform batches") {
    Mat one = unit_rows(seeded_matrix(1, 8, 5));
    CHECK(itc_loss(one, one, 0.07) == doctest::Approx(0.0).epsilon(1e-12));

    for (int n : {2, 4, 8}) {
        Mat same(n, 8);
        const Mat row = unit_rows(seeded_matrix(1, 8, 6));
        for (int i = 0; i < n; ++i) same.row(i) = row.row(0);
        CHECK(std::abs(itc_loss(same, same, 0.07) - std::log(static_cast<double>(n))) < 1e-12);
    }
}

TEST_CASE("itc_loss: frozen brute-force oracle values") {
    const Mat img = itc_img_fixture();
    const Mat txt = itc_txt_fixture();
    CHECK(std::abs(itc_loss(img, txt, 1.0) - 1.2038938415002187) < 1e-12);
    CHECK(std::abs(itc_loss(img, txt, 0.07) - 6.740603534113513) < 1e-12);
}

TEST_CASE("itc_loss: input validation") {
    const Mat img = itc_img_fixture();
    Mat txt = itc_txt_fixture();
    CHECK_THROWS_AS(itc_loss(img, txt.topRows(2), 1.0), std::invalid_argument);
    txt.row(1) *= 1.01;  // break unit norm beyond 1e-4
    CHECK_THROWS_AS(itc_loss(img, txt, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(itc_loss(img, itc_txt_fixture(), 0.0), std::invalid_argument);
}

TEST_CASE("itc_loss: permutation equivariance") {
    Mat img = unit_rows(seeded_matrix(5, 8, 7));
    Mat txt = unit_rows(seeded_matrix(5, 8, 8));
    const double base = itc_loss(img, txt, 0.3);
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    Mat img_p(5, 8), txt_p(5, 8);
    for (int i = 0; i < 5; ++i) {
        img_p.row(i) = img.row(perm[i]);
        txt_p.row(i) = txt.row(perm[i]);
    }
    CHECK(std::abs(itc_loss(img_p, txt_p, 0.3) - base) < 1e-10);
}

TEST_CASE("itc_loss is non-negative on random unit batches") {
    Rng rng(88);
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + static_cast<int>(rng.uniform_int(6));
        const Mat img = unit_rows(seeded_matrix(n, 8, 500 + t));
        const Mat txt = unit_rows(seeded_matrix(n, 8, 600 + t));
        CHECK(itc_loss(img, txt, 0.2) >= 0.0);
    }
}

TEST_CASE("itc_loss and generation are safe to call concurrently") {
    const Mat img = itc_img_fixture();
    const Mat txt = itc_txt_fixture();
    const double expected = itc_loss(img, txt, 0.3);
    std::vector<std::thread> threads;
    std::vector<double> results(4, 0.0);
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] { results[static_cast<size_t>(t)] = itc_loss(img, txt, 0.3); });
    for (auto& th : threads) th.join();
    for (double r : results) CHECK(r == expected);
}

TEST_CASE("itc_loss: tends to ln N as temperature grows") {
    const Mat img = unit_rows(seeded_matrix(4, 8, 9));
    const Mat txt = unit_rows(seeded_matrix(4, 8, 10));
    const double lnn = std::log(4.0);
    const double d3 = std::abs(itc_loss(img, txt, 1e3) - lnn);
    const double d6 = std::abs(itc_loss(img, txt, 1e6) - lnn);
    CHECK(d6 < d3);
    CHECK(d6 < 1e-5);
}

TEST_CASE("itc gradients match finite differences on a seeded 3x8 batch") {
    auto img = make_param(itc_img_fixture());
    auto txt = make_param(itc_txt_fixture());
    auto tau = make_param(Mat::Constant(1, 1, 0.4));
    testutil::check_grad(img, [&] { return infonce_pair_loss(img, txt, tau); });
    testutil::check_grad(txt, [&] { return infonce_pair_loss(img, txt, tau); });
    testutil::check_grad(tau, [&] { return infonce_pair_loss(img, txt, tau); });
}

TEST_CASE("sample_hard_negatives: contracts and Monte-Carlo frequencies") {
    Mat sim2 = Mat::Zero(2, 2);
    Rng rng(1);
    auto [nt2, ni2] = sample_hard_negatives(sim2, rng);
    CHECK(nt2 == std::vector<int>{1, 0});
    CHECK(ni2 == std::vector<int>{1, 0});

    Mat sim1 = Mat::Zero(1, 1);
    CHECK_THROWS_AS(sample_hard_negatives(sim1, rng), std::invalid_argument);

    // row 0: similarity 100 for column 1, 0 for column 2 -> column 1 ~ always
    Mat sim(3, 3);
    sim << 0, 100, 0, 0, 0, 1, 1, 0, 0;
    Rng mc(42);
    int hits = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        auto [nt, ni] = sample_hard_negatives(sim, mc);
        if (nt[0] == 1) ++hits;
    }
    CHECK(std::abs(hits / static_cast<double>(trials) - 1.0) < 0.01);

    Rng s1(7), s2(7);
    auto a = sample_hard_negatives(sim, s1);
    auto b = sample_hard_negatives(sim, s2);
    CHECK(a == b);
}

TEST_CASE("itm_loss: analytic values and frozen oracle") {
    std::vector<double> zeros(12, 0.0);
    std::vector<int> labels = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(std::abs(itm_loss(zeros, labels) - std::log(2.0)) < 1e-12);

    std::vector<double> saturated;
    for (int lbl : labels) saturated.push_back(lbl == 1 ? 20.0 : -20.0);
    CHECK(itm_loss(saturated, labels) < 1e-8);

    const std::vector<double> logits = {1.7, -0.3, 2.2, 0.4, -1.1, 0.8, -2.0, 0.6, -0.9, 1.3, -0.2, -1.6};
    CHECK(std::abs(itm_loss(logits, labels) - 0.5772744781208766) < 1e-12);

    CHECK_THROWS_AS(itm_loss({1.0, 2.0}, {1, 0}), std::invalid_argument);
    std::vector<int> bad = labels;
    bad[3] = 2;
    CHECK_THROWS_AS(itm_loss(logits, bad), std::invalid_argument);
}

TEST_CASE("train_plip: desk-scale descent and validation") {
    PlipConfig cfg = tiny_cfg(77);
    cfg.enc_dim = 64;
    cfg.d_proj = 32;
    PlipModel model(cfg);

    const auto manifest = make_pair_corpus(32, 123, 32);
    ScheduleSpec sched;
    sched.kind = ScheduleSpec::Kind::warmup_interval_decay;
    sched.init_lr = 1e-4;
    sched.peak_lr = 7e-4;
    sched.floor_lr = 3e-4;
    sched.warmup_steps = 20;
    sched.total_steps = 200;
    sched.interval_steps = 50;
    PlipTrainOptions opts;
    opts.steps = 200;
    opts.batch = 32;  // full batch keeps the descent smooth
    const PlipTrainResult res = train_plip(model, manifest, sched, opts);

    // ITC below the uniform-similarity bound once trained
    CHECK(res.itc_losses.back() < std::log(32.0));

    // moving average (window 10) strictly decreases across the first 50 steps
    auto ma = [&](int t) {
        double s = 0.0;
        for (int k = t - 9; k <= t; ++k) s += res.losses[static_cast<size_t>(k)];
        return s / 10.0;
    };
    for (int t = 10; t < 50; ++t) CHECK(ma(t + 1) < ma(t));

    CHECK_THROWS_AS(train_plip(model, {}, sched, opts), std::invalid_argument);
    PlipTrainOptions one;
    one.steps = 1;
    one.batch = 1;
    const auto single = make_pair_corpus(1, 5, 32);
    CHECK_THROWS_AS(train_plip(model, single, sched, one), ConfigError);
}

TEST_CASE("train_plip: identical seed + config + data give identical checkpoints") {
    PlipConfig cfg = tiny_cfg(55);
    const auto manifest = make_pair_corpus(8, 9, 32);
    ScheduleSpec sched;
    sched.kind = ScheduleSpec::Kind::warmup_cosine;
    sched.init_lr = 1e-4;
    sched.peak_lr = 5e-4;
    sched.floor_lr = 0.0;
    sched.warmup_steps = 5;
    sched.total_steps = 30;
    PlipTrainOptions opts;
    opts.steps = 30;
    opts.batch = 4;

    PlipModel a(cfg), b(cfg);
    train_plip(a, manifest, sched, opts);
    train_plip(b, manifest, sched, opts);
    for (const auto& [gname, group] : a.params.groups)
        CHECK(checkpoint::group_hash(*group) == checkpoint::group_hash(*b.params.get(gname)));
}

TEST_CASE("learnable temperature stays in its clamp range during training") {
    PlipConfig cfg = tiny_cfg(66);
    PlipModel model(cfg);
    model.tau->v(0, 0) = 1e9;
    model.clamp_tau();
    CHECK(model.tau->v(0, 0) == PlipModel::kTauMax);
    model.tau->v(0, 0) = -3.0;
    model.clamp_tau();
    CHECK(model.tau->v(0, 0) == PlipModel::kTauMin);
}
