#include <cmath>
#include <cstring>

#include <doctest.h>

#include "pathvlm/common.hpp"
#include "pathvlm/connector.hpp"
#include "testutil.hpp"

using namespace pathvlm;

static ConnectorConfig desk_cfg(int tile = 64) {
    ConnectorConfig c;
    c.tile_size = tile;
    c.max_tiles = 6;
    c.query_count = 8;
    c.d_llm = 48;
    c.seed = 5;
    return c;
}

static PlipConfig tiny_plip() {
    PlipConfig c;
    c.patch_size = 16;
    c.enc_dim = 32;
    c.enc_layers = 1;
    c.enc_heads = 2;
    c.d_proj = 16;
    c.seed = 9;
    return c;
}

// independent exhaustive re-implementation of the grid rule: among the
// aspect-cost minimizers, the largest grid whose capacity the image more
// than half fills; the smallest grid if none qualify; then smaller r
static std::pair<int, int> oracle_grid(int h, int w, int max_tiles, int tile) {
    const double target = std::log(static_cast<double>(w) / h);
    double best_cost = 1e300;
    for (int r = 1; r <= max_tiles; ++r)
        for (int c = 1; c * r <= max_tiles; ++c)
            best_cost = std::min(best_cost, std::abs(std::log(static_cast<double>(c) / r) - target));
    std::vector<std::pair<int, int>> tied;
    for (int r = 1; r <= max_tiles; ++r)
        for (int c = 1; c * r <= max_tiles; ++c)
            if (std::abs(std::log(static_cast<double>(c) / r) - target) <= best_cost + 1e-12)
                tied.emplace_back(r, c);
    const double image_area = static_cast<double>(h) * w;
    std::pair<int, int> best = {0, 0};
    long best_area = -1;
    auto consider = [&](std::pair<int, int> g) {
        const long area = static_cast<long>(g.first) * g.second;
        if (best_area < 0) {
            best = g;
            best_area = area;
            return;
        }
        if (area > best_area && image_area > 0.5 * tile * tile * area) {
            best = g;
            best_area = area;
        } else if (area < best_area && image_area <= 0.5 * tile * tile * best_area) {
            best = g;
            best_area = area;
        } else if (area == best_area && g.first < best.first) {
            best = g;
        }
    };
    for (auto g : tied) consider(g);
    return best;
}

TEST_CASE("plan_tiles: exact fits and the 2000px derived case") {
    ConnectorConfig cfg = desk_cfg(224);
    TilePlan p = plan_tiles(224, 224, cfg);
    CHECK(p.grid_rows == 1);
    CHECK(p.grid_cols == 1);
    CHECK(p.resized_h == 224);
    CHECK(p.resized_w == 224);

    p = plan_tiles(224, 448, cfg);
    CHECK(p.grid_rows == 1);
    CHECK(p.grid_cols == 2);
    CHECK(p.resized_h == 224);
    CHECK(p.resized_w == 448);

    p = plan_tiles(2000, 2000, cfg);
    CHECK(p.grid_rows == 2);
    CHECK(p.grid_cols == 2);
    CHECK(p.resized_h == 448);
    CHECK(p.resized_w == 448);
}

TEST_CASE("plan_tiles matches the exhaustive oracle on random sizes") {
    ConnectorConfig cfg = desk_cfg();
    Rng rng(31);
    for (int t = 0; t < 500; ++t) {
        const int h = 1 + static_cast<int>(rng.uniform_int(2400));
        const int w = 1 + static_cast<int>(rng.uniform_int(2400));
        const auto [r, c] = oracle_grid(h, w, cfg.max_tiles, cfg.tile_size);
        const TilePlan p = plan_tiles(h, w, cfg);
        INFO("h=", h, " w=", w);
        CHECK(p.grid_rows == r);
        CHECK(p.grid_cols == c);
        CHECK(p.grid_rows * p.grid_cols <= cfg.max_tiles);
    }
}

TEST_CASE("tile_image: counts, thumbnail last, bit-exact partition") {
    ConnectorConfig cfg = desk_cfg(224);
    CHECK(tile_image(synth_image(224, 224, 1), cfg).size() == 2);
    CHECK(tile_image(synth_image(224, 448, 2), cfg).size() == 3);
    CHECK(tile_image(synth_image(2000, 2000, 3), cfg).size() == 5);

    // reassembling grid tiles reproduces the resized image bitwise
    cfg = desk_cfg(32);
    const ImageArray img = synth_image(100, 260, 4);
    const TilePlan plan = plan_tiles(100, 260, cfg);
    const ImageArray resized = resize_bilinear(img, plan.resized_h, plan.resized_w);
    const auto tiles = tile_image(img, cfg);
    REQUIRE(static_cast<int>(tiles.size()) == plan.grid_rows * plan.grid_cols + 1);
    ImageArray rebuilt(plan.resized_h, plan.resized_w);
    for (int r = 0; r < plan.grid_rows; ++r)
        for (int c = 0; c < plan.grid_cols; ++c) {
            const ImageArray& tile = tiles[static_cast<size_t>(r * plan.grid_cols + c)];
            for (int y = 0; y < plan.tile_size; ++y)
                for (int x = 0; x < plan.tile_size; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        rebuilt.at(r * plan.tile_size + y, c * plan.tile_size + x, ch) = tile.at(y, x, ch);
        }
    CHECK(std::memcmp(rebuilt.data.data(), resized.data.data(), resized.data.size() * 8) == 0);

    // thumbnail is the whole image resized to one tile
    const ImageArray thumb = resize_bilinear(img, cfg.tile_size, cfg.tile_size);
    CHECK(std::memcmp(tiles.back().data.data(), thumb.data.data(), thumb.data.size() * 8) == 0);
}

TEST_CASE("resample: fixed output shape for any pool size, determinism") {
    ParamRegistry reg;
    Connector conn = make_connector(reg, desk_cfg(), 32, 16);
    for (int m : {1, 5, 196, 300}) {
        auto out = conn.resample(constant(testutil::seeded_matrix(m, 32, 40 + m)));
        CHECK(out->rows() == 8);
        CHECK(out->cols() == 48);
    }
    auto pool = constant(testutil::seeded_matrix(20, 32, 41));
    const Mat a = conn.resample(pool)->v;
    const Mat b = conn.resample(pool)->v;
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    CHECK_THROWS_AS(conn.resample(constant(Mat::Zero(4, 7))), std::invalid_argument);
}

TEST_CASE("resample is invariant to uniform duplication of pool rows") {
    ParamRegistry reg;
    Connector conn = make_connector(reg, desk_cfg(), 32, 16);
    const Mat pool = testutil::seeded_matrix(17, 32, 50);
    Mat doubled(34, 32);
    doubled << pool, pool;
    const Mat once = conn.resample(constant(pool))->v;
    const Mat twice = conn.resample(constant(doubled))->v;
    CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("connect: output shape is K x d_llm for every image size") {
    PlipModel plip(tiny_plip());
    ParamRegistry reg;
    Connector conn = make_connector(reg, desk_cfg(), 32, 16);
    for (auto [h, w] : std::vector<std::pair<int, int>>{{224, 224}, {448, 224}, {672, 448}, {1000, 750}}) {
        auto out = conn.connect(synth_image(h, w, 60), plip.image_tower, true);
        CHECK(out->rows() == 8);
        CHECK(out->cols() == 48);
    }
}

TEST_CASE("connect: frozen encoder receives no gradient, connector does") {
    PlipModel plip(tiny_plip());
    ParamRegistry reg;
    Connector conn = make_connector(reg, desk_cfg(), 32, 16);
    plip.params.get("vision_encoder")->set_trainable(false);

    auto out = conn.connect(synth_image(70, 90, 61), plip.image_tower, /*encoder_frozen=*/true);
    backward(testutil::contract(out));

    for (const auto& [pname, t] : plip.params.get("vision_encoder")->params) CHECK(t->g.size() == 0);
    bool connector_has_grad = false;
    for (const auto& [pname, t] : reg.get("connector")->params)
        if (t->g.size() > 0 && t->g.cwiseAbs().maxCoeff() > 0) connector_has_grad = true;
    CHECK(connector_has_grad);
}

TEST_CASE("connect equals the step-by-step composition oracle") {
    PlipModel plip(tiny_plip());
    ParamRegistry reg;
    Connector conn = make_connector(reg, desk_cfg(), 32, 16);
    const ImageArray img = synth_image(150, 260, 62);

    const Mat composed = conn.connect(img, plip.image_tower, true)->v;

    const TilePlan plan = plan_tiles(img.height, img.width, conn.cfg);
    std::vector<TensorPtr> tokens;
    for (const auto& tile : tile_image(img, conn.cfg))
        tokens.push_back(detach(plip.image_tower.encode(tile).first));
    const Mat manual = conn.resample(conn.build_pool(tokens, plan))->v;

    CHECK(std::memcmp(composed.data(), manual.data(), sizeof(double) * manual.size()) == 0);
}

TEST_CASE("connector config validation") {
    ParamRegistry reg;
    ConnectorConfig bad = desk_cfg(60);  // not a multiple of patch 16
    CHECK_THROWS_AS(make_connector(reg, bad, 32, 16), ConfigError);
    ConnectorConfig zero = desk_cfg();
    zero.max_tiles = 0;
    CHECK_THROWS_AS(make_connector(reg, zero, 32, 16), std::invalid_argument);
}
