#include "pathvlm/connector.hpp"

#include <cmath>
#include <stdexcept>

#include "pathvlm/common.hpp"

namespace pathvlm {

void ConnectorConfig::validate() const {
    if (tile_size < 1) throw std::invalid_argument("connector config: tile_size must be >= 1");
    if (max_tiles < 1) throw std::invalid_argument("connector config: max_tiles must be >= 1");
    if (query_count < 1) throw std::invalid_argument("connector config: query_count must be >= 1");
    if (d_llm < 1) throw std::invalid_argument("connector config: d_llm must be >= 1");
}

TilePlan plan_tiles(int h, int w, const ConnectorConfig& cfg) {
    cfg.validate();
    if (h < 1 || w < 1) throw std::invalid_argument("plan_tiles: dims must be >= 1");
    const double target = std::log(static_cast<double>(w) / h);
    const double image_area = static_cast<double>(h) * w;
    const double tile_area = static_cast<double>(cfg.tile_size) * cfg.tile_size;
    int best_r = 1, best_c = 1;
    double best_cost = std::abs(std::log(1.0) - target);
    for (int r = 1; r <= cfg.max_tiles; ++r) {
        for (int c = 1; r * c <= cfg.max_tiles; ++c) {
            const double cost = std::abs(std::log(static_cast<double>(c) / r) - target);
            bool better = false;
            if (cost < best_cost - 1e-12) {
                better = true;
            } else if (std::abs(cost - best_cost) <= 1e-12) {
                // cost tie: take the larger grid only when the image carries
                // enough native pixels to fill more than half its capacity,
                // so small images are not upscaled into many tiles
                if (r * c > best_r * best_c)
                    better = image_area > 0.5 * tile_area * r * c;
                else if (r * c < best_r * best_c)
                    better = image_area <= 0.5 * tile_area * best_r * best_c;
                else
                    better = r < best_r;
            }
            if (better) {
                best_r = r;
                best_c = c;
                best_cost = cost;
            }
        }
    }
    TilePlan plan;
    plan.grid_rows = best_r;
    plan.grid_cols = best_c;
    plan.tile_size = cfg.tile_size;
    plan.resized_h = best_r * cfg.tile_size;
    plan.resized_w = best_c * cfg.tile_size;
    plan.includes_thumbnail = true;
    return plan;
}

std::vector<ImageArray> tile_image(const ImageArray& image, const ConnectorConfig& cfg) {
    image.validate();
    const TilePlan plan = plan_tiles(image.height, image.width, cfg);
    const ImageArray resized = resize_bilinear(image, plan.resized_h, plan.resized_w);
    std::vector<ImageArray> tiles;
    tiles.reserve(static_cast<size_t>(plan.tile_count()));
    const int t = plan.tile_size;
    for (int r = 0; r < plan.grid_rows; ++r)
        for (int c = 0; c < plan.grid_cols; ++c) {
            ImageArray tile(t, t);
            for (int y = 0; y < t; ++y)
                for (int x = 0; x < t; ++x)
                    for (int ch = 0; ch < 3; ++ch) tile.at(y, x, ch) = resized.at(r * t + y, c * t + x, ch);
            tiles.push_back(std::move(tile));
        }
    tiles.push_back(resize_bilinear(image, t, t));  // global thumbnail last
    return tiles;
}

TensorPtr Connector::resample(const TensorPtr& pool) const {
    if (pool->rows() < 1) throw std::invalid_argument("resample: empty pool");
    if (pool->cols() != enc_dim) throw std::invalid_argument("resample: pool dim mismatch");
    TensorPtr keys = wk.forward(pool);
    TensorPtr vals = wv.forward(pool);
    TensorPtr scores = scale(matmul_nt(queries, keys), 1.0 / std::sqrt(static_cast<double>(enc_dim)));
    TensorPtr fused = matmul(softmax_rows(scores), vals);
    return out_proj.forward(fused);
}

TensorPtr Connector::build_pool(const std::vector<TensorPtr>& tile_tokens, const TilePlan& plan) const {
    if (tile_tokens.empty()) throw std::invalid_argument("build_pool: no tiles");
    const int expected = plan.tile_count();
    if (static_cast<int>(tile_tokens.size()) != expected)
        throw std::invalid_argument("build_pool: tile count does not match plan");
    std::vector<TensorPtr> parts;
    parts.reserve(tile_tokens.size() * 2);
    for (size_t i = 0; i < tile_tokens.size(); ++i) {
        const bool is_thumb = (static_cast<int>(i) == plan.grid_rows * plan.grid_cols);
        const int r = is_thumb ? 0 : static_cast<int>(i) / plan.grid_cols;
        const int c = is_thumb ? 0 : static_cast<int>(i) % plan.grid_cols;
        TensorPtr prefix = add(add(slice_rows(row_emb, r, 1), slice_rows(col_emb, c, 1)),
                               slice_rows(thumb_emb, is_thumb ? 1 : 0, 1));
        parts.push_back(prefix);
        parts.push_back(tile_tokens[i]);
    }
    return concat_rows(parts);
}

TensorPtr Connector::connect(const ImageArray& image, const PlipImageTower& encoder,
                             bool encoder_frozen) const {
    const TilePlan plan = plan_tiles(image.height, image.width, cfg);
    const std::vector<ImageArray> tiles = tile_image(image, cfg);
    std::vector<TensorPtr> tile_tokens;
    tile_tokens.reserve(tiles.size());
    for (const auto& tile : tiles) {
        auto [tokens, pooled] = encoder.encode(tile);
        tile_tokens.push_back(encoder_frozen ? detach(tokens) : tokens);
    }
    return resample(build_pool(tile_tokens, plan));
}

Connector make_connector(ParamRegistry& params, const ConnectorConfig& cfg, int enc_dim, int patch_size) {
    cfg.validate();
    if (patch_size >= 1 && cfg.tile_size % patch_size != 0)
        throw ConfigError("connector: tile_size must be a multiple of the encoder patch size");
    Connector conn;
    conn.cfg = cfg;
    conn.enc_dim = enc_dim;
    conn.params = &params;
    Rng rng(derive_seed(cfg.seed, "connector"));
    auto g = params.group("connector");
    Mat q(cfg.query_count, enc_dim);
    for (int i = 0; i < q.rows(); ++i)
        for (int j = 0; j < q.cols(); ++j) q(i, j) = rng.normal(0.0, 0.02);
    conn.queries = g->add("queries", std::move(q));
    conn.wk = make_linear(*g, "wk", enc_dim, enc_dim, rng);
    conn.wv = make_linear(*g, "wv", enc_dim, enc_dim, rng);
    conn.out_proj = make_linear(*g, "out_proj", enc_dim, cfg.d_llm, rng);
    auto table = [&](int n) {
        Mat m(n, enc_dim);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, 0.02);
        return m;
    };
    conn.row_emb = g->add("row_emb", table(cfg.max_tiles));
    conn.col_emb = g->add("col_emb", table(cfg.max_tiles));
    conn.thumb_emb = g->add("thumb_emb", table(2));
    return conn;
}

}  // namespace pathvlm
