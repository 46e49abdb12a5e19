#pragma once

#include <cstdint>
#include <vector>

#include "pathvlm/image.hpp"
#include "pathvlm/nn.hpp"
#include "pathvlm/plip.hpp"

namespace pathvlm {

struct ConnectorConfig {
    int tile_size = 224;
    int max_tiles = 6;
    int query_count = 32;  // K
    int d_llm = 256;
    uint64_t seed = 0;

    void validate() const;
};

struct TilePlan {
    int grid_rows = 1;
    int grid_cols = 1;
    int tile_size = 0;
    int resized_h = 0;
    int resized_w = 0;
    bool includes_thumbnail = true;

    int tile_count() const { return grid_rows * grid_cols + (includes_thumbnail ? 1 : 0); }
};

// Picks the grid (r, c) with r*c <= max_tiles minimizing the aspect-fit cost
// |log(c/r) - log(w/h)|. Cost ties go to the larger grid only when the image
// fills more than half the grid's pixel capacity (so small images stay on
// small grids), then to smaller r.
TilePlan plan_tiles(int h, int w, const ConnectorConfig& cfg);

// Bilinear resize to the planned grid, row-major tile split, plus a global
// thumbnail (whole image resized to tile_size x tile_size) appended last.
std::vector<ImageArray> tile_image(const ImageArray& image, const ConnectorConfig& cfg);

// Learned-query cross-attention resampler: K queries attend over the token
// pool, then project to d_llm. Output is K x d_llm for every pool size.
struct Connector {
    ConnectorConfig cfg;
    int enc_dim = 0;
    ParamRegistry* params = nullptr;  // owning model registry; group "connector"
    TensorPtr queries;                // K x enc_dim
    Linear wk, wv;
    Linear out_proj;                  // enc_dim -> d_llm
    TensorPtr row_emb, col_emb, thumb_emb;  // tile-position tables

    // pool M x enc_dim -> K x d_llm
    TensorPtr resample(const TensorPtr& pool) const;

    // per-tile token blocks, each prefixed with its tile-position embedding
    TensorPtr build_pool(const std::vector<TensorPtr>& tile_tokens, const TilePlan& plan) const;

    // tile -> encode -> pool -> resample. When encoder_frozen, encoder
    // activations are detached so no gradient path reaches the tower.
    TensorPtr connect(const ImageArray& image, const PlipImageTower& encoder, bool encoder_frozen) const;
};

Connector make_connector(ParamRegistry& params, const ConnectorConfig& cfg, int enc_dim, int patch_size);

}  // namespace pathvlm
