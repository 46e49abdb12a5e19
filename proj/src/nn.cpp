#include "pathvlm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace pathvlm {

static Mat random_init(int r, int c, Rng& rng, double std) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, std);
    return m;
}

Linear make_linear(ParamGroup& g, const std::string& name, int d_in, int d_out, Rng& rng, double init_std) {
    if (init_std < 0.0) init_std = 1.0 / std::sqrt(static_cast<double>(d_in));
    Linear l;
    l.W = g.add(name + ".W", random_init(d_in, d_out, rng, init_std));
    l.b = g.add(name + ".b", Mat::Zero(1, d_out));
    return l;
}

LayerNorm make_layer_norm(ParamGroup& g, const std::string& name, int dim) {
    LayerNorm ln;
    ln.gain = g.add(name + ".gain", Mat::Ones(1, dim));
    ln.bias = g.add(name + ".bias", Mat::Zero(1, dim));
    return ln;
}

Attention make_attention(ParamGroup& g, const std::string& name, int dim, int heads, Rng& rng) {
    if (dim % heads != 0) throw std::invalid_argument("attention: dim must divide heads");
    Attention a;
    a.heads = heads;
    a.wq = make_linear(g, name + ".wq", dim, dim, rng);
    a.wk = make_linear(g, name + ".wk", dim, dim, rng);
    a.wv = make_linear(g, name + ".wv", dim, dim, rng);
    a.wo = make_linear(g, name + ".wo", dim, dim, rng);
    return a;
}

TensorPtr Attention::forward(const TensorPtr& xq, const TensorPtr& xkv, const Mat* mask) const {
    const int dim = wq.d_out();
    const int dh = dim / heads;
    TensorPtr q = wq.forward(xq);
    TensorPtr k = wk.forward(xkv);
    TensorPtr v = wv.forward(xkv);
    std::vector<TensorPtr> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        TensorPtr qh = slice_cols(q, h * dh, dh);
        TensorPtr kh = slice_cols(k, h * dh, dh);
        TensorPtr vh = slice_cols(v, h * dh, dh);
        TensorPtr scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (mask) scores = add_const(scores, *mask);
        outs.push_back(matmul(softmax_rows(scores), vh));
    }
    return wo.forward(heads == 1 ? outs[0] : concat_cols(outs));
}

TransformerBlock make_block(ParamGroup& g, const std::string& name, int dim, int heads, int mlp_mult,
                            Rng& rng) {
    TransformerBlock b;
    b.attn = make_attention(g, name + ".attn", dim, heads, rng);
    b.ln1 = make_layer_norm(g, name + ".ln1", dim);
    b.ln2 = make_layer_norm(g, name + ".ln2", dim);
    b.fc1 = make_linear(g, name + ".fc1", dim, dim * mlp_mult, rng);
    b.fc2 = make_linear(g, name + ".fc2", dim * mlp_mult, dim, rng);
    return b;
}

TensorPtr TransformerBlock::forward(const TensorPtr& x, const Mat* mask) const {
    TensorPtr n1 = ln1.forward(x);
    TensorPtr h = add(x, attn.forward(n1, n1, mask));
    return add(h, fc2.forward(gelu(fc1.forward(ln2.forward(h)))));
}

Mat causal_mask(int t) {
    Mat m = Mat::Zero(t, t);
    for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) m(i, j) = -1e30;
    return m;
}

}  // namespace pathvlm
