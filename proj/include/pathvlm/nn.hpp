#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pathvlm/rng.hpp"
#include "pathvlm/tensor.hpp"

namespace pathvlm {

// Named, freezable parameter collection. One group maps to one checkpoint
// blob; freeze plans toggle requires_grad per group.
struct ParamGroup {
    std::string name;
    std::vector<std::pair<std::string, TensorPtr>> params;  // insertion order

    TensorPtr add(const std::string& pname, Mat init) {
        auto t = make_param(std::move(init));
        params.emplace_back(pname, t);
        return t;
    }
    TensorPtr find(const std::string& pname) const {
        for (const auto& [n, t] : params)
            if (n == pname) return t;
        return nullptr;
    }
    void set_trainable(bool trainable) {
        for (auto& [n, t] : params) t->requires_grad = trainable;
    }
};

struct ParamRegistry {
    std::map<std::string, std::shared_ptr<ParamGroup>> groups;  // sorted by name

    std::shared_ptr<ParamGroup> group(const std::string& name) {
        auto it = groups.find(name);
        if (it != groups.end()) return it->second;
        auto g = std::make_shared<ParamGroup>();
        g->name = name;
        groups[name] = g;
        return g;
    }
    std::shared_ptr<ParamGroup> get(const std::string& name) const {
        auto it = groups.find(name);
        return it == groups.end() ? nullptr : it->second;
    }
};

// Low-rank adapter pair; B starts at zero so the adapter is an exact no-op
// until trained. Effective delta is (alpha/r) * B * A.
struct LoraAdapter {
    TensorPtr A;  // r x d_in
    TensorPtr B;  // d_out x r
    int rank = 0;
    double alpha = 0.0;
    std::string target;  // layer name the adapter wraps
};

// y = x*W + b, W stored d_in x d_out. When a LoRA adapter is attached the
// delta (alpha/r) * x * A^T * B^T is added on top of the frozen base.
struct Linear {
    TensorPtr W;
    TensorPtr b;
    std::shared_ptr<LoraAdapter> lora;

    TensorPtr forward(const TensorPtr& x) const {
        TensorPtr out = add_rowvec(matmul(x, W), b);
        if (lora) {
            TensorPtr delta = matmul_nt(matmul_nt(x, lora->A), lora->B);
            out = add(out, scale(delta, lora->alpha / lora->rank));
        }
        return out;
    }
    int d_in() const { return W->rows(); }
    int d_out() const { return W->cols(); }
};

struct LayerNorm {
    TensorPtr gain;
    TensorPtr bias;
    TensorPtr forward(const TensorPtr& x) const { return layer_norm(x, gain, bias); }
};

// init_std < 0 picks 1/sqrt(d_in), which keeps activations O(1) through
// frozen random layers
Linear make_linear(ParamGroup& g, const std::string& name, int d_in, int d_out, Rng& rng,
                   double init_std = -1.0);
LayerNorm make_layer_norm(ParamGroup& g, const std::string& name, int dim);

// Multi-head attention; queries from xq, keys/values from xkv. Causal or
// arbitrary additive masks are passed as a constant matrix (TQ x TK).
struct Attention {
    Linear wq, wk, wv, wo;
    int heads = 1;

    TensorPtr forward(const TensorPtr& xq, const TensorPtr& xkv, const Mat* mask = nullptr) const;
};

Attention make_attention(ParamGroup& g, const std::string& name, int dim, int heads, Rng& rng);

// Pre-LN transformer block: x += attn(ln1(x)); x += mlp(ln2(x)).
struct TransformerBlock {
    Attention attn;
    LayerNorm ln1, ln2;
    Linear fc1, fc2;

    TensorPtr forward(const TensorPtr& x, const Mat* mask = nullptr) const;
};

TransformerBlock make_block(ParamGroup& g, const std::string& name, int dim, int heads, int mlp_mult,
                            Rng& rng);

Mat causal_mask(int t);  // 0 on/below diagonal, -1e30 above

}  // namespace pathvlm
