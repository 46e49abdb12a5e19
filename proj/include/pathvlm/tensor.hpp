#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pathvlm {

using Mat = Eigen::MatrixXd;

// Reverse-mode autograd over dense float64 matrices. Nodes are built eagerly;
// backward() walks the graph in reverse topological order. Leaves accumulate
// gradients only when requires_grad is set, which is how freeze plans cut
// parameter groups out of training without touching the forward path.
struct Tensor {
    Mat v;
    Mat g;  // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Tensor>> parents;
    std::function<void(Tensor&)> backprop;  // pushes this->g into parents' g

    int rows() const { return static_cast<int>(v.rows()); }
    int cols() const { return static_cast<int>(v.cols()); }
    bool is_leaf() const { return parents.empty(); }
    void ensure_grad() {
        if (g.rows() != v.rows() || g.cols() != v.cols()) g = Mat::Zero(v.rows(), v.cols());
    }
    void zero_grad() { g.resize(0, 0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr constant(Mat value);
TensorPtr make_param(Mat value);  // leaf with requires_grad = true

// Runs reverse-mode accumulation from a 1x1 loss node.
void backward(const TensorPtr& loss);

// ---- ops ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);     // a.v * b.v
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);  // a.v * b.v^T
TensorPtr add(const TensorPtr& a, const TensorPtr& b);        // same shape
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& row);  // row is 1xC
TensorPtr add_const(const TensorPtr& a, const Mat& m);        // no grad path into m
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr div_by_scalar(const TensorPtr& a, const TensorPtr& s);  // s is 1x1, grads to both
TensorPtr gelu(const TensorPtr& a);   // tanh approximation
TensorPtr softmax_rows(const TensorPtr& a);
TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias, double eps = 1e-5);
TensorPtr l2_normalize_rows(const TensorPtr& a);
TensorPtr mean_rows(const TensorPtr& a);  // 1xC column means
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& a, int r0, int n);
TensorPtr slice_cols(const TensorPtr& a, int c0, int n);
TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids);
TensorPtr detach(const TensorPtr& a);  // constant copy, cuts the graph

// mean cross-entropy over rows with mask[i] == 1; logits TxV
TensorPtr masked_cross_entropy(const TensorPtr& logits, const std::vector<int>& targets,
                               const std::vector<int>& mask);

// mean binary cross-entropy with logits; logits Tx1
TensorPtr bce_with_logits(const TensorPtr& logits, const std::vector<int>& labels);

// symmetric InfoNCE over unit-norm rows; tau is a 1x1 tensor (learnable)
TensorPtr infonce_pair_loss(const TensorPtr& img, const TensorPtr& txt, const TensorPtr& tau);

}  // namespace pathvlm
