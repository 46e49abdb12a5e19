#include "pathvlm/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace pathvlm {

TensorPtr constant(Mat value) {
    auto t = std::make_shared<Tensor>();
    t->v = std::move(value);
    return t;
}

TensorPtr make_param(Mat value) {
    auto t = constant(std::move(value));
    t->requires_grad = true;
    return t;
}

static void accum(Tensor& t, const Mat& inc) {
    if (t.is_leaf() && !t.requires_grad) return;
    t.ensure_grad();
    t.g += inc;
}

static TensorPtr node(Mat value, std::vector<TensorPtr> parents, std::function<void(Tensor&)> backprop) {
    auto t = std::make_shared<Tensor>();
    t->v = std::move(value);
    t->parents = std::move(parents);
    t->backprop = std::move(backprop);
    return t;
}

void backward(const TensorPtr& loss) {
    if (loss->rows() != 1 || loss->cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
    std::vector<Tensor*> topo;
    std::unordered_set<Tensor*> seen;
    struct Frame {
        TensorPtr t;
        size_t next = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({loss, 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next < top.t->parents.size()) {
            TensorPtr p = top.t->parents[top.next++];
            if (seen.insert(p.get()).second) stack.push_back({p, 0});
        } else {
            topo.push_back(top.t.get());
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->g(0, 0) += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Tensor* n = *it;
        if (n->backprop && n->g.size() > 0) n->backprop(*n);
    }
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->rows()) throw std::invalid_argument("matmul: inner dims mismatch");
    return node(a->v * b->v, {a, b}, [a, b](Tensor& c) {
        accum(*a, c.g * b->v.transpose());
        accum(*b, a->v.transpose() * c.g);
    });
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols() != b->cols()) throw std::invalid_argument("matmul_nt: inner dims mismatch");
    return node(a->v * b->v.transpose(), {a, b}, [a, b](Tensor& c) {
        accum(*a, c.g * b->v);
        accum(*b, c.g.transpose() * a->v);
    });
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->rows() != b->rows() || a->cols() != b->cols()) throw std::invalid_argument("add: shape mismatch");
    return node(a->v + b->v, {a, b}, [a, b](Tensor& c) {
        accum(*a, c.g);
        accum(*b, c.g);
    });
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& row) {
    if (row->rows() != 1 || row->cols() != a->cols()) throw std::invalid_argument("add_rowvec: row must be 1xC");
    Mat out = a->v;
    out.rowwise() += row->v.row(0);
    return node(std::move(out), {a, row}, [a, row](Tensor& c) {
        accum(*a, c.g);
        accum(*row, c.g.colwise().sum());
    });
}

TensorPtr add_const(const TensorPtr& a, const Mat& m) {
    if (m.rows() != a->v.rows() || m.cols() != a->v.cols()) throw std::invalid_argument("add_const: shape mismatch");
    return node(a->v + m, {a}, [a](Tensor& c) { accum(*a, c.g); });
}

TensorPtr scale(const TensorPtr& a, double s) {
    return node(a->v * s, {a}, [a, s](Tensor& c) { accum(*a, c.g * s); });
}

TensorPtr div_by_scalar(const TensorPtr& a, const TensorPtr& s) {
    if (s->rows() != 1 || s->cols() != 1) throw std::invalid_argument("div_by_scalar: s must be 1x1");
    const double sv = s->v(0, 0);
    return node(a->v / sv, {a, s}, [a, s, sv](Tensor& c) {
        accum(*a, c.g / sv);
        Mat ds(1, 1);
        ds(0, 0) = -(c.g.cwiseProduct(a->v)).sum() / (sv * sv);
        accum(*s, ds);
    });
}

TensorPtr gelu(const TensorPtr& a) {
    static const double k = std::sqrt(2.0 / M_PI);
    Mat t = ((a->v.array() + 0.044715 * a->v.array().cube()) * k).tanh();
    Mat out = 0.5 * a->v.array() * (1.0 + t.array());
    return node(std::move(out), {a}, [a, t](Tensor& c) {
        Eigen::ArrayXXd x = a->v.array();
        Eigen::ArrayXXd dt = (1.0 - t.array().square()) * k * (1.0 + 3.0 * 0.044715 * x.square());
        Mat d = (0.5 * (1.0 + t.array()) + 0.5 * x * dt).matrix();
        accum(*a, c.g.cwiseProduct(d));
    });
}

TensorPtr softmax_rows(const TensorPtr& a) {
    Mat y(a->v.rows(), a->v.cols());
    for (int i = 0; i < a->v.rows(); ++i) {
        const double m = a->v.row(i).maxCoeff();
        Eigen::ArrayXd e = (a->v.row(i).array() - m).exp();
        y.row(i) = (e / e.sum()).matrix();
    }
    return node(std::move(y), {a}, [a](Tensor& c) {
        Mat d(c.v.rows(), c.v.cols());
        for (int i = 0; i < c.v.rows(); ++i) {
            const double dot = c.g.row(i).dot(c.v.row(i));
            d.row(i) = (c.v.row(i).array() * (c.g.row(i).array() - dot)).matrix();
        }
        accum(*a, d);
    });
}

TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias, double eps) {
    const int C = a->cols();
    if (gain->rows() != 1 || gain->cols() != C || bias->rows() != 1 || bias->cols() != C)
        throw std::invalid_argument("layer_norm: gain/bias must be 1xC");
    Mat xhat(a->v.rows(), C);
    Eigen::ArrayXd sigma(a->v.rows());
    for (int i = 0; i < a->v.rows(); ++i) {
        const double mu = a->v.row(i).mean();
        const double var = (a->v.row(i).array() - mu).square().mean();
        sigma(i) = std::sqrt(var + eps);
        xhat.row(i) = ((a->v.row(i).array() - mu) / sigma(i)).matrix();
    }
    Mat out = (xhat.array().rowwise() * gain->v.row(0).array()).rowwise() + bias->v.row(0).array();
    return node(std::move(out), {a, gain, bias}, [a, gain, bias, xhat, sigma](Tensor& c) {
        const int C = static_cast<int>(c.v.cols());
        Mat da(c.v.rows(), C);
        for (int i = 0; i < c.v.rows(); ++i) {
            Eigen::ArrayXd dxh = c.g.row(i).array() * gain->v.row(0).array();
            const double m1 = dxh.mean();
            const double m2 = (dxh * xhat.row(i).transpose().array()).mean();
            da.row(i) = ((dxh - m1 - xhat.row(i).transpose().array() * m2) / sigma(i)).matrix().transpose();
        }
        accum(*a, da);
        accum(*gain, (c.g.array() * xhat.array()).colwise().sum().matrix());
        accum(*bias, c.g.colwise().sum());
    });
}

TensorPtr l2_normalize_rows(const TensorPtr& a) {
    Mat y(a->v.rows(), a->v.cols());
    Eigen::ArrayXd norms(a->v.rows());
    for (int i = 0; i < a->v.rows(); ++i) {
        norms(i) = std::max(a->v.row(i).norm(), 1e-12);
        y.row(i) = a->v.row(i) / norms(i);
    }
    return node(std::move(y), {a}, [a, norms](Tensor& c) {
        Mat d(c.v.rows(), c.v.cols());
        for (int i = 0; i < c.v.rows(); ++i) {
            const double dot = c.g.row(i).dot(c.v.row(i));
            d.row(i) = (c.g.row(i) - dot * c.v.row(i)) / norms(i);
        }
        accum(*a, d);
    });
}

TensorPtr mean_rows(const TensorPtr& a) {
    const double r = static_cast<double>(a->v.rows());
    return node(a->v.colwise().mean(), {a}, [a, r](Tensor& c) {
        accum(*a, (c.g / r).replicate(a->v.rows(), 1));
    });
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int C = parts[0]->cols();
    int R = 0;
    for (const auto& p : parts) {
        if (p->cols() != C) throw std::invalid_argument("concat_rows: col mismatch");
        R += p->rows();
    }
    Mat out(R, C);
    int r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p->rows()) = p->v;
        r += p->rows();
    }
    std::vector<TensorPtr> parents(parts.begin(), parts.end());
    return node(std::move(out), parents, [parts](Tensor& c) {
        int r = 0;
        for (const auto& p : parts) {
            accum(*p, c.g.middleRows(r, p->rows()));
            r += p->rows();
        }
    });
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int R = parts[0]->rows();
    int C = 0;
    for (const auto& p : parts) {
        if (p->rows() != R) throw std::invalid_argument("concat_cols: row mismatch");
        C += p->cols();
    }
    Mat out(R, C);
    int c0 = 0;
    for (const auto& p : parts) {
        out.middleCols(c0, p->cols()) = p->v;
        c0 += p->cols();
    }
    std::vector<TensorPtr> parents(parts.begin(), parts.end());
    return node(std::move(out), parents, [parts](Tensor& c) {
        int c0 = 0;
        for (const auto& p : parts) {
            accum(*p, c.g.middleCols(c0, p->cols()));
            c0 += p->cols();
        }
    });
}

TensorPtr slice_rows(const TensorPtr& a, int r0, int n) {
    if (r0 < 0 || n < 1 || r0 + n > a->rows()) throw std::invalid_argument("slice_rows: out of range");
    return node(a->v.middleRows(r0, n), {a}, [a, r0, n](Tensor& c) {
        Mat d = Mat::Zero(a->v.rows(), a->v.cols());
        d.middleRows(r0, n) = c.g;
        accum(*a, d);
    });
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int n) {
    if (c0 < 0 || n < 1 || c0 + n > a->cols()) throw std::invalid_argument("slice_cols: out of range");
    return node(a->v.middleCols(c0, n), {a}, [a, c0, n](Tensor& c) {
        Mat d = Mat::Zero(a->v.rows(), a->v.cols());
        d.middleCols(c0, n) = c.g;
        accum(*a, d);
    });
}

TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("gather_rows: empty ids");
    Mat out(static_cast<int>(ids.size()), table->cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table->rows()) throw std::invalid_argument("gather_rows: id out of range");
        out.row(static_cast<int>(i)) = table->v.row(ids[i]);
    }
    return node(std::move(out), {table}, [table, ids](Tensor& c) {
        Mat d = Mat::Zero(table->v.rows(), table->v.cols());
        for (size_t i = 0; i < ids.size(); ++i) d.row(ids[i]) += c.g.row(static_cast<int>(i));
        accum(*table, d);
    });
}

TensorPtr detach(const TensorPtr& a) { return constant(a->v); }

TensorPtr masked_cross_entropy(const TensorPtr& logits, const std::vector<int>& targets,
                               const std::vector<int>& mask) {
    const int T = logits->rows();
    const int V = logits->cols();
    if (static_cast<int>(targets.size()) != T || static_cast<int>(mask.size()) != T)
        throw std::invalid_argument("masked_cross_entropy: targets/mask length must equal rows");
    int m = 0;
    for (int i = 0; i < T; ++i) {
        if (mask[i] != 0 && mask[i] != 1) throw std::invalid_argument("masked_cross_entropy: mask must be 0/1");
        if (mask[i]) {
            if (targets[i] < 0 || targets[i] >= V)
                throw std::invalid_argument("masked_cross_entropy: target out of vocab");
            ++m;
        }
    }
    if (m == 0) throw std::invalid_argument("masked_cross_entropy: all-zero mask");
    Mat probs = Mat::Zero(T, V);  // softmax rows, only for masked positions
    double total = 0.0;
    for (int i = 0; i < T; ++i) {
        if (!mask[i]) continue;
        const double mx = logits->v.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits->v.row(i).array() - mx).exp();
        const double Z = e.sum();
        probs.row(i) = (e / Z).matrix();
        total += mx + std::log(Z) - logits->v(i, targets[i]);
    }
    Mat out(1, 1);
    out(0, 0) = total / m;
    return node(std::move(out), {logits}, [logits, targets, mask, probs, m](Tensor& c) {
        const double gl = c.g(0, 0) / m;
        Mat d = probs * gl;
        for (int i = 0; i < static_cast<int>(targets.size()); ++i)
            if (mask[i]) d(i, targets[i]) -= gl;
        accum(*logits, d);
    });
}

TensorPtr bce_with_logits(const TensorPtr& logits, const std::vector<int>& labels) {
    const int T = logits->rows();
    if (logits->cols() != 1) throw std::invalid_argument("bce_with_logits: logits must be Tx1");
    if (static_cast<int>(labels.size()) != T) throw std::invalid_argument("bce_with_logits: labels length mismatch");
    double total = 0.0;
    for (int i = 0; i < T; ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("bce_with_logits: labels must be 0/1");
        const double x = logits->v(i, 0);
        if (!std::isfinite(x)) throw std::invalid_argument("bce_with_logits: non-finite logit");
        total += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Mat out(1, 1);
    out(0, 0) = total / T;
    return node(std::move(out), {logits}, [logits, labels, T](Tensor& c) {
        const double gl = c.g(0, 0) / T;
        Mat d(T, 1);
        for (int i = 0; i < T; ++i) {
            const double x = logits->v(i, 0);
            const double sig = 1.0 / (1.0 + std::exp(-x));
            d(i, 0) = gl * (sig - labels[i]);
        }
        accum(*logits, d);
    });
}

TensorPtr infonce_pair_loss(const TensorPtr& img, const TensorPtr& txt, const TensorPtr& tau) {
    const int N = img->rows();
    if (txt->rows() != N) throw std::invalid_argument("infonce: batch size mismatch");
    if (img->cols() != txt->cols()) throw std::invalid_argument("infonce: dim mismatch");
    if (N < 1) throw std::invalid_argument("infonce: empty batch");
    if (tau->rows() != 1 || tau->cols() != 1) throw std::invalid_argument("infonce: tau must be 1x1");
    const double tv = tau->v(0, 0);
    if (!(tv > 0.0)) throw std::invalid_argument("infonce: tau must be > 0");
    for (int i = 0; i < N; ++i) {
        if (std::abs(img->v.row(i).norm() - 1.0) > 1e-4 || std::abs(txt->v.row(i).norm() - 1.0) > 1e-4)
            throw std::invalid_argument("infonce: rows must be unit norm");
    }
    Mat S = (img->v * txt->v.transpose()) / tv;
    Mat p_row(N, N), p_col(N, N);
    double lr = 0.0, lc = 0.0;
    for (int i = 0; i < N; ++i) {
        const double mx = S.row(i).maxCoeff();
        Eigen::ArrayXd e = (S.row(i).array() - mx).exp();
        const double Z = e.sum();
        p_row.row(i) = (e / Z).matrix();
        lr += mx + std::log(Z) - S(i, i);
    }
    for (int j = 0; j < N; ++j) {
        const double mx = S.col(j).maxCoeff();
        Eigen::ArrayXd e = (S.col(j).array() - mx).exp();
        const double Z = e.sum();
        p_col.col(j) = (e / Z).matrix();
        lc += mx + std::log(Z) - S(j, j);
    }
    Mat out(1, 1);
    out(0, 0) = 0.5 * (lr / N + lc / N);
    return node(std::move(out), {img, txt, tau}, [img, txt, tau, S, p_row, p_col, N, tv](Tensor& c) {
        const double gl = c.g(0, 0);
        Mat gs = p_row + p_col;
        gs.diagonal().array() -= 2.0;
        gs *= gl / (2.0 * N);
        accum(*img, (gs / tv) * txt->v);
        accum(*txt, (gs / tv).transpose() * img->v);
        Mat dtau(1, 1);
        dtau(0, 0) = -(gs.cwiseProduct(S)).sum() / tv;
        accum(*tau, dtau);
    });
}

}  // namespace pathvlm
