#include <cstring>

#include <doctest.h>

#include "pathvlm/tensor.hpp"
#include "testutil.hpp"

using namespace pathvlm;
using testutil::check_grad;
using testutil::contract;
using testutil::seeded_matrix;

TEST_CASE("matmul forward and gradient") {
    auto a = make_param(seeded_matrix(3, 4, 1));
    auto b = make_param(seeded_matrix(4, 2, 2));
    auto c = matmul(a, b);
    CHECK(c->rows() == 3);
    CHECK(c->cols() == 2);
    CHECK(c->v.isApprox(a->v * b->v));
    check_grad(a, [&] { return contract(matmul(a, b)); });
    check_grad(b, [&] { return contract(matmul(a, b)); });
    CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("matmul_nt gradient") {
    auto a = make_param(seeded_matrix(3, 5, 3));
    auto b = make_param(seeded_matrix(4, 5, 4));
    CHECK(matmul_nt(a, b)->v.isApprox(a->v * b->v.transpose()));
    check_grad(a, [&] { return contract(matmul_nt(a, b)); });
    check_grad(b, [&] { return contract(matmul_nt(a, b)); });
}

TEST_CASE("add and add_rowvec gradients") {
    auto a = make_param(seeded_matrix(3, 4, 5));
    auto b = make_param(seeded_matrix(3, 4, 6));
    auto row = make_param(seeded_matrix(1, 4, 7));
    check_grad(a, [&] { return contract(add(a, b)); });
    check_grad(row, [&] { return contract(add_rowvec(a, row)); });
    CHECK_THROWS_AS(add(a, row), std::invalid_argument);
}

TEST_CASE("gelu gradient") {
    auto a = make_param(seeded_matrix(4, 3, 8));
    check_grad(a, [&] { return contract(gelu(a)); });
}

TEST_CASE("softmax_rows forward and gradient") {
    auto a = make_param(seeded_matrix(3, 6, 9));
    auto y = softmax_rows(a);
    for (int i = 0; i < 3; ++i) CHECK(y->v.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    check_grad(a, [&] { return contract(softmax_rows(a)); });
}

TEST_CASE("layer_norm gradient") {
    auto a = make_param(seeded_matrix(3, 8, 10));
    auto gain = make_param(Mat::Ones(1, 8) + 0.1 * seeded_matrix(1, 8, 11));
    auto bias = make_param(0.1 * seeded_matrix(1, 8, 12));
    check_grad(a, [&] { return contract(layer_norm(a, gain, bias)); });
    check_grad(gain, [&] { return contract(layer_norm(a, gain, bias)); });
    check_grad(bias, [&] { return contract(layer_norm(a, gain, bias)); });
}

TEST_CASE("l2_normalize_rows unit norm and gradient") {
    auto a = make_param(seeded_matrix(3, 5, 13));
    auto y = l2_normalize_rows(a);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(y->v.row(i).norm() - 1.0) < 1e-12);
    check_grad(a, [&] { return contract(l2_normalize_rows(a)); });
}

TEST_CASE("mean_rows, slices and concats") {
    auto a = make_param(seeded_matrix(4, 6, 14));
    CHECK(mean_rows(a)->rows() == 1);
    check_grad(a, [&] { return contract(mean_rows(a)); });
    check_grad(a, [&] { return contract(slice_rows(a, 1, 2)); });
    check_grad(a, [&] { return contract(slice_cols(a, 2, 3)); });
    auto b = make_param(seeded_matrix(2, 6, 15));
    check_grad(a, [&] { return contract(concat_rows({a, b})); });
    check_grad(b, [&] { return contract(concat_cols({slice_cols(b, 0, 2), slice_cols(b, 2, 4)})); });
    CHECK_THROWS_AS(slice_rows(a, 3, 5), std::invalid_argument);
}

TEST_CASE("gather_rows gradient scatters") {
    auto table = make_param(seeded_matrix(7, 4, 16));
    std::vector<int> ids = {2, 2, 5, 0};
    auto g = gather_rows(table, ids);
    CHECK(g->rows() == 4);
    CHECK(g->v.row(0) == table->v.row(2));
    check_grad(table, [&] { return contract(gather_rows(table, ids)); });
    CHECK_THROWS_AS(gather_rows(table, {7}), std::invalid_argument);
}

TEST_CASE("div_by_scalar gradient (both sides)") {
    auto a = make_param(seeded_matrix(3, 3, 17));
    auto s = make_param(Mat::Constant(1, 1, 0.37));
    check_grad(a, [&] { return contract(div_by_scalar(a, s)); });
    check_grad(s, [&] { return contract(div_by_scalar(a, s)); });
}

TEST_CASE("masked_cross_entropy validation and gradient") {
    auto logits = make_param(seeded_matrix(5, 7, 18));
    std::vector<int> targets = {1, 4, 0, 6, 2};
    std::vector<int> mask = {1, 0, 1, 1, 0};
    check_grad(logits, [&] { return masked_cross_entropy(logits, targets, mask); });
    CHECK_THROWS_AS(masked_cross_entropy(logits, targets, {0, 0, 0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(masked_cross_entropy(logits, {1, 4, 0, 6, 9}, {1, 1, 1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(masked_cross_entropy(logits, targets, {1, 0, 2, 0, 0}), std::invalid_argument);
}

TEST_CASE("bce_with_logits gradient") {
    auto logits = make_param(seeded_matrix(6, 1, 19));
    std::vector<int> labels = {1, 0, 1, 1, 0, 0};
    check_grad(logits, [&] { return bce_with_logits(logits, labels); });
    CHECK_THROWS_AS(bce_with_logits(logits, {1, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(bce_with_logits(logits, {1, 0, 2, 0, 0, 1}), std::invalid_argument);
}

TEST_CASE("backward requires 1x1 loss; leaves accumulate only when requested") {
    auto a = make_param(seeded_matrix(2, 2, 20));
    auto frozen = constant(seeded_matrix(2, 2, 21));  // leaf without requires_grad
    auto out = matmul(a, frozen);
    CHECK_THROWS_AS(backward(out), std::invalid_argument);
    auto loss = contract(matmul(a, frozen));
    backward(loss);
    CHECK(a->g.size() > 0);
    CHECK(frozen->g.size() == 0);  // gradient absent, not zero
}

TEST_CASE("gradients accumulate across backward calls") {
    auto a = make_param(seeded_matrix(2, 3, 22));
    backward(contract(scale(a, 2.0)));
    Mat g1 = a->g;
    backward(contract(scale(a, 2.0)));
    CHECK(a->g.isApprox(2.0 * g1));
}

TEST_CASE("identical graphs give bitwise identical values") {
    auto build = [] {
        auto a = constant(seeded_matrix(4, 4, 23));
        auto b = constant(seeded_matrix(4, 4, 24));
        return softmax_rows(matmul(gelu(a), b))->v;
    };
    Mat x = build(), y = build();
    CHECK(std::memcmp(x.data(), y.data(), sizeof(double) * 16) == 0);
}
