// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "texthawk/rng.hpp"
#include "texthawk/tape.hpp"

using namespace texthawk;

namespace {

// Scalar probe loss: weighted sum of the op output against fixed weights.
// Compares every coordinate of the tape gradient with the central-difference
// oracle; relative tolerance with a small floor for near-zero entries.
void grad_vs_fd(const char* name, const std::function<Var(Tape&, Var)>& op, Tensor x,
                float eps = 1e-3f, double tol = 1e-3) {
    CAPTURE(name);
    Tensor weights;  // drawn once the output shape is known
    auto loss_value_and_grad = [&](Tensor& slot, Tensor* out_grad) {
        Tape tape;
        Var y = op(tape, tape.param(&slot));
        if (weights.data.empty()) {
            Rng wr(1234);
            weights = wr.normal(tape.val(y).shape, 0.0f, 1.0f);
        }
        Var loss = tape.weighted_sum(y, weights);
        if (out_grad) {
            tape.backward(loss);
            *out_grad = tape.grad_of(&slot);
        }
        return tape.val(loss).at(0);
    };
    Tensor analytic;
    loss_value_and_grad(x, &analytic);
    Tensor fd = finite_diff_grad(
        [&](const Tensor& probe) {
            Tensor tmp = probe;
            return loss_value_and_grad(tmp, nullptr);
        },
        x, eps);
    REQUIRE(analytic.shape == x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        double a = analytic.data[i], f = fd.data[i];
        double denom = std::max(std::abs(a), std::abs(f));
        CAPTURE(i);
        CHECK(std::abs(a - f) <= tol * denom + 2e-4);
    }
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(3);
    Tensor x = rng.normal({4, 4}, 0.0f, 1.0f);
    Tensor other = rng.normal({4, 4}, 0.0f, 1.0f);
    Tensor positive = rng.uniform({4, 4}, 0.5f, 2.0f);
    Tensor inner = rng.uniform({4, 4}, -0.8f, 0.8f);
    Tensor away_from_zero = rng.uniform({4, 4}, 0.3f, 1.5f);

    grad_vs_fd("add", [&](Tape& t, Var v) { return t.add(v, t.constant(other)); }, x);
    grad_vs_fd("sub", [&](Tape& t, Var v) { return t.sub(t.constant(other), v); }, x);
    grad_vs_fd("mul", [&](Tape& t, Var v) { return t.mul(v, t.constant(other)); }, x);
    grad_vs_fd("div", [&](Tape& t, Var v) { return t.div(t.constant(other), v); }, positive);
    grad_vs_fd("scale", [&](Tape& t, Var v) { return t.scale(v, -1.7f); }, x);
    grad_vs_fd("gelu", [&](Tape& t, Var v) { return t.gelu(v); }, x);
    grad_vs_fd("sigmoid", [&](Tape& t, Var v) { return t.sigmoid(v); }, x);
    grad_vs_fd("abs", [&](Tape& t, Var v) { return t.abs(v); }, away_from_zero);
    grad_vs_fd("relu", [&](Tape& t, Var v) { return t.relu(v); }, away_from_zero);
    grad_vs_fd("sin", [&](Tape& t, Var v) { return t.sin(v); }, x);
    grad_vs_fd("acos", [&](Tape& t, Var v) { return t.acos(v); }, inner);
    grad_vs_fd("sqrt", [&](Tape& t, Var v) { return t.sqrt(v); }, positive);
}

TEST_CASE("matmul and reduction gradients match finite differences") {
    Rng rng(5);
    Tensor a = rng.normal({3, 4}, 0.0f, 1.0f);
    Tensor b = rng.normal({4, 5}, 0.0f, 1.0f);
    Tensor vec = rng.normal({8}, 0.0f, 1.0f);
    Tensor w8 = rng.normal({8}, 0.0f, 1.0f);

    grad_vs_fd("matmul.lhs", [&](Tape& t, Var v) { return t.matmul(v, t.constant(b)); }, a);
    grad_vs_fd("matmul.rhs", [&](Tape& t, Var v) { return t.matmul(t.constant(a), v); }, b);
    grad_vs_fd("matmul_nt",
               [&](Tape& t, Var v) { return t.matmul_nt(v, t.constant(transpose(b))); }, a);
    grad_vs_fd("sum", [&](Tape& t, Var v) { return t.sum(v); }, a);
    grad_vs_fd("mean", [&](Tape& t, Var v) { return t.mean(v); }, a);
    grad_vs_fd("dot", [&](Tape& t, Var v) { return t.dot(v, t.constant(w8)); }, vec);
    grad_vs_fd("norm2", [&](Tape& t, Var v) { return t.norm2(v); }, vec);
}

TEST_CASE("structural op gradients match finite differences") {
    Rng rng(9);
    Tensor a = rng.normal({4, 6}, 0.0f, 1.0f);
    grad_vs_fd("slice_rows", [&](Tape& t, Var v) { return t.slice_rows(v, 1, 2); }, a);
    grad_vs_fd("slice_cols", [&](Tape& t, Var v) { return t.slice_cols(v, 2, 3); }, a);
    grad_vs_fd("reshape", [&](Tape& t, Var v) { return t.reshape(v, {6, 4}); }, a);
    grad_vs_fd("concat_rows",
               [&](Tape& t, Var v) { return t.concat_rows({v, t.constant(a)}); }, a);
    grad_vs_fd("concat_cols",
               [&](Tape& t, Var v) { return t.concat_cols({v, t.constant(a)}); }, a);
    grad_vs_fd("gather_rows", [&](Tape& t, Var v) { return t.gather_rows(v, {2, 0, 2}); }, a);
    grad_vs_fd("gather_elems",
               [&](Tape& t, Var v) { return t.gather_elems(v, {0, 1, 3}, {5, 2, 0}); }, a);
    grad_vs_fd("maxpool2x2", [&](Tape& t, Var v) { return t.maxpool2x2(v, 2, 2); }, a);
}

TEST_CASE("row-softmax and layer-norm gradients match finite differences") {
    Rng rng(17);
    Tensor a = rng.normal({4, 6}, 0.0f, 1.0f);
    Tensor gain = rng.uniform({6}, 0.5f, 1.5f);
    Tensor bias = rng.normal({6}, 0.0f, 0.2f);
    grad_vs_fd("softmax_rows", [&](Tape& t, Var v) { return t.softmax_rows(v); }, a);
    grad_vs_fd("log_softmax_rows", [&](Tape& t, Var v) { return t.log_softmax_rows(v); }, a);
    grad_vs_fd("layer_norm.x",
               [&](Tape& t, Var v) {
                   return t.layer_norm(v, t.constant(gain), t.constant(bias));
               },
               a);
    grad_vs_fd("layer_norm.gain",
               [&](Tape& t, Var v) { return t.layer_norm(t.constant(a), v, t.constant(bias)); },
               gain);
    grad_vs_fd("layer_norm.bias",
               [&](Tape& t, Var v) { return t.layer_norm(t.constant(a), t.constant(gain), v); },
               bias);
}

TEST_CASE("softmax oracles") {
    Tape tape;
    Var s = tape.softmax_rows(tape.constant(Tensor::matrix({{0, 0, 0}})));
    Tensor v = tape.val(s);
    for (int64_t j = 0; j < 3; ++j) CHECK(v.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    Rng rng(21);
    Tensor rows = rng.normal({5, 7}, 0.0f, 2.0f);
    Tensor shifted = rows;
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 7; ++j) shifted.at(i, j) += 3.25f;  // constant per row
    Tape t2;
    Tensor sm = t2.val(t2.softmax_rows(t2.constant(rows)));
    Tensor sm_shift = t2.val(t2.softmax_rows(t2.constant(shifted)));
    for (int64_t i = 0; i < 5; ++i) {
        double row_sum = 0.0;
        for (int64_t j = 0; j < 7; ++j) {
            row_sum += sm.at(i, j);
            CHECK(std::abs(sm.at(i, j) - sm_shift.at(i, j)) <= 1e-6);
        }
        CHECK(std::abs(row_sum - 1.0) <= 1e-6);
    }
}

TEST_CASE("pointwise nonlinearity oracles") {
    Tape tape;
    CHECK(tape.val(tape.sigmoid(tape.constant(Tensor::scalar(0.0f)))).at(0) == 0.5f);

    // gelu against Gaussian-CDF quadrature: x * Phi(x) with Phi from Simpson
    // integration of the standard normal density on [-12, x]
    auto phi_quadrature = [](double x) {
        const int steps = 20000;
        const double lo = -12.0;
        double h = (x - lo) / steps;
        auto pdf = [](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * 3.14159265358979323846); };
        double acc = pdf(lo) + pdf(x);
        for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0 : 2.0) * pdf(lo + i * h);
        return acc * h / 3.0;
    };
    for (float x : {-2.0f, -1.0f, 0.0f, 1.0f, 2.0f}) {
        double want = static_cast<double>(x) * phi_quadrature(x);
        double got = tape.val(tape.gelu(tape.constant(Tensor::scalar(x)))).at(0);
        CHECK(std::abs(got - want) <= 1e-6);
    }
}

TEST_CASE("layer-norm row statistics") {
    Rng rng(33);
    Tensor a = rng.normal({6, 16}, 1.5f, 2.0f);
    Tape tape;
    Tensor unit_gain = Tensor::full({16}, 1.0f);
    Tensor zero_bias = Tensor::zeros({16});
    Tensor y = tape.val(
        tape.layer_norm(tape.constant(a), tape.constant(unit_gain), tape.constant(zero_bias)));
    for (int64_t i = 0; i < 6; ++i) {
        double mean = 0.0, var = 0.0;
        for (int64_t j = 0; j < 16; ++j) mean += y.at(i, j);
        mean /= 16.0;
        for (int64_t j = 0; j < 16; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
        var /= 16.0;
        CHECK(std::abs(mean) <= 1e-6);
        CHECK(std::abs(var - 1.0) <= 1e-5);
    }
}

TEST_CASE("finite-difference oracle on sum of squares") {
    Tensor x = Tensor::row({1.0f, 2.0f});
    Tensor g = finite_diff_grad(
        [](const Tensor& p) {
            float acc = 0.0f;
            for (float v : p.data) acc += v * v;
            return acc;
        },
        x, 1e-2f);  // central differences are exact on quadratics, so the
                    // step only needs to lift the delta above f32 noise
    CHECK(std::abs(g.at(0) - 2.0) <= 1e-4);
    CHECK(std::abs(g.at(1) - 4.0) <= 1e-4);
}

TEST_CASE("repeated tape evaluation is bit identical") {
    Rng rng(101);
    Tensor a = rng.normal({5, 5}, 0.0f, 1.0f);
    Tensor b = rng.normal({5, 5}, 0.0f, 1.0f);
    auto run = [&] {
        Tape t;
        Var y = t.gelu(t.matmul(t.constant(a), t.constant(b)));
        Var loss = t.sum(t.softmax_rows(y));
        return t.val(loss).at(0);
    };
    CHECK(run() == run());
}

TEST_CASE("tape rejects non-finite results") {
    Tape tape;
    Var one = tape.constant(Tensor::full({2}, 1.0f));
    Var zero = tape.constant(Tensor::zeros({2}));
    CHECK_THROWS(tape.div(one, zero));  // inf
}

TEST_CASE("param re-lease returns the same node") {
    Tensor p = Tensor::row({1.0f, 2.0f, 3.0f});
    Tape tape;
    Var a = tape.param(&p);
    Var b = tape.param(&p);
    CHECK(a.id == b.id);
    Var loss = tape.sum(tape.mul(a, b));  // p.p -> grad 2p
    tape.backward(loss);
    Tensor g = tape.grad_of(&p);
    for (int64_t i = 0; i < 3; ++i) CHECK(g.at(i) == doctest::Approx(2.0 * p.at(i)).epsilon(1e-6));
}
