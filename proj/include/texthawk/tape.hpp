// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "texthawk/tensor.hpp"

namespace texthawk {

// Handle into a Tape's node list. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Internal node storage for the tape. Leased f32 parameters are widened to
// double on entry and results are rounded once on read-out: every Tensor the
// rest of the system stores or serializes stays f32, while intermediate
// values and gradients keep enough precision that the central-difference
// gradient oracle sits far above rounding noise.
struct DTensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    static DTensor zeros(std::vector<int64_t> shape);
    static DTensor full(std::vector<int64_t> shape, double v);
    static DTensor scalar(double v);
    static DTensor widen(const Tensor& t);
    Tensor round() const;

    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t numel() const;
    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
};

// Small reverse-mode tape. A fresh tape is built per forward pass;
// parameters live outside the tape and are leased in with param(), so their
// gradients can be read back after backward() via grad_of().
//
// Every op checks its output for NaN/Inf and keeps the documented sequential
// summation order, so repeated runs are bit-identical.
class Tape {
public:
    Var constant(Tensor value);
    Var param(Tensor* slot);  // re-leasing the same slot returns the same Var

    Tensor val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value.round(); }
    // valid after backward(); empty if the slot never entered this tape
    Tensor grad_of(const Tensor* slot) const;
    Tensor grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad.round(); }
    const DTensor& dval(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
    const DTensor& dgrad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

    // elementwise; b may also be a scalar {1}, and for add/sub a row vector
    // broadcast across the rows of a 2-D a
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, float c);

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a x b^T

    Var slice_rows(Var a, int64_t r0, int64_t n);
    Var slice_cols(Var a, int64_t c0, int64_t n);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var reshape(Var a, std::vector<int64_t> shape);
    Var gather_rows(Var a, std::vector<int64_t> idx);
    // picks a[rows[i], cols[i]] into a vector {n}
    Var gather_elems(Var a, std::vector<int64_t> rows, std::vector<int64_t> cols);

    Var softmax_rows(Var a);
    Var log_softmax_rows(Var a);
    Var layer_norm(Var a, Var gain, Var bias, float eps = 1e-5f);
    Var gelu(Var a);  // exact Gaussian CDF form: 0.5*x*(1+erf(x/sqrt(2)))
    Var relu(Var a);
    Var sigmoid(Var a);
    Var abs(Var a);
    Var sin(Var a);
    Var acos(Var a);
    Var sqrt(Var a);

    Var sum(Var a);
    Var mean(Var a);
    Var weighted_sum(Var a, Tensor weights);  // weights constant, same shape
    Var dot(Var a, Var b);                    // 1-D
    Var norm2(Var a);                         // l2 norm, 1-D

    // a is [rows*cols, d] row-major over a rows x cols grid; 2x2 stride-2 max
    // pool over the grid, output [(rows/2)*(cols/2), d]
    Var maxpool2x2(Var a, int64_t rows, int64_t cols);

    void backward(Var loss);

private:
    struct Node {
        DTensor value;
        DTensor grad;
        bool needs_grad = false;
        Tensor* slot = nullptr;
        std::function<void(Tape&, int)> back;
    };

    Var make(DTensor value, bool needs_grad, std::function<void(Tape&, int)> back);
    bool needs(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }
    void accumulate(int id, const DTensor& delta);
    DTensor& g(int id) { return nodes_[static_cast<size_t>(id)].grad; }
    const DTensor& v(int id) const { return nodes_[static_cast<size_t>(id)].value; }

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> slots_;
};

// Central finite differences, (f(x+eps e_i) - f(x-eps e_i)) / (2 eps) per
// coordinate, quotient computed in double. Used as the gradient oracle.
Tensor finite_diff_grad(const std::function<float(const Tensor&)>& f, const Tensor& x, float eps);

}  // namespace texthawk
