// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace texthawk {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// sequential inner-axis summation, matching the f32 substrate's documented
// accumulation order
DTensor dmatmul(const DTensor& a, const DTensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes");
    DTensor out = DTensor::zeros({a.shape[0], b.shape[1]});
    for (int64_t i = 0; i < a.shape[0]; ++i)
        for (int64_t j = 0; j < b.shape[1]; ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < a.shape[1]; ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

DTensor dtranspose(const DTensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
    DTensor out = DTensor::zeros({a.shape[1], a.shape[0]});
    for (int64_t i = 0; i < a.shape[0]; ++i)
        for (int64_t j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

void dcheck_finite(const DTensor& t, const char* what) {
    for (double x : t.data)
        if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
}
}  // namespace

DTensor DTensor::zeros(std::vector<int64_t> shape) {
    DTensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(t.numel()), 0.0);
    return t;
}

DTensor DTensor::full(std::vector<int64_t> shape, double v) {
    DTensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

DTensor DTensor::scalar(double v) { return full({1}, v); }

DTensor DTensor::widen(const Tensor& t) {
    DTensor d;
    d.shape = t.shape;
    d.data.assign(t.data.begin(), t.data.end());
    return d;
}

Tensor DTensor::round() const {
    Tensor t;
    t.shape = shape;
    t.data.assign(data.begin(), data.end());
    return t;
}

int64_t DTensor::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

Var Tape::make(DTensor value, bool needs_grad, std::function<void(Tape&, int)> back) {
    dcheck_finite(value, "tape op output");
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
    check_finite(value, "tape constant");
    return make(DTensor::widen(value), false, nullptr);
}

Var Tape::param(Tensor* slot) {
    auto it = slots_.find(slot);
    if (it != slots_.end()) return Var{it->second};
    check_finite(*slot, "tape param");
    Var v = make(DTensor::widen(*slot), true, nullptr);
    nodes_.back().slot = slot;
    slots_[slot] = v.id;
    return v;
}

Tensor Tape::grad_of(const Tensor* slot) const {
    auto it = slots_.find(slot);
    if (it == slots_.end()) return Tensor();
    const Node& n = nodes_[static_cast<size_t>(it->second)];
    return n.grad.data.empty() ? Tensor() : n.grad.round();
}

void Tape::accumulate(int id, const DTensor& delta) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.data.empty()) n.grad = DTensor::zeros(n.value.shape);
    for (size_t i = 0; i < delta.data.size(); ++i) n.grad.data[i] += delta.data[i];
}

void Tape::backward(Var loss) {
    Node& top = nodes_[static_cast<size_t>(loss.id)];
    if (top.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!top.needs_grad) return;
    top.grad = DTensor::full(top.value.shape, 1.0);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.back && n.needs_grad && !n.grad.data.empty()) n.back(*this, id);
    }
}

// ---- binary elementwise ----

namespace {
enum class BMode { Same, Scalar, RowVec };

BMode bin_mode(const DTensor& a, const DTensor& b, const char* op, bool allow_rowvec) {
    if (a.shape == b.shape) return BMode::Same;
    if (b.numel() == 1) return BMode::Scalar;
    if (allow_rowvec && a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1])
        return BMode::RowVec;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes");
}
}  // namespace

Var Tape::add(Var a, Var b) {
    const DTensor &ta = v(a.id), &tb = v(b.id);
    BMode m = bin_mode(ta, tb, "add", true);
    DTensor out = ta;
    if (m == BMode::Same) {
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    } else if (m == BMode::Scalar) {
        for (double& x : out.data) x += tb.data[0];
    } else {
        for (int64_t i = 0; i < ta.shape[0]; ++i)
            for (int64_t j = 0; j < ta.shape[1]; ++j) out.at(i, j) += tb.at(j);
    }
    return make(std::move(out), needs(a) || needs(b), [a, b, m](Tape& t, int id) {
        const DTensor& go = t.g(id);
        t.accumulate(a.id, go);
        if (!t.needs(b)) return;
        const DTensor& tb = t.v(b.id);
        DTensor gb = DTensor::zeros(tb.shape);
        if (m == BMode::Same) {
            gb = go;
        } else if (m == BMode::Scalar) {
            double s = 0.0;
            for (double x : go.data) s += x;
            gb.data[0] = s;
        } else {
            for (int64_t i = 0; i < go.shape[0]; ++i)
                for (int64_t j = 0; j < go.shape[1]; ++j) gb.at(j) += go.at(i, j);
        }
        t.accumulate(b.id, gb);
    });
}

Var Tape::sub(Var a, Var b) {
    const DTensor &ta = v(a.id), &tb = v(b.id);
    BMode m = bin_mode(ta, tb, "sub", true);
    DTensor out = ta;
    if (m == BMode::Same) {
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    } else if (m == BMode::Scalar) {
        for (double& x : out.data) x -= tb.data[0];
    } else {
        for (int64_t i = 0; i < ta.shape[0]; ++i)
            for (int64_t j = 0; j < ta.shape[1]; ++j) out.at(i, j) -= tb.at(j);
    }
    return make(std::move(out), needs(a) || needs(b), [a, b, m](Tape& t, int id) {
        const DTensor& go = t.g(id);
        t.accumulate(a.id, go);
        if (!t.needs(b)) return;
        const DTensor& tb = t.v(b.id);
        DTensor gb = DTensor::zeros(tb.shape);
        if (m == BMode::Same) {
            for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] = -go.data[i];
        } else if (m == BMode::Scalar) {
            double s = 0.0;
            for (double x : go.data) s += x;
            gb.data[0] = -s;
        } else {
            for (int64_t i = 0; i < go.shape[0]; ++i)
                for (int64_t j = 0; j < go.shape[1]; ++j) gb.at(j) -= go.at(i, j);
        }
        t.accumulate(b.id, gb);
    });
}

Var Tape::mul(Var a, Var b) {
    const DTensor &ta = v(a.id), &tb = v(b.id);
    BMode m = bin_mode(ta, tb, "mul", false);
    DTensor out = ta;
    if (m == BMode::Same) {
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    } else {
        for (double& x : out.data) x *= tb.data[0];
    }
    return make(std::move(out), needs(a) || needs(b), [a, b, m](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor &ta = t.v(a.id), &tb = t.v(b.id);
        if (t.needs(a)) {
            DTensor ga = go;
            if (m == BMode::Same) {
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= tb.data[i];
            } else {
                for (double& x : ga.data) x *= tb.data[0];
            }
            t.accumulate(a.id, ga);
        }
        if (t.needs(b)) {
            DTensor gb = DTensor::zeros(tb.shape);
            if (m == BMode::Same) {
                for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] = go.data[i] * ta.data[i];
            } else {
                double s = 0.0;
                for (size_t i = 0; i < go.data.size(); ++i) s += go.data[i] * ta.data[i];
                gb.data[0] = s;
            }
            t.accumulate(b.id, gb);
        }
    });
}

Var Tape::div(Var a, Var b) {
    const DTensor &ta = v(a.id), &tb = v(b.id);
    BMode m = bin_mode(ta, tb, "div", false);
    DTensor out = ta;
    if (m == BMode::Same) {
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= tb.data[i];
    } else {
        for (double& x : out.data) x /= tb.data[0];
    }
    return make(std::move(out), needs(a) || needs(b), [a, b, m](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor &ta = t.v(a.id), &tb = t.v(b.id);
        if (t.needs(a)) {
            DTensor ga = go;
            if (m == BMode::Same) {
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] /= tb.data[i];
            } else {
                for (double& x : ga.data) x /= tb.data[0];
            }
            t.accumulate(a.id, ga);
        }
        if (t.needs(b)) {
            DTensor gb = DTensor::zeros(tb.shape);
            if (m == BMode::Same) {
                for (size_t i = 0; i < go.data.size(); ++i)
                    gb.data[i] = -go.data[i] * ta.data[i] / (tb.data[i] * tb.data[i]);
            } else {
                double s = 0.0;
                for (size_t i = 0; i < go.data.size(); ++i) s += go.data[i] * ta.data[i];
                gb.data[0] = -s / (tb.data[0] * tb.data[0]);
            }
            t.accumulate(b.id, gb);
        }
    });
}

Var Tape::scale(Var a, float c) {
    DTensor out = v(a.id);
    for (double& x : out.data) x *= c;
    return make(std::move(out), needs(a), [a, c](Tape& t, int id) {
        DTensor ga = t.g(id);
        for (double& x : ga.data) x *= c;
        t.accumulate(a.id, ga);
    });
}

// ---- matmul ----

Var Tape::matmul(Var a, Var b) {
    DTensor out = dmatmul(v(a.id), v(b.id));
    return make(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int id) {
        const DTensor& go = t.g(id);
        if (t.needs(a)) t.accumulate(a.id, dmatmul(go, dtranspose(t.v(b.id))));
        if (t.needs(b)) t.accumulate(b.id, dmatmul(dtranspose(t.v(a.id)), go));
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    DTensor out = dmatmul(v(a.id), dtranspose(v(b.id)));
    return make(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int id) {
        const DTensor& go = t.g(id);
        if (t.needs(a)) t.accumulate(a.id, dmatmul(go, t.v(b.id)));
        if (t.needs(b)) t.accumulate(b.id, dmatmul(dtranspose(go), t.v(a.id)));
    });
}

// ---- structural ----

Var Tape::slice_rows(Var a, int64_t r0, int64_t n) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2 || r0 < 0 || r0 + n > ta.shape[0])
        throw std::invalid_argument("slice_rows: out of range");
    DTensor out = DTensor::zeros({n, ta.shape[1]});
    std::copy(ta.data.begin() + r0 * ta.shape[1], ta.data.begin() + (r0 + n) * ta.shape[1],
              out.data.begin());
    return make(std::move(out), needs(a), [a, r0, n](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& ta = t.v(a.id);
        DTensor ga = DTensor::zeros(ta.shape);
        std::copy(go.data.begin(), go.data.end(), ga.data.begin() + r0 * ta.shape[1]);
        t.accumulate(a.id, ga);
    });
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t n) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2 || c0 < 0 || c0 + n > ta.shape[1])
        throw std::invalid_argument("slice_cols: out of range");
    DTensor out = DTensor::zeros({ta.shape[0], n});
    for (int64_t i = 0; i < ta.shape[0]; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(i, j) = ta.at(i, c0 + j);
    return make(std::move(out), needs(a), [a, c0, n](Tape& t, int id) {
        const DTensor& go = t.g(id);
        DTensor ga = DTensor::zeros(t.v(a.id).shape);
        for (int64_t i = 0; i < go.shape[0]; ++i)
            for (int64_t j = 0; j < n; ++j) ga.at(i, c0 + j) = go.at(i, j);
        t.accumulate(a.id, ga);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int64_t cols = v(parts[0].id).shape[1], rows = 0;
    bool ng = false;
    for (Var p : parts) {
        const DTensor& tp = v(p.id);
        if (tp.rank() != 2 || tp.shape[1] != cols)
            throw std::invalid_argument("concat_rows: column mismatch");
        rows += tp.shape[0];
        ng = ng || needs(p);
    }
    DTensor out = DTensor::zeros({rows, cols});
    int64_t r = 0;
    for (Var p : parts) {
        const DTensor& tp = v(p.id);
        std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + r * cols);
        r += tp.shape[0];
    }
    auto ps = parts;
    return make(std::move(out), ng, [ps, cols](Tape& t, int id) {
        const DTensor& go = t.g(id);
        int64_t r = 0;
        for (Var p : ps) {
            const DTensor& tp = t.v(p.id);
            DTensor gp = DTensor::zeros(tp.shape);
            std::copy(go.data.begin() + r * cols, go.data.begin() + (r + tp.shape[0]) * cols,
                      gp.data.begin());
            t.accumulate(p.id, gp);
            r += tp.shape[0];
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int64_t rows = v(parts[0].id).shape[0], cols = 0;
    bool ng = false;
    for (Var p : parts) {
        const DTensor& tp = v(p.id);
        if (tp.rank() != 2 || tp.shape[0] != rows)
            throw std::invalid_argument("concat_cols: row mismatch");
        cols += tp.shape[1];
        ng = ng || needs(p);
    }
    DTensor out = DTensor::zeros({rows, cols});
    int64_t c = 0;
    for (Var p : parts) {
        const DTensor& tp = v(p.id);
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < tp.shape[1]; ++j) out.at(i, c + j) = tp.at(i, j);
        c += tp.shape[1];
    }
    auto ps = parts;
    return make(std::move(out), ng, [ps](Tape& t, int id) {
        const DTensor& go = t.g(id);
        int64_t c = 0;
        for (Var p : ps) {
            const DTensor& tp = t.v(p.id);
            DTensor gp = DTensor::zeros(tp.shape);
            for (int64_t i = 0; i < tp.shape[0]; ++i)
                for (int64_t j = 0; j < tp.shape[1]; ++j) gp.at(i, j) = go.at(i, c + j);
            t.accumulate(p.id, gp);
            c += tp.shape[1];
        }
    });
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
    const DTensor& ta = v(a.id);
    DTensor out = ta;
    out.shape = shape;
    if (out.numel() != ta.numel()) throw std::invalid_argument("reshape: element count changed");
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        DTensor ga = t.g(id);
        ga.shape = t.v(a.id).shape;
        t.accumulate(a.id, ga);
    });
}

Var Tape::gather_rows(Var a, std::vector<int64_t> idx) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 only");
    int64_t cols = ta.shape[1];
    DTensor out = DTensor::zeros({static_cast<int64_t>(idx.size()), cols});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= ta.shape[0])
            throw std::invalid_argument("gather_rows: index out of range");
        for (int64_t j = 0; j < cols; ++j)
            out.at(static_cast<int64_t>(i), j) = ta.at(idx[i], j);
    }
    return make(std::move(out), needs(a), [a, idx](Tape& t, int id) {
        const DTensor& go = t.g(id);
        DTensor ga = DTensor::zeros(t.v(a.id).shape);
        for (size_t i = 0; i < idx.size(); ++i)
            for (int64_t j = 0; j < go.shape[1]; ++j)
                ga.at(idx[i], j) += go.at(static_cast<int64_t>(i), j);
        t.accumulate(a.id, ga);
    });
}

Var Tape::gather_elems(Var a, std::vector<int64_t> rows, std::vector<int64_t> cols) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2 || rows.size() != cols.size())
        throw std::invalid_argument("gather_elems: bad arguments");
    for (size_t i = 0; i < rows.size(); ++i)
        if (rows[i] < 0 || rows[i] >= ta.shape[0] || cols[i] < 0 || cols[i] >= ta.shape[1])
            throw std::invalid_argument("gather_elems: index out of range");
    DTensor out = DTensor::zeros({static_cast<int64_t>(rows.size())});
    for (size_t i = 0; i < rows.size(); ++i) out.data[i] = ta.at(rows[i], cols[i]);
    return make(std::move(out), needs(a), [a, rows, cols](Tape& t, int id) {
        const DTensor& go = t.g(id);
        DTensor ga = DTensor::zeros(t.v(a.id).shape);
        for (size_t i = 0; i < rows.size(); ++i) ga.at(rows[i], cols[i]) += go.data[i];
        t.accumulate(a.id, ga);
    });
}

// ---- row reductions ----

Var Tape::softmax_rows(Var a) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 only");
    DTensor out = ta;
    for (int64_t i = 0; i < ta.shape[0]; ++i) {
        double mx = out.at(i, 0);
        for (int64_t j = 1; j < ta.shape[1]; ++j) mx = std::max(mx, out.at(i, j));
        double s = 0.0;
        for (int64_t j = 0; j < ta.shape[1]; ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            s += out.at(i, j);
        }
        for (int64_t j = 0; j < ta.shape[1]; ++j) out.at(i, j) /= s;
    }
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor &go = t.g(id), &y = t.v(id);
        DTensor ga = DTensor::zeros(y.shape);
        for (int64_t i = 0; i < y.shape[0]; ++i) {
            double s = 0.0;
            for (int64_t j = 0; j < y.shape[1]; ++j) s += go.at(i, j) * y.at(i, j);
            for (int64_t j = 0; j < y.shape[1]; ++j)
                ga.at(i, j) = y.at(i, j) * (go.at(i, j) - s);
        }
        t.accumulate(a.id, ga);
    });
}

Var Tape::log_softmax_rows(Var a) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2) throw std::invalid_argument("log_softmax_rows: rank-2 only");
    DTensor out = ta;
    for (int64_t i = 0; i < ta.shape[0]; ++i) {
        double mx = out.at(i, 0);
        for (int64_t j = 1; j < ta.shape[1]; ++j) mx = std::max(mx, out.at(i, j));
        double s = 0.0;
        for (int64_t j = 0; j < ta.shape[1]; ++j) s += std::exp(out.at(i, j) - mx);
        double lse = mx + std::log(s);
        for (int64_t j = 0; j < ta.shape[1]; ++j) out.at(i, j) -= lse;
    }
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor &go = t.g(id), &y = t.v(id);
        DTensor ga = DTensor::zeros(y.shape);
        for (int64_t i = 0; i < y.shape[0]; ++i) {
            double s = 0.0;
            for (int64_t j = 0; j < y.shape[1]; ++j) s += go.at(i, j);
            for (int64_t j = 0; j < y.shape[1]; ++j)
                ga.at(i, j) = go.at(i, j) - std::exp(y.at(i, j)) * s;
        }
        t.accumulate(a.id, ga);
    });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, float eps) {
    const DTensor& ta = v(a.id);
    const DTensor& tg = v(gain.id);
    const DTensor& tb = v(bias.id);
    if (ta.rank() != 2 || tg.rank() != 1 || tb.rank() != 1 || tg.shape[0] != ta.shape[1] ||
        tb.shape[0] != ta.shape[1])
        throw std::invalid_argument("layer_norm: bad shapes");
    const int64_t R = ta.shape[0], C = ta.shape[1];
    DTensor out = DTensor::zeros(ta.shape);
    DTensor yhat = DTensor::zeros(ta.shape);  // normalized pre-gain
    DTensor inv_sigma = DTensor::zeros({R});
    for (int64_t i = 0; i < R; ++i) {
        double mu = 0.0;
        for (int64_t j = 0; j < C; ++j) mu += ta.at(i, j);
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (int64_t j = 0; j < C; ++j) {
            double d = ta.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(C);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma.at(i) = is;
        for (int64_t j = 0; j < C; ++j) {
            yhat.at(i, j) = (ta.at(i, j) - mu) * is;
            out.at(i, j) = tg.at(j) * yhat.at(i, j) + tb.at(j);
        }
    }
    return make(std::move(out), needs(a) || needs(gain) || needs(bias),
                [a, gain, bias, yhat, inv_sigma](Tape& t, int id) {
                    const DTensor& go = t.g(id);
                    const DTensor& tg = t.v(gain.id);
                    const int64_t R = go.shape[0], C = go.shape[1];
                    if (t.needs(gain)) {
                        DTensor gg = DTensor::zeros(tg.shape);
                        for (int64_t i = 0; i < R; ++i)
                            for (int64_t j = 0; j < C; ++j)
                                gg.at(j) += go.at(i, j) * yhat.at(i, j);
                        t.accumulate(gain.id, gg);
                    }
                    if (t.needs(bias)) {
                        DTensor gb = DTensor::zeros(tg.shape);
                        for (int64_t i = 0; i < R; ++i)
                            for (int64_t j = 0; j < C; ++j) gb.at(j) += go.at(i, j);
                        t.accumulate(bias.id, gb);
                    }
                    if (t.needs(a)) {
                        DTensor ga = DTensor::zeros(go.shape);
                        for (int64_t i = 0; i < R; ++i) {
                            double m1 = 0.0, m2 = 0.0;
                            for (int64_t j = 0; j < C; ++j) {
                                double dy = go.at(i, j) * tg.at(j);
                                m1 += dy;
                                m2 += dy * yhat.at(i, j);
                            }
                            m1 /= static_cast<double>(C);
                            m2 /= static_cast<double>(C);
                            for (int64_t j = 0; j < C; ++j) {
                                double dy = go.at(i, j) * tg.at(j);
                                ga.at(i, j) = (dy - m1 - yhat.at(i, j) * m2) * inv_sigma.at(i);
                            }
                        }
                        t.accumulate(a.id, ga);
                    }
                });
}

// ---- elementwise nonlinearities ----

Var Tape::gelu(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& ta = t.v(a.id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i) {
            double x = ta.data[i];
            double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga.data[i] *= phi + x * pdf;
        }
        t.accumulate(a.id, ga);
    });
}

Var Tape::relu(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) x = std::max(x, 0.0);
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& ta = t.v(a.id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i)
            if (ta.data[i] <= 0.0) ga.data[i] = 0.0;
        t.accumulate(a.id, ga);
    });
}

Var Tape::sigmoid(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& y = t.v(id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= y.data[i] * (1.0 - y.data[i]);
        t.accumulate(a.id, ga);
    });
}

Var Tape::abs(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) x = std::fabs(x);
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& ta = t.v(a.id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i) {
            if (ta.data[i] < 0.0)
                ga.data[i] = -ga.data[i];
            else if (ta.data[i] == 0.0)
                ga.data[i] = 0.0;
        }
        t.accumulate(a.id, ga);
    });
}

Var Tape::sin(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) x = std::sin(x);
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& ta = t.v(a.id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= std::cos(ta.data[i]);
        t.accumulate(a.id, ga);
    });
}

Var Tape::acos(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) {
        if (x < -1.0 || x > 1.0) throw std::invalid_argument("acos: input outside [-1,1]");
        x = std::acos(x);
    }
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& ta = t.v(a.id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i) {
            double x = ta.data[i];
            ga.data[i] *= -1.0 / std::sqrt(std::max(1.0 - x * x, 1e-18));
        }
        t.accumulate(a.id, ga);
    });
}

Var Tape::sqrt(Var a) {
    DTensor out = v(a.id);
    for (double& x : out.data) x = std::sqrt(x);
    return make(std::move(out), needs(a), [a](Tape& t, int id) {
        const DTensor& go = t.g(id);
        const DTensor& y = t.v(id);
        DTensor ga = go;
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] /= 2.0 * y.data[i];
        t.accumulate(a.id, ga);
    });
}

// ---- reductions ----

Var Tape::sum(Var a) {
    double s = 0.0;
    for (double x : v(a.id).data) s += x;
    return make(DTensor::scalar(s), needs(a), [a](Tape& t, int id) {
        double go = t.g(id).data[0];
        t.accumulate(a.id, DTensor::full(t.v(a.id).shape, go));
    });
}

Var Tape::mean(Var a) {
    const DTensor& ta = v(a.id);
    double s = 0.0;
    for (double x : ta.data) s += x;
    double n = static_cast<double>(ta.numel());
    return make(DTensor::scalar(s / n), needs(a), [a, n](Tape& t, int id) {
        double go = t.g(id).data[0] / n;
        t.accumulate(a.id, DTensor::full(t.v(a.id).shape, go));
    });
}

Var Tape::weighted_sum(Var a, Tensor weights) {
    const DTensor& ta = v(a.id);
    if (ta.shape != weights.shape) throw std::invalid_argument("weighted_sum: shape mismatch");
    DTensor w = DTensor::widen(weights);
    double s = 0.0;
    for (size_t i = 0; i < ta.data.size(); ++i) s += ta.data[i] * w.data[i];
    return make(DTensor::scalar(s), needs(a), [a, w](Tape& t, int id) {
        double go = t.g(id).data[0];
        DTensor ga = w;
        for (double& x : ga.data) x *= go;
        t.accumulate(a.id, ga);
    });
}

Var Tape::dot(Var a, Var b) {
    const DTensor &ta = v(a.id), &tb = v(b.id);
    if (ta.numel() != tb.numel()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < ta.data.size(); ++i) s += ta.data[i] * tb.data[i];
    return make(DTensor::scalar(s), needs(a) || needs(b), [a, b](Tape& t, int id) {
        double go = t.g(id).data[0];
        if (t.needs(a)) {
            DTensor ga = t.v(b.id);
            ga.shape = t.v(a.id).shape;
            for (double& x : ga.data) x *= go;
            t.accumulate(a.id, ga);
        }
        if (t.needs(b)) {
            DTensor gb = t.v(a.id);
            gb.shape = t.v(b.id).shape;
            for (double& x : gb.data) x *= go;
            t.accumulate(b.id, gb);
        }
    });
}

Var Tape::norm2(Var a) {
    const DTensor& ta = v(a.id);
    double s = 0.0;
    for (double x : ta.data) s += x * x;
    double n = std::sqrt(s);
    return make(DTensor::scalar(n), needs(a), [a, n](Tape& t, int id) {
        double go = t.g(id).data[0];
        DTensor ga = t.v(a.id);
        double inv = n > 0.0 ? go / n : 0.0;
        for (double& x : ga.data) x *= inv;
        t.accumulate(a.id, ga);
    });
}

Var Tape::maxpool2x2(Var a, int64_t rows, int64_t cols) {
    const DTensor& ta = v(a.id);
    if (ta.rank() != 2 || ta.shape[0] != rows * cols || rows % 2 || cols % 2)
        throw std::invalid_argument("maxpool2x2: grid must be even and match row count");
    const int64_t d = ta.shape[1], pr = rows / 2, pc = cols / 2;
    DTensor out = DTensor::zeros({pr * pc, d});
    std::vector<int64_t> argmax(static_cast<size_t>(pr * pc * d));
    for (int64_t i = 0; i < pr; ++i) {
        for (int64_t j = 0; j < pc; ++j) {
            int64_t o = i * pc + j;
            for (int64_t k = 0; k < d; ++k) {
                double best = -std::numeric_limits<double>::infinity();
                int64_t bi = -1;
                for (int64_t di = 0; di < 2; ++di)
                    for (int64_t dj = 0; dj < 2; ++dj) {
                        int64_t src = (2 * i + di) * cols + (2 * j + dj);
                        double x = ta.at(src, k);
                        if (x > best) {
                            best = x;
                            bi = src;
                        }
                    }
                out.at(o, k) = best;
                argmax[static_cast<size_t>(o * d + k)] = bi;
            }
        }
    }
    return make(std::move(out), needs(a), [a, argmax, d](Tape& t, int id) {
        const DTensor& go = t.g(id);
        DTensor ga = DTensor::zeros(t.v(a.id).shape);
        for (int64_t o = 0; o < go.shape[0]; ++o)
            for (int64_t k = 0; k < d; ++k)
                ga.at(argmax[static_cast<size_t>(o * d + k)], k) += go.at(o, k);
        t.accumulate(a.id, ga);
    });
}

// ---- finite differences ----

Tensor finite_diff_grad(const std::function<float(const Tensor&)>& f, const Tensor& x, float eps) {
    if (eps <= 0.0f) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor grad = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (size_t i = 0; i < x.data.size(); ++i) {
        probe.data[i] = x.data[i] + eps;
        double fp = f(probe);
        probe.data[i] = x.data[i] - eps;
        double fm = f(probe);
        probe.data[i] = x.data[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value");
        grad.data[i] = static_cast<float>((fp - fm) / (2.0 * static_cast<double>(eps)));
    }
    return grad;
}

}  // namespace texthawk
