#include "promptface/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "promptface/errors.hpp"

namespace promptface {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("autodiff shape mismatch: ") + what);
}

double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

}  // namespace

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
    Node n;
    n.ref = &value;
    n.needs_grad = true;
    n.sink = grad_sink;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
}

Matrix& Tape::grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
        const Matrix& val = n.ref ? *n.ref : n.value;
        n.grad = Matrix::Zero(val.rows(), val.cols());
        n.has_grad = true;
    }
    return n.grad;
}

Var Tape::push(Matrix value, std::span<const Var> inputs, std::function<void()> backward) {
    Node n;
    n.value = std::move(value);
    for (const Var& in : inputs) n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
    require(value(root).size() == 1, "backward root must be 1x1");
    grad(root)(0, 0) += 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.needs_grad) continue;
        if (n.backward) n.backward();
        if (n.sink) {
            if (n.sink->size() == 0) *n.sink = Matrix::Zero(n.grad.rows(), n.grad.cols());
            *n.sink += n.grad;
        }
    }
}

// The closures below look up their output gradient through `self`, which is
// the index the node will receive on push.
#define PF_SELF(t) Var{(t), static_cast<int>((t)->size())}

Var matmul(Var a, Var b) {
    Tape* t = a.tape;
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    require(av.cols() == bv.rows(), "matmul inner dimensions");
    t->add_flops(2ull * av.rows() * av.cols() * bv.cols());
    Matrix out = av * bv;
    const Var self = PF_SELF(t);
    const Var ins[] = {a, b};
    return t->push(std::move(out), ins, [t, a, b, self] {
        const Matrix& g = t->grad(self);
        if (t->needs_grad(a)) t->grad(a).noalias() += g * t->value(b).transpose();
        if (t->needs_grad(b)) t->grad(b).noalias() += t->value(a).transpose() * g;
    });
}

Var add(Var a, Var b) {
    Tape* t = a.tape;
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add operands");
    Matrix out = a.value() + b.value();
    const Var self = PF_SELF(t);
    const Var ins[] = {a, b};
    return t->push(std::move(out), ins, [t, a, b, self] {
        const Matrix& g = t->grad(self);
        if (t->needs_grad(a)) t->grad(a) += g;
        if (t->needs_grad(b)) t->grad(b) += g;
    });
}

Var add_row(Var a, Var row) {
    Tape* t = a.tape;
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row broadcast");
    Matrix out = a.value().rowwise() + row.value().row(0);
    const Var self = PF_SELF(t);
    const Var ins[] = {a, row};
    return t->push(std::move(out), ins, [t, a, row, self] {
        const Matrix& g = t->grad(self);
        if (t->needs_grad(a)) t->grad(a) += g;
        if (t->needs_grad(row)) t->grad(row) += g.colwise().sum();
    });
}

Var scale(Var a, double s) {
    Tape* t = a.tape;
    Matrix out = a.value() * s;
    const Var self = PF_SELF(t);
    const Var ins[] = {a};
    return t->push(std::move(out), ins, [t, a, s, self] { t->grad(a) += t->grad(self) * s; });
}

Var gelu(Var a) {
    Tape* t = a.tape;
    const Matrix& x = a.value();
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    }
    const Var self = PF_SELF(t);
    const Var ins[] = {a};
    return t->push(std::move(out), ins, [t, a, self] {
        const Matrix& g = t->grad(self);
        const Matrix& x = t->value(a);
        Matrix& ga = t->grad(a);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double v = x.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            ga.data()[i] += g.data()[i] * (cdf + v * pdf);
        }
    });
}

Var sigmoid(Var a) {
    Tape* t = a.tape;
    Matrix out = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Var self = PF_SELF(t);
    const Var ins[] = {a};
    return t->push(std::move(out), ins, [t, a, self] {
        const Matrix& y = t->value(self);
        t->grad(a).array() += t->grad(self).array() * y.array() * (1.0 - y.array());
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Tape* t = x.tape;
    const Matrix& xv = x.value();
    const Eigen::Index n = xv.rows(), c = xv.cols();
    require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
            "layer_norm affine parameters");
    Matrix xhat(n, c);
    Eigen::VectorXd rstd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = xv.row(i).mean();
        const double var = (xv.row(i).array() - mu).square().mean();
        rstd(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (xv.row(i).array() - mu) * rstd(i);
    }
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
                 beta.value().row(0).array();
    const Var self = PF_SELF(t);
    const Var ins[] = {x, gamma, beta};
    return t->push(std::move(out), ins,
                   [t, x, gamma, beta, self, xhat = std::move(xhat), rstd = std::move(rstd)] {
                       const Matrix& g = t->grad(self);
                       if (t->needs_grad(gamma)) t->grad(gamma) += (g.array() * xhat.array()).colwise().sum().matrix();
                       if (t->needs_grad(beta)) t->grad(beta) += g.colwise().sum();
                       if (!t->needs_grad(x)) return;
                       const Matrix dxhat = g.array().rowwise() * t->value(gamma).row(0).array();
                       Matrix& gx = t->grad(x);
                       for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                           const double m1 = dxhat.row(i).mean();
                           const double m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
                           gx.row(i).array() +=
                               rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                       }
                   });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    Tape* t = a.tape;
    require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols range");
    Matrix out = a.value().middleCols(start, count);
    const Var self = PF_SELF(t);
    const Var ins[] = {a};
    return t->push(std::move(out), ins, [t, a, start, count, self] {
        t->grad(a).middleCols(start, count) += t->grad(self);
    });
}

Var concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols needs inputs");
    Tape* t = parts.front().tape;
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts.front().rows();
    for (const Var& p : parts) {
        require(p.rows() == rows, "concat_cols row counts");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    const Var self = PF_SELF(t);
    std::vector<Var> keep(parts.begin(), parts.end());
    return t->push(std::move(out), parts, [t, keep = std::move(keep), self] {
        const Matrix& g = t->grad(self);
        Eigen::Index at = 0;
        for (const Var& p : keep) {
            const Eigen::Index c = t->value(p).cols();
            if (t->needs_grad(p)) t->grad(p) += g.middleCols(at, c);
            at += c;
        }
    });
}

Var gather_rows(Var a, std::span<const int> rows) {
    Tape* t = a.tape;
    const Matrix& av = a.value();
    Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < av.rows(), "gather_rows index");
        out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
    }
    const Var self = PF_SELF(t);
    std::vector<int> idx(rows.begin(), rows.end());
    const Var ins[] = {a};
    return t->push(std::move(out), ins, [t, a, idx = std::move(idx), self] {
        const Matrix& g = t->grad(self);
        Matrix& ga = t->grad(a);
        for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    });
}

Var sum_all(Var a) {
    Tape* t = a.tape;
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    const Var self = PF_SELF(t);
    const Var ins[] = {a};
    return t->push(std::move(out), ins, [t, a, self] { t->grad(a).array() += t->grad(self)(0, 0); });
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var attention(Var q, Var k, Var v, Matrix* weights_out) {
    Tape* t = q.tape;
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    require(qv.cols() == kv.cols(), "attention query/key width");
    require(kv.rows() == vv.rows(), "attention key/value count");
    const Eigen::Index nq = qv.rows(), nk = kv.rows(), d = qv.cols(), dv = vv.cols();
    require(nk > 0, "attention needs at least one key");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    t->add_flops(2ull * nq * nk * d + 2ull * nq * nk * dv);

    Matrix w(nq, nk);
    std::vector<double> terms(static_cast<std::size_t>(nk));
    for (Eigen::Index i = 0; i < nq; ++i) {
        for (Eigen::Index j = 0; j < nk; ++j) {
            double s = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) s += qv(i, c) * kv(j, c);
            w(i, j) = s * inv_sqrt_d;
        }
        const double m = w.row(i).maxCoeff();
        for (Eigen::Index j = 0; j < nk; ++j) {
            w(i, j) = std::exp(w(i, j) - m);
            terms[j] = w(i, j);
        }
        const double z = sorted_sum(terms);
        w.row(i) /= z;
    }
    Matrix out(nq, dv);
    for (Eigen::Index i = 0; i < nq; ++i) {
        for (Eigen::Index c = 0; c < dv; ++c) {
            for (Eigen::Index j = 0; j < nk; ++j) terms[j] = w(i, j) * vv(j, c);
            out(i, c) = sorted_sum(terms);
        }
    }
    if (weights_out) *weights_out = w;
    const Var self = PF_SELF(t);
    const Var ins[] = {q, k, v};
    return t->push(std::move(out), ins, [t, q, k, v, self, inv_sqrt_d, w = std::move(w)] {
        const Matrix& g = t->grad(self);
        if (t->needs_grad(v)) t->grad(v).noalias() += w.transpose() * g;
        if (!t->needs_grad(q) && !t->needs_grad(k)) return;
        const Matrix gw = g * t->value(v).transpose();
        Matrix gs = w.array() * gw.array();
        const Eigen::VectorXd rowdot = gs.rowwise().sum();
        gs -= (w.array().colwise() * rowdot.array()).matrix();
        gs *= inv_sqrt_d;
        if (t->needs_grad(q)) t->grad(q).noalias() += gs * t->value(k);
        if (t->needs_grad(k)) t->grad(k).noalias() += gs.transpose() * t->value(q);
    });
}

Var encode_prompts(Var points, const PromptCodecConfig& config) {
    Tape* t = points.tape;
    config.validate();
    const Matrix& p = points.value();
    require(p.cols() == 2, "encode_prompts expects N x 2 points");
    const int half = config.channels / 2;
    const int freqs = config.frequencies();
    std::vector<double> wl(static_cast<std::size_t>(freqs));
    for (int c = 0; c < freqs; ++c) wl[c] = config.wavelength(c);
    Matrix out(p.rows(), config.channels);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (int axis = 0; axis < 2; ++axis) {
            for (int c = 0; c < freqs; ++c) {
                const double arg = p(i, axis) / wl[c];
                out(i, axis * half + 2 * c) = std::sin(arg);
                out(i, axis * half + 2 * c + 1) = std::cos(arg);
            }
        }
    }
    const Var self = PF_SELF(t);
    const Var ins[] = {points};
    return t->push(std::move(out), ins, [t, points, self, half, freqs, wl = std::move(wl)] {
        const Matrix& g = t->grad(self);
        const Matrix& p = t->value(points);
        Matrix& gp = t->grad(points);
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (int axis = 0; axis < 2; ++axis) {
                double acc = 0.0;
                for (int c = 0; c < freqs; ++c) {
                    const double arg = p(i, axis) / wl[c];
                    acc += (g(i, axis * half + 2 * c) * std::cos(arg) -
                            g(i, axis * half + 2 * c + 1) * std::sin(arg)) /
                           wl[c];
                }
                gp(i, axis) += acc;
            }
        }
    });
}

Var masked_l1_sum(Var pred, const Matrix& target, std::span<const bool> mask, double s) {
    Tape* t = pred.tape;
    const Matrix& pv = pred.value();
    require(pv.rows() == target.rows() && pv.cols() == target.cols(), "l1 prediction/target");
    require(static_cast<Eigen::Index>(mask.size()) == pv.rows(), "l1 mask length");
    Matrix sign = Matrix::Zero(pv.rows(), pv.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
        if (!mask[i]) continue;
        for (Eigen::Index c = 0; c < pv.cols(); ++c) {
            const double d = pv(i, c) - target(i, c);
            total += std::abs(d);
            sign(i, c) = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        }
    }
    Matrix out(1, 1);
    out(0, 0) = s * total;
    const Var self = PF_SELF(t);
    const Var ins[] = {pred};
    return t->push(std::move(out), ins, [t, pred, self, s, sign = std::move(sign)] {
        t->grad(pred) += sign * (t->grad(self)(0, 0) * s);
    });
}

#undef PF_SELF

}  // namespace promptface
