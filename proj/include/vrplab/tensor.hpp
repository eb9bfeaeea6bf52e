#pragma once

// Minimal dense 2-D tensors with reverse-mode differentiation.
//
// A Tape owns every value computed during one forward pass, together with the
// rule that pushes gradients back to its inputs. Tensors are lightweight
// handles (tape, record id). Parameters live outside any tape; binding one to
// a tape makes its gradient accumulate into Parameter::grad on backward().
// Records are created in topological order, so backward() is a reverse sweep.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vrplab/core.hpp"

namespace vrplab::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct ShapeError : Error { using Error::Error; };
struct MaskError : Error { using Error::Error; };
struct DetachedError : Error { using Error::Error; };

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool touched = false;  // received a gradient since the last zero_grad()

    Parameter() = default;
    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() {
        grad.setZero(value.rows(), value.cols());
        touched = false;
    }
};

class Tape;

class Tensor {
public:
    Tensor() = default;

    const Matrix& value() const;
    const Matrix& grad() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    std::vector<Index> shape() const { return {rows(), cols()}; }
    double item() const;
    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    /// Backward rule: receives the gradient of the record's output.
    using Rule = std::function<void(Tape&, const Matrix&)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }
    std::size_t size() const { return records_.size(); }

    Tensor constant(Matrix value) {
        records_.push_back(Record{std::move(value), {}, {}, nullptr, false});
        return Tensor(this, records_.size() - 1);
    }

    /// Binds a parameter; repeated binds on one tape share a single leaf.
    Tensor param(Parameter& p) {
        auto [it, fresh] = params_.try_emplace(&p, records_.size());
        if (fresh) records_.push_back(Record{p.value, {}, {}, &p, record_});
        return Tensor(this, it->second);
    }

    /// Appends an op output. The rule is kept only when some input needs a gradient.
    Tensor push(Matrix value, std::initializer_list<Tensor> inputs, Rule rule) {
        bool needs = false;
        for (const auto& t : inputs) {
            check_owned(t);
            needs = needs || records_[t.id_].needs_grad;
        }
        records_.push_back(Record{std::move(value), {}, needs ? std::move(rule) : Rule{}, nullptr, needs});
        return Tensor(this, records_.size() - 1);
    }

    Tensor push_many(Matrix value, const std::vector<Tensor>& inputs, Rule rule) {
        bool needs = false;
        for (const auto& t : inputs) {
            check_owned(t);
            needs = needs || records_[t.id_].needs_grad;
        }
        records_.push_back(Record{std::move(value), {}, needs ? std::move(rule) : Rule{}, nullptr, needs});
        return Tensor(this, records_.size() - 1);
    }

    const Matrix& value(std::size_t id) const { return records_[id].value; }
    const Matrix& grad(std::size_t id) const { return records_[id].grad; }
    bool needs_grad(const Tensor& t) const { return records_[t.id_].needs_grad; }

    void accumulate(const Tensor& t, const Matrix& g) {
        Record& r = records_[t.id_];
        if (!r.needs_grad) return;
        if (r.grad.size() == 0) r.grad = g;
        else r.grad += g;
    }

    void accumulate(const Tensor& t, Matrix&& g) {
        Record& r = records_[t.id_];
        if (!r.needs_grad) return;
        if (r.grad.size() == 0) r.grad = std::move(g);
        else r.grad += g;
    }

    /// Adds g into the block of t's gradient starting at (row, col).
    void accumulate_block(const Tensor& t, Index row, Index col, const Matrix& g) {
        Record& r = records_[t.id_];
        if (!r.needs_grad) return;
        if (r.grad.size() == 0) r.grad = Matrix::Zero(r.value.rows(), r.value.cols());
        r.grad.block(row, col, g.rows(), g.cols()) += g;
    }

    /// Adds g into row `row` of t's gradient.
    void accumulate_row(const Tensor& t, Index row, const Eigen::Ref<const Matrix>& g) {
        Record& r = records_[t.id_];
        if (!r.needs_grad) return;
        if (r.grad.size() == 0) r.grad = Matrix::Zero(r.value.rows(), r.value.cols());
        r.grad.row(row) += g.row(0);
    }

    /// Reverse sweep from a scalar loss; parameter leaves add into Parameter::grad.
    void backward(const Tensor& loss) {
        if (loss.tape_ != this) throw DetachedError("loss tensor does not belong to this tape");
        if (!record_) throw DetachedError("tape was created without recording");
        const Record& l = records_[loss.id_];
        if (l.value.rows() != 1 || l.value.cols() != 1) throw ShapeError("backward needs a scalar loss");
        if (!l.needs_grad) return;
        records_[loss.id_].grad = Matrix::Ones(1, 1);
        for (std::size_t i = loss.id_ + 1; i-- > 0;) {
            Record& r = records_[i];
            if (r.grad.size() == 0) continue;
            if (r.param) {
                r.param->grad += r.grad;
                r.param->touched = true;
            } else if (r.rule) {
                r.rule(*this, r.grad);
            }
        }
    }

    void check_owned(const Tensor& t) const {
        if (t.tape_ != this) throw DetachedError("tensor belongs to a different tape");
    }

private:
    struct Record {
        Matrix value;
        Matrix grad;
        Rule rule;
        Parameter* param;
        bool needs_grad;
    };
    std::deque<Record> records_;  // deque keeps references to values stable
    std::unordered_map<Parameter*, std::size_t> params_;
    bool record_;
};

inline const Matrix& Tensor::value() const {
    if (!tape_) throw DetachedError("empty tensor handle");
    return tape_->value(id_);
}
inline const Matrix& Tensor::grad() const { return tape_->grad(id_); }
inline double Tensor::item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() needs a 1x1 tensor");
    return value()(0, 0);
}

namespace detail {

inline Tape& same_tape(const Tensor& a, const Tensor& b) {
    if (!a.valid() || a.tape() != b.tape()) throw DetachedError("tensors live on different tapes");
    return *a.tape();
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix out = a.value() * b.value();
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a, g * b.value().transpose());
        if (tp.needs_grad(b)) tp.accumulate(b, a.value().transpose() * g);
    });
}

/// a * b^T without materialising the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Matrix out = a.value() * b.value().transpose();
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a, g * b.value());
        if (tp.needs_grad(b)) tp.accumulate(b, g.transpose() * a.value());
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    detail::require_same_shape(a, b, "add");
    return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    detail::require_same_shape(a, b, "sub");
    return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, -g);
    });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tape& t = detail::same_tape(a, b);
    detail::require_same_shape(a, b, "hadamard");
    Matrix out = a.value().cwiseProduct(b.value());
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
        if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
    });
}

/// Adds a 1 x c row vector to every row of a.
inline Tensor add_row(const Tensor& a, const Tensor& bias) {
    Tape& t = detail::same_tape(a, bias);
    if (bias.rows() != 1 || bias.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    Matrix out = a.value().rowwise() + bias.value().row(0);
    return t.push(std::move(out), {a, bias}, [a, bias](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.needs_grad(bias)) tp.accumulate(bias, g.colwise().sum());
    });
}

/// Multiplies column j of a by gain(0, j).
inline Tensor scale_cols(const Tensor& a, const Tensor& gain) {
    Tape& t = detail::same_tape(a, gain);
    if (gain.rows() != 1 || gain.cols() != a.cols()) throw ShapeError("scale_cols: gain must be 1 x cols");
    Matrix out = a.value() * gain.value().row(0).asDiagonal();
    return t.push(std::move(out), {a, gain}, [a, gain](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a, g * gain.value().row(0).asDiagonal());
        if (tp.needs_grad(gain)) tp.accumulate(gain, g.cwiseProduct(a.value()).colwise().sum());
    });
}

inline Tensor scale(const Tensor& a, double s) {
    return a.tape()->push(a.value() * s, {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    Matrix out = a.value().array() + s;
    return a.tape()->push(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

inline Tensor transpose(const Tensor& a) {
    return a.tape()->push(a.value().transpose(), {a},
                          [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
    Tape* tape = parts.front().tape();
    const Index cols = parts.front().cols();
    Index rows = 0;
    for (const auto& p : parts) {
        if (p.tape() != tape) throw DetachedError("concat_rows: tensors live on different tapes");
        if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return tape->push_many(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
        Index r0 = 0;
        for (const auto& p : parts) {
            if (tp.needs_grad(p)) tp.accumulate(p, g.middleRows(r0, p.rows()));
            r0 += p.rows();
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
    Tape* tape = parts.front().tape();
    const Index rows = parts.front().rows();
    Index cols = 0;
    for (const auto& p : parts) {
        if (p.tape() != tape) throw DetachedError("concat_cols: tensors live on different tapes");
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return tape->push_many(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
        Index c0 = 0;
        for (const auto& p : parts) {
            if (tp.needs_grad(p)) tp.accumulate(p, g.middleCols(c0, p.cols()));
            c0 += p.cols();
        }
    });
}

inline Tensor slice_cols(const Tensor& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    Matrix out = a.value().middleCols(start, count);
    return a.tape()->push(std::move(out), {a},
                          [a, start](Tape& tp, const Matrix& g) { tp.accumulate_block(a, 0, start, g); });
}

inline Tensor slice_rows(const Tensor& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    Matrix out = a.value().middleRows(start, count);
    return a.tape()->push(std::move(out), {a},
                          [a, start](Tape& tp, const Matrix& g) { tp.accumulate_block(a, start, 0, g); });
}

/// Rows of a in the given order (repeats allowed; gradients add up).
inline Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
    Matrix out(static_cast<Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: row out of range");
        out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
    }
    return a.tape()->push(std::move(out), {a}, [a, rows](Tape& tp, const Matrix& g) {
        for (std::size_t i = 0; i < rows.size(); ++i) tp.accumulate_row(a, rows[i], g.row(static_cast<Index>(i)));
    });
}

inline Tensor relu(const Tensor& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return a.tape()->push(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        tp.accumulate(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
    });
}

inline Tensor tanh(const Tensor& a) {
    Matrix out = a.value().array().tanh().matrix();
    Matrix y = out;
    return a.tape()->push(std::move(out), {a}, [a, y](Tape& tp, const Matrix& g) {
        tp.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

inline Tensor log(const Tensor& a) {
    Matrix out = a.value().array().log().matrix();
    return a.tape()->push(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g.cwiseQuotient(a.value()));
    });
}

inline Tensor sum(const Tensor& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape()->push(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Element (r, c) as a 1 x 1 tensor.
inline Tensor pick(const Tensor& a, Index r, Index c) {
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) throw ShapeError("pick: out of range");
    Matrix out(1, 1);
    out(0, 0) = a.value()(r, c);
    return a.tape()->push(std::move(out), {a},
                          [a, r, c](Tape& tp, const Matrix& g) { tp.accumulate_block(a, r, c, g); });
}

/// Multi-head attention core: for head i over column block i of width
/// d/heads, softmax(Q_i K_i^T * scale) V_i; head outputs are concatenated.
inline Tensor attention_heads(const Tensor& q, const Tensor& k, const Tensor& v, int heads, double scale) {
    Tape& t = detail::same_tape(q, k);
    detail::same_tape(k, v);
    if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows()) throw ShapeError("attention_heads: shapes");
    if (heads < 1 || q.cols() % heads != 0) throw ShapeError("attention_heads: width not divisible by heads");
    const Index dk = q.cols() / heads;
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    Matrix out(q.rows(), q.cols());
    std::vector<Matrix> attn(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Matrix s = (qv.middleCols(h * dk, dk) * kv.middleCols(h * dk, dk).transpose()) * scale;
        for (Index r = 0; r < s.rows(); ++r) {
            const double mx = s.row(r).maxCoeff();
            s.row(r) = (s.row(r).array() - mx).exp().matrix();
            s.row(r) /= s.row(r).sum();
        }
        out.middleCols(h * dk, dk).noalias() = s * vv.middleCols(h * dk, dk);
        attn[static_cast<std::size_t>(h)] = std::move(s);
    }
    if (!t.recording()) attn.clear();
    return t.push(std::move(out), {q, k, v}, [q, k, v, heads, dk, scale, attn = std::move(attn)](Tape& tp, const Matrix& g) {
        const Matrix& qv = q.value();
        const Matrix& kv = k.value();
        const Matrix& vv = v.value();
        Matrix dq(qv.rows(), qv.cols()), dk_(kv.rows(), kv.cols()), dv(vv.rows(), vv.cols());
        for (int h = 0; h < heads; ++h) {
            const Matrix& a = attn[static_cast<std::size_t>(h)];
            const auto gh = g.middleCols(h * dk, dk);
            dv.middleCols(h * dk, dk).noalias() = a.transpose() * gh;
            Matrix da = gh * vv.middleCols(h * dk, dk).transpose();
            const Eigen::VectorXd dots = da.cwiseProduct(a).rowwise().sum();
            Matrix ds = a.cwiseProduct(da - dots.replicate(1, da.cols())) * scale;
            dq.middleCols(h * dk, dk).noalias() = ds * kv.middleCols(h * dk, dk);
            dk_.middleCols(h * dk, dk).noalias() = ds.transpose() * qv.middleCols(h * dk, dk);
        }
        tp.accumulate(q, dq);
        tp.accumulate(k, dk_);
        tp.accumulate(v, dv);
    });
}

namespace detail {

// Softmax over the allowed entries of each row; masked entries are exactly 0.
inline Matrix masked_softmax_values(const Matrix& x, const Mask* allowed) {
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        if (allowed && !allowed->row(r).any()) throw MaskError("softmax row is fully masked");
        double mx = -std::numeric_limits<double>::infinity();
        for (Index c = 0; c < x.cols(); ++c)
            if (!allowed || (*allowed)(r, c)) mx = std::max(mx, x(r, c));
        double z = 0.0;
        for (Index c = 0; c < x.cols(); ++c) {
            if (allowed && !(*allowed)(r, c)) continue;
            out(r, c) = std::exp(x(r, c) - mx);
            z += out(r, c);
        }
        out.row(r) /= z;
    }
    return out;
}

inline Tensor softmax_impl(const Tensor& a, const Mask* allowed) {
    Matrix p = masked_softmax_values(a.value(), allowed);
    Matrix saved = p;
    return a.tape()->push(std::move(p), {a}, [a, saved](Tape& tp, const Matrix& g) {
        // dx = p * (g - sum(g * p)) row by row; masked entries have p = 0.
        Eigen::VectorXd dots = g.cwiseProduct(saved).rowwise().sum();
        Matrix dx = saved.cwiseProduct(g - dots.replicate(1, g.cols()));
        tp.accumulate(a, dx);
    });
}

}  // namespace detail

inline Tensor row_softmax(const Tensor& a) { return detail::softmax_impl(a, nullptr); }

inline Tensor masked_row_softmax(const Tensor& a, const Mask& allowed) {
    if (allowed.rows() != a.rows() || allowed.cols() != a.cols()) throw ShapeError("mask shape differs from logits");
    return detail::softmax_impl(a, &allowed);
}

/// Log of masked_row_softmax on allowed entries; masked entries hold -infinity
/// and receive no gradient.
inline Tensor masked_log_softmax(const Tensor& a, const Mask& allowed) {
    if (allowed.rows() != a.rows() || allowed.cols() != a.cols()) throw ShapeError("mask shape differs from logits");
    Matrix p = detail::masked_softmax_values(a.value(), &allowed);
    Matrix out(p.rows(), p.cols());
    for (Index r = 0; r < p.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Index c = 0; c < p.cols(); ++c)
            if (allowed(r, c)) mx = std::max(mx, a.value()(r, c));
        double z = 0.0;
        for (Index c = 0; c < p.cols(); ++c)
            if (allowed(r, c)) z += std::exp(a.value()(r, c) - mx);
        const double lz = mx + std::log(z);
        for (Index c = 0; c < p.cols(); ++c)
            out(r, c) = allowed(r, c) ? a.value()(r, c) - lz : -std::numeric_limits<double>::infinity();
    }
    return a.tape()->push(std::move(out), {a}, [a, p, allowed](Tape& tp, const Matrix& g) {
        Matrix gm = allowed.select(g, 0.0);
        Eigen::VectorXd sums = gm.rowwise().sum();
        tp.accumulate(a, gm - p.cwiseProduct(sums.replicate(1, g.cols())));
    });
}

/// Mean over rows of -log(probabilities(r, target[r])).
inline Tensor cross_entropy(const Tensor& probabilities, const std::vector<int>& targets) {
    if (static_cast<Index>(targets.size()) != probabilities.rows()) throw ShapeError("cross_entropy: one target per row");
    const Matrix& p = probabilities.value();
    Matrix out(1, 1);
    double loss = 0.0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        const double v = p(static_cast<Index>(r), targets[r]);
        if (!(v > 0.0)) throw MaskError("cross_entropy: target has zero probability");
        loss -= std::log(v);
    }
    out(0, 0) = loss / static_cast<double>(targets.size());
    return probabilities.tape()->push(std::move(out), {probabilities}, [probabilities, targets](Tape& tp, const Matrix& g) {
        const Matrix& pv = probabilities.value();
        Matrix d = Matrix::Zero(pv.rows(), pv.cols());
        const double n = static_cast<double>(targets.size());
        for (std::size_t r = 0; r < targets.size(); ++r)
            d(static_cast<Index>(r), targets[r]) = -g(0, 0) / (n * pv(static_cast<Index>(r), targets[r]));
        tp.accumulate(probabilities, d);
    });
}

inline constexpr double kStandardizeEps = 1e-5;

/// Per-row standardisation over the feature dimension: (x - mean) / sqrt(var + eps).
inline Tensor standardize(const Tensor& a) {
    const Matrix& x = a.value();
    const Index d = x.cols();
    Matrix out(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + kStandardizeEps);
        out.row(r) = (x.row(r).array() - mu) * inv_std(r);
    }
    Matrix xhat = out;
    return a.tape()->push(std::move(out), {a}, [a, xhat, inv_std](Tape& tp, const Matrix& g) {
        const double dd = static_cast<double>(xhat.cols());
        Matrix dx(xhat.rows(), xhat.cols());
        for (Index r = 0; r < xhat.rows(); ++r) {
            const double gsum = g.row(r).sum();
            const double gx = g.row(r).dot(xhat.row(r));
            dx.row(r) = (inv_std(r) / dd) * (dd * g.row(r).array() - gsum - xhat.row(r).array() * gx).matrix();
        }
        tp.accumulate(a, dx);
    });
}

/// Largest relative error between backward() gradients and central finite
/// differences over every element of every parameter.
inline double grad_check(const std::function<Tensor(Tape&)>& f, const std::vector<Parameter*>& params,
                         double eps = 1e-5) {
    for (auto* p : params) p->zero_grad();
    {
        Tape tape;
        const Tensor loss = f(tape);
        tape.backward(loss);
    }
    auto eval = [&]() {
        Tape tape(false);
        return f(tape).item();
    };
    double worst = 0.0;
    for (auto* p : params) {
        for (Index i = 0; i < p->value.size(); ++i) {
            double& v = p->value.data()[i];
            const double saved = v;
            v = saved + eps;
            const double up = eval();
            v = saved - eps;
            const double down = eval();
            v = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->grad.data()[i];
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic) / scale);
        }
    }
    return worst;
}

}  // namespace vrplab::ad
