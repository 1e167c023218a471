#pragma once

#include "sbrnn/nn/activations.hpp"
#include "sbrnn/nn/tape.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

namespace sbrnn::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap as_matrix(const Tensor& t)
{
    return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline MatrixMap as_matrix(Tensor& t)
{
    return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline MatrixMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols)
{
    return {data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                                    shape_string(b.shape));
}

// ---------------------------------------------------------------------------
// Element-wise

inline Var add(Tape& tape, Var a, Var b)
{
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_same_shape(x, y, "add");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        for (Var v : {a, b}) {
            if (!t.requires_grad(v)) continue;
            auto gv = t.grad(v);
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

inline Var sub(Tape& tape, Var a, Var b)
{
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_same_shape(x, y, "sub");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        if (t.requires_grad(a)) {
            auto ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            auto gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

/// Hadamard product.
inline Var mul(Tape& tape, Var a, Var b)
{
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_same_shape(x, y, "mul");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        const auto& xa = t.value(a).values;
        const auto& xb = t.value(b).values;
        if (t.requires_grad(a)) {
            auto ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
        }
        if (t.requires_grad(b)) {
            auto gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
        }
    });
}

inline Var scale(Tape& tape, Var a, double factor)
{
    Tensor out = tape.value(a);
    for (double& v : out.values) v *= factor;
    return tape.push(std::move(out), tape.requires_grad(a), [a, factor](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
}

/// 1 - a, element-wise.
inline Var one_minus(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (double& v : out.values) v = 1.0 - v;
    return tape.push(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
    });
}

inline Var relu(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (double& v : out.values) {
        tape.note_region(v > 0.0 ? 1 : 0);
        v = relu(v);
    }
    return tape.push(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto ga = t.grad(a);
        const auto& x = t.value(a).values;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * relu_derivative(x[i]);
    });
}

inline Var clip_tx(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (double& v : out.values) {
        tape.note_region(v <= 0.0 ? 0 : (v < kClipLevel ? 1 : 2));
        v = clip_tx(v);
    }
    return tape.push(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto ga = t.grad(a);
        const auto& x = t.value(a).values;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * clip_tx_derivative(x[i]);
    });
}

inline Var sigmoid(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (double& v : out.values) v = sigmoid(v);
    return tape.push(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto ga = t.grad(a);
        const auto& y = t.value(Var{self}).values;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

/// Element-wise sin; used by the modulator and by tests.
inline Var sin(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (double& v : out.values) v = std::sin(v);
    return tape.push(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto ga = t.grad(a);
        const auto& x = t.value(a).values;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(x[i]);
    });
}

// ---------------------------------------------------------------------------
// Dense layers

/// One column block of an affine layer's input: either a dense activation or
/// a one-hot selection (zero-based indices, one per row).
struct Segment {
    Var dense{};
    std::vector<std::size_t> indices;
    std::size_t width = 0;

    static Segment of(Var v, std::size_t width) { return {v, {}, width}; }
    static Segment onehot(std::vector<std::size_t> idx, std::size_t alphabet)
    {
        return {Var{}, std::move(idx), alphabet};
    }
    [[nodiscard]] bool is_onehot() const { return !dense.valid(); }
};

/// y = [s_1 s_2 ...] W^T + b without materializing the concatenation.
inline Var affine(Tape& tape, std::vector<Segment> segments, Var weight, Var bias)
{
    const Tensor& w = tape.value(weight);
    const Tensor& b = tape.value(bias);
    if (w.rank() != 2) throw std::invalid_argument("affine: weight must be a matrix");
    const std::size_t out_dim = w.rows();
    if (b.size() != out_dim) throw std::invalid_argument("affine: bias length mismatch");

    std::size_t in_dim = 0;
    std::size_t rows = Var::npos;
    bool rg = tape.requires_grad(weight) || tape.requires_grad(bias);
    for (const Segment& s : segments) {
        std::size_t r;
        if (s.is_onehot()) {
            r = s.indices.size();
            for (std::size_t i : s.indices)
                if (i >= s.width) throw std::out_of_range("affine: one-hot index out of range");
        } else {
            const Tensor& x = tape.value(s.dense);
            if (x.cols() != s.width)
                throw std::invalid_argument("affine: segment width " + std::to_string(x.cols()) + ", expected " +
                                            std::to_string(s.width));
            r = x.rows();
            rg = rg || tape.requires_grad(s.dense);
        }
        if (rows == Var::npos) rows = r;
        if (r != rows) throw std::invalid_argument("affine: segment row counts differ");
        in_dim += s.width;
    }
    if (in_dim != w.cols())
        throw std::invalid_argument("affine: input width " + std::to_string(in_dim) + " does not match weight " +
                                    shape_string(w.shape));

    Tensor out = Tensor::matrix(rows, out_dim);
    auto y = as_matrix(out);
    auto wm = as_matrix(w);
    y.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(b.values.data(), static_cast<Eigen::Index>(out_dim));
    Eigen::Index offset = 0;
    for (const Segment& s : segments) {
        const auto width = static_cast<Eigen::Index>(s.width);
        if (s.is_onehot()) {
            for (std::size_t r = 0; r < rows; ++r)
                y.row(static_cast<Eigen::Index>(r)) +=
                    wm.col(offset + static_cast<Eigen::Index>(s.indices[r])).transpose();
        } else {
            y.noalias() += as_matrix(tape.value(s.dense)) * wm.middleCols(offset, width).transpose();
        }
        offset += width;
    }

    auto segs = std::make_shared<const std::vector<Segment>>(std::move(segments));
    return tape.push(std::move(out), rg, [segs, weight, bias, rows, out_dim](Tape& t, std::size_t self) {
        auto g = as_matrix(t.grad(self), rows, out_dim);
        const Tensor& w = t.value(weight);
        auto wm = as_matrix(w);
        if (t.requires_grad(bias)) {
            auto gb = t.grad(bias);
            Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<Eigen::Index>(out_dim)) += g.colwise().sum();
        }
        const bool need_w = t.requires_grad(weight);
        std::span<double> gw_span = need_w ? t.grad(weight) : std::span<double>{};
        Eigen::Index offset = 0;
        for (const Segment& s : *segs) {
            const auto width = static_cast<Eigen::Index>(s.width);
            if (s.is_onehot()) {
                if (need_w) {
                    auto gw = as_matrix(gw_span, w.rows(), w.cols());
                    for (std::size_t r = 0; r < rows; ++r)
                        gw.col(offset + static_cast<Eigen::Index>(s.indices[r])) +=
                            g.row(static_cast<Eigen::Index>(r)).transpose();
                }
            } else {
                if (need_w) {
                    auto gw = as_matrix(gw_span, w.rows(), w.cols());
                    gw.middleCols(offset, width).noalias() += g.transpose() * as_matrix(t.value(s.dense));
                }
                if (t.requires_grad(s.dense)) {
                    auto gx = as_matrix(t.grad(s.dense), rows, s.width);
                    gx.noalias() += g * wm.middleCols(offset, width);
                }
            }
            offset += width;
        }
    });
}

inline Var affine(Tape& tape, Var x, Var weight, Var bias)
{
    return affine(tape, {Segment::of(x, tape.value(x).cols())}, weight, bias);
}

// ---------------------------------------------------------------------------
// Readout and loss

/// Row-wise softmax.
inline Var softmax(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_into(out.row(r), out.row(r));
    return tape.push(std::move(out), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        const Tensor& y = t.value(Var{self});
        auto g = t.grad(self);
        auto ga = t.grad(a);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y(r, c);
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += y(r, c) * (g[r * cols + c] - dot);
        }
    });
}

/// Mean over rows of -log(max(p[row, target[row]], floor)). Targets are
/// zero-based.
inline Var cross_entropy(Tape& tape, Var probs, std::vector<std::size_t> targets)
{
    const Tensor& p = tape.value(probs);
    if (targets.size() != p.rows()) throw std::invalid_argument("cross_entropy: target count mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) total += cross_entropy(p.row(r), targets[r]);
    const double inv = 1.0 / static_cast<double>(p.rows());
    Tensor out({1}, total * inv);
    return tape.push(std::move(out), tape.requires_grad(probs),
                     [probs, inv, tg = std::move(targets)](Tape& t, std::size_t self) {
                         const double g = t.grad(self)[0];
                         const Tensor& p = t.value(probs);
                         auto gp = t.grad(probs);
                         for (std::size_t r = 0; r < tg.size(); ++r) {
                             const double v = p(r, tg[r]);
                             if (v > kLogFloor) gp[r * p.cols() + tg[r]] -= g * inv / v;
                         }
                     });
}

/// Sum of all entries, returned as a scalar.
inline Var sum(Tape& tape, Var a)
{
    const Tensor& x = tape.value(a);
    double total = 0.0;
    for (double v : x.values) total += v;
    return tape.push(Tensor({1}, total), tape.requires_grad(a), [a](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (double& v : t.grad(a)) v += g;
    });
}

/// sum(a ⊙ weights) with constant weights; a convenient scalar probe for
/// gradient tests.
inline Var weighted_sum(Tape& tape, Var a, std::vector<double> weights)
{
    const Tensor& x = tape.value(a);
    if (weights.size() != x.size()) throw std::invalid_argument("weighted_sum: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * weights[i];
    return tape.push(Tensor({1}, total), tape.requires_grad(a), [a, w = std::move(weights)](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto ga = t.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
    });
}

/// Sum of scalar nodes.
inline Var add_scalars(Tape& tape, const std::vector<Var>& terms)
{
    double total = 0.0;
    bool rg = false;
    for (Var v : terms) {
        if (tape.value(v).size() != 1) throw std::invalid_argument("add_scalars: non-scalar term");
        total += tape.value(v)[0];
        rg = rg || tape.requires_grad(v);
    }
    return tape.push(Tensor({1}, total), rg, [terms](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (Var v : terms)
            if (t.requires_grad(v)) t.grad(v)[0] += g;
    });
}

// ---------------------------------------------------------------------------
// Layout

/// Rows of `a` selected by `rows` (repeats allowed).
inline Var gather_rows(Tape& tape, Var a, std::vector<std::size_t> rows)
{
    const Tensor& x = tape.value(a);
    const std::size_t cols = x.cols();
    Tensor out = Tensor::matrix(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= x.rows()) throw std::out_of_range("gather_rows: row out of range");
        std::copy_n(x.values.begin() + static_cast<std::ptrdiff_t>(rows[r] * cols), cols,
                    out.values.begin() + static_cast<std::ptrdiff_t>(r * cols));
    }
    return tape.push(std::move(out), tape.requires_grad(a),
                     [a, cols, rs = std::move(rows)](Tape& t, std::size_t self) {
                         auto g = t.grad(self);
                         auto ga = t.grad(a);
                         for (std::size_t r = 0; r < rs.size(); ++r)
                             for (std::size_t c = 0; c < cols; ++c) ga[rs[r] * cols + c] += g[r * cols + c];
                     });
}

/// Stacks equally wide matrices on top of each other.
inline Var concat_rows(Tape& tape, const std::vector<Var>& parts)
{
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const std::size_t cols = tape.value(parts[0]).cols();
    std::size_t rows = 0;
    bool rg = false;
    for (Var v : parts) {
        if (tape.value(v).cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
        rows += tape.value(v).rows();
        rg = rg || tape.requires_grad(v);
    }
    Tensor out = Tensor::matrix(rows, cols);
    auto it = out.values.begin();
    for (Var v : parts) it = std::copy(tape.value(v).values.begin(), tape.value(v).values.end(), it);
    return tape.push(std::move(out), rg, [parts](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        std::size_t pos = 0;
        for (Var v : parts) {
            const std::size_t len = t.value(v).size();
            if (t.requires_grad(v)) {
                auto gv = t.grad(v);
                for (std::size_t i = 0; i < len; ++i) gv[i] += g[pos + i];
            }
            pos += len;
        }
    });
}

/// Treats `series` (any shape) as consecutive blocks of `block_len` samples and
/// returns the selected blocks as rows.
inline Var gather_blocks(Tape& tape, Var series, std::vector<std::size_t> blocks, std::size_t block_len)
{
    const Tensor& s = tape.value(series);
    if (block_len == 0 || s.size() % block_len != 0)
        throw std::invalid_argument("gather_blocks: series length is not a multiple of the block length");
    const std::size_t total = s.size() / block_len;
    Tensor out = Tensor::matrix(blocks.size(), block_len);
    for (std::size_t r = 0; r < blocks.size(); ++r) {
        if (blocks[r] >= total) throw std::out_of_range("gather_blocks: block out of range");
        std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(blocks[r] * block_len), block_len,
                    out.values.begin() + static_cast<std::ptrdiff_t>(r * block_len));
    }
    return tape.push(std::move(out), tape.requires_grad(series),
                     [series, block_len, bs = std::move(blocks)](Tape& t, std::size_t self) {
                         auto g = t.grad(self);
                         auto gs = t.grad(series);
                         for (std::size_t r = 0; r < bs.size(); ++r)
                             for (std::size_t c = 0; c < block_len; ++c)
                                 gs[bs[r] * block_len + c] += g[r * block_len + c];
                     });
}

/// Rows of `len` consecutive samples of `series` starting at each entry of
/// `starts` (windows may overlap).
inline Var gather_windows(Tape& tape, Var series, std::vector<std::size_t> starts, std::size_t len)
{
    const Tensor& s = tape.value(series);
    Tensor out = Tensor::matrix(starts.size(), len);
    for (std::size_t r = 0; r < starts.size(); ++r) {
        if (starts[r] + len > s.size()) throw std::out_of_range("gather_windows: window exceeds series");
        std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(starts[r]), len,
                    out.values.begin() + static_cast<std::ptrdiff_t>(r * len));
    }
    return tape.push(std::move(out), tape.requires_grad(series),
                     [series, len, st = std::move(starts)](Tape& t, std::size_t self) {
                         auto g = t.grad(self);
                         auto gs = t.grad(series);
                         for (std::size_t r = 0; r < st.size(); ++r)
                             for (std::size_t c = 0; c < len; ++c) gs[st[r] + c] += g[r * len + c];
                     });
}

/// Inverse of gather_blocks: row r of parts[k] is written to block
/// placement[k][r] of a 1 x (total_blocks * block_len) series. Every block
/// must be written exactly once.
inline Var scatter_blocks(Tape& tape, const std::vector<Var>& parts,
                          std::vector<std::vector<std::size_t>> placement, std::size_t total_blocks)
{
    if (parts.size() != placement.size() || parts.empty())
        throw std::invalid_argument("scatter_blocks: placement does not match parts");
    const std::size_t block_len = tape.value(parts[0]).cols();
    Tensor out = Tensor::matrix(1, total_blocks * block_len);
    std::vector<char> written(total_blocks, 0);
    bool rg = false;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& p = tape.value(parts[k]);
        if (p.cols() != block_len || p.rows() != placement[k].size())
            throw std::invalid_argument("scatter_blocks: part shape mismatch");
        rg = rg || tape.requires_grad(parts[k]);
        for (std::size_t r = 0; r < p.rows(); ++r) {
            const std::size_t blk = placement[k][r];
            if (blk >= total_blocks || written[blk]) throw std::invalid_argument("scatter_blocks: bad placement");
            written[blk] = 1;
            std::copy_n(p.values.begin() + static_cast<std::ptrdiff_t>(r * block_len), block_len,
                        out.values.begin() + static_cast<std::ptrdiff_t>(blk * block_len));
        }
    }
    for (char w : written)
        if (!w) throw std::invalid_argument("scatter_blocks: block left unwritten");
    return tape.push(std::move(out), rg, [parts, block_len, pl = std::move(placement)](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        for (std::size_t k = 0; k < parts.size(); ++k) {
            if (!t.requires_grad(parts[k])) continue;
            auto gp = t.grad(parts[k]);
            for (std::size_t r = 0; r < pl[k].size(); ++r)
                for (std::size_t c = 0; c < block_len; ++c)
                    gp[r * block_len + c] += g[pl[k][r] * block_len + c];
        }
    });
}

} // namespace sbrnn::nn
