#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "merc/kernels.hpp"
#include "merc/matrix.hpp"

namespace merc {

// Probability floor used inside cross-entropy so log never sees an exact 0.
inline constexpr double kProbFloor = 1e-12;

template <typename T>
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over matrix-valued nodes. Each op records its output
/// value and a closure that routes the output gradient to the parents.
/// Nodes are appended in evaluation order, so walking the tape backwards is
/// a valid topological order. One tape evaluates one expression; parameters
/// enter as leaves that export their gradient to an external accumulator.
template <typename T>
class Tape {
  public:
    Var<T> input(Mat<T> value) { return push_leaf(std::move(value), nullptr, nullptr); }
    Var<T> input_ref(const Mat<T>* value) { return push_leaf(Mat<T>(), value, nullptr); }
    Var<T> param(const Mat<T>* value, Mat<T>* grad_sink) { return push_leaf(Mat<T>(), value, grad_sink); }

    const Mat<T>& val(Var<T> v) const {
        const Node& n = nodes_[v.id];
        return n.ext ? *n.ext : n.owned;
    }
    Mat<T>& grad(Var<T> v) { return nodes_[v.id].grad; }
    size_t size() const { return nodes_.size(); }

    /// Extension point for fused ops: value plus an arbitrary backward.
    Var<T> push(Mat<T> value, std::function<void(Tape&)> backward) {
        Node n;
        n.owned = std::move(value);
        n.grad = Mat<T>(n.owned.rows(), n.owned.cols());
        n.back = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var<T>{static_cast<int>(nodes_.size()) - 1};
    }

    // ---- primitive ops ----

    Var<T> matmul(Var<T> a, Var<T> b) {
        const Mat<T>&A = val(a), &B = val(b);
        if (A.cols() != B.rows()) throw ShapeError("matmul: " + A.shape_str() + " * " + B.shape_str());
        Mat<T> c = kernels::matmul_nn(A, B);
        return push(std::move(c), [a, b, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            kernels::matmul_nt_acc(up, t.val(b), t.grad(a));
            kernels::matmul_tn_acc(t.val(a), up, t.grad(b));
        });
    }

    /// x * C with a constant right factor (e.g. a fine->coarse group matrix).
    Var<T> matmul_const(Var<T> x, Mat<T> c) {
        const Mat<T>& X = val(x);
        if (X.cols() != c.rows()) throw ShapeError("matmul_const: " + X.shape_str() + " * " + c.shape_str());
        Mat<T> y = kernels::matmul_nn(X, c);
        return push(std::move(y), [x, c = std::move(c), self = next_id()](Tape& t) {
            kernels::matmul_nt_acc(t.nodes_[self].grad, c, t.grad(x));
        });
    }

    Var<T> add(Var<T> a, Var<T> b) {
        const Mat<T>&A = val(a), &B = val(b);
        check_same_shape(A, B, "add");
        Mat<T> y(A.rows(), A.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = A.data()[i] + B.data()[i];
        return push(std::move(y), [a, b, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>&ga = t.grad(a), &gb = t.grad(b);
            for (size_t i = 0; i < up.size(); ++i) {
                ga.data()[i] += up.data()[i];
                gb.data()[i] += up.data()[i];
            }
        });
    }

    Var<T> mul(Var<T> a, Var<T> b) {
        const Mat<T>&A = val(a), &B = val(b);
        check_same_shape(A, B, "mul");
        Mat<T> y(A.rows(), A.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = A.data()[i] * B.data()[i];
        return push(std::move(y), [a, b, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            const Mat<T>&A = t.val(a), &B = t.val(b);
            Mat<T>&ga = t.grad(a), &gb = t.grad(b);
            for (size_t i = 0; i < up.size(); ++i) {
                ga.data()[i] += up.data()[i] * B.data()[i];
                gb.data()[i] += up.data()[i] * A.data()[i];
            }
        });
    }

    /// y = scale * x + shift, elementwise with scalar constants.
    Var<T> affine(Var<T> x, T scale, T shift) {
        const Mat<T>& X = val(x);
        Mat<T> y(X.rows(), X.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = scale * X.data()[i] + shift;
        return push(std::move(y), [x, scale, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < up.size(); ++i) gx.data()[i] += scale * up.data()[i];
        });
    }

    Var<T> scale(Var<T> x, T s) { return affine(x, s, T(0)); }

    Var<T> add_bias(Var<T> x, Var<T> bias) {
        const Mat<T>&X = val(x), &B = val(bias);
        if (B.rows() != 1 || B.cols() != X.cols())
            throw ShapeError("add_bias: " + X.shape_str() + " + " + B.shape_str());
        Mat<T> y(X.rows(), X.cols());
        for (int r = 0; r < X.rows(); ++r)
            for (int c = 0; c < X.cols(); ++c) y(r, c) = X(r, c) + B(0, c);
        return push(std::move(y), [x, bias, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>&gx = t.grad(x), &gb = t.grad(bias);
            for (int r = 0; r < up.rows(); ++r)
                for (int c = 0; c < up.cols(); ++c) {
                    gx(r, c) += up(r, c);
                    gb(0, c) += up(r, c);
                }
        });
    }

    /// ReLU; the subgradient at exactly 0 is 0.
    Var<T> relu(Var<T> x) {
        const Mat<T>& X = val(x);
        Mat<T> y(X.rows(), X.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = X.data()[i] > T(0) ? X.data()[i] : T(0);
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            const Mat<T>& X = t.val(x);
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < up.size(); ++i)
                if (X.data()[i] > T(0)) gx.data()[i] += up.data()[i];
        });
    }

    Var<T> sigmoid(Var<T> x) {
        const Mat<T>& X = val(x);
        Mat<T> y(X.rows(), X.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = T(1) / (T(1) + std::exp(-X.data()[i]));
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            const Mat<T>& Y = t.nodes_[self].owned;
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < up.size(); ++i)
                gx.data()[i] += up.data()[i] * Y.data()[i] * (T(1) - Y.data()[i]);
        });
    }

    Var<T> tanh_(Var<T> x) {
        const Mat<T>& X = val(x);
        Mat<T> y(X.rows(), X.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = std::tanh(X.data()[i]);
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            const Mat<T>& Y = t.nodes_[self].owned;
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < up.size(); ++i)
                gx.data()[i] += up.data()[i] * (T(1) - Y.data()[i] * Y.data()[i]);
        });
    }

    Var<T> softmax_rows(Var<T> x) {
        Mat<T> y = kernels::softmax_rows(val(x));
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            const Mat<T>& Y = t.nodes_[self].owned;
            Mat<T>& gx = t.grad(x);
            for (int r = 0; r < up.rows(); ++r) {
                T dot = T(0);
                for (int c = 0; c < up.cols(); ++c) dot += up(r, c) * Y(r, c);
                for (int c = 0; c < up.cols(); ++c) gx(r, c) += Y(r, c) * (up(r, c) - dot);
            }
        });
    }

    /// Per-row standardization followed by a learned 1xC gain and bias.
    Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
        if (!(eps > T(0))) throw ConfigError("layer_norm eps must be > 0");
        const Mat<T>&X = val(x), &G = val(gain), &B = val(bias);
        if (G.rows() != 1 || G.cols() != X.cols() || B.rows() != 1 || B.cols() != X.cols())
            throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(X.cols()));
        const int R = X.rows(), C = X.cols();
        Mat<T> xhat(R, C);
        std::vector<T> rstd(R);
        for (int r = 0; r < R; ++r) {
            T mean = T(0);
            for (int c = 0; c < C; ++c) mean += X(r, c);
            mean /= T(C);
            T var = T(0);
            for (int c = 0; c < C; ++c) {
                T d = X(r, c) - mean;
                var += d * d;
            }
            var /= T(C);
            rstd[r] = T(1) / std::sqrt(var + eps);
            for (int c = 0; c < C; ++c) xhat(r, c) = (X(r, c) - mean) * rstd[r];
        }
        Mat<T> y(R, C);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) y(r, c) = G(0, c) * xhat(r, c) + B(0, c);
        return push(std::move(y),
                    [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd), self = next_id()](Tape& t) {
                        const Mat<T>& up = t.nodes_[self].grad;
                        const Mat<T>& G = t.val(gain);
                        Mat<T>&gx = t.grad(x), &gg = t.grad(gain), &gb = t.grad(bias);
                        const int R = up.rows(), C = up.cols();
                        for (int r = 0; r < R; ++r) {
                            T m1 = T(0), m2 = T(0);
                            for (int c = 0; c < C; ++c) {
                                const T dxh = up(r, c) * G(0, c);
                                m1 += dxh;
                                m2 += dxh * xhat(r, c);
                                gg(0, c) += up(r, c) * xhat(r, c);
                                gb(0, c) += up(r, c);
                            }
                            m1 /= T(C);
                            m2 /= T(C);
                            for (int c = 0; c < C; ++c) {
                                const T dxh = up(r, c) * G(0, c);
                                gx(r, c) += rstd[r] * (dxh - m1 - xhat(r, c) * m2);
                            }
                        }
                    });
    }

    Var<T> transpose(Var<T> x) {
        const Mat<T>& X = val(x);
        Mat<T> y(X.cols(), X.rows());
        for (int r = 0; r < X.rows(); ++r)
            for (int c = 0; c < X.cols(); ++c) y(c, r) = X(r, c);
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>& gx = t.grad(x);
            for (int r = 0; r < up.rows(); ++r)
                for (int c = 0; c < up.cols(); ++c) gx(c, r) += up(r, c);
        });
    }

    Var<T> concat_cols(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ConfigError("concat_cols: empty list");
        const int R = val(parts[0]).rows();
        int C = 0;
        for (auto p : parts) {
            if (val(p).rows() != R) throw ShapeError("concat_cols: row mismatch");
            C += val(p).cols();
        }
        Mat<T> y(R, C);
        int off = 0;
        for (auto p : parts) {
            const Mat<T>& P = val(p);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < P.cols(); ++c) y(r, off + c) = P(r, c);
            off += P.cols();
        }
        return push(std::move(y), [parts, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            int off = 0;
            for (auto p : parts) {
                Mat<T>& gp = t.grad(p);
                for (int r = 0; r < gp.rows(); ++r)
                    for (int c = 0; c < gp.cols(); ++c) gp(r, c) += up(r, off + c);
                off += gp.cols();
            }
        });
    }

    Var<T> concat_rows(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ConfigError("concat_rows: empty list");
        const int C = val(parts[0]).cols();
        int R = 0;
        for (auto p : parts) {
            if (val(p).cols() != C) throw ShapeError("concat_rows: column mismatch");
            R += val(p).rows();
        }
        Mat<T> y(R, C);
        int off = 0;
        for (auto p : parts) {
            const Mat<T>& P = val(p);
            for (int r = 0; r < P.rows(); ++r)
                for (int c = 0; c < C; ++c) y(off + r, c) = P(r, c);
            off += P.rows();
        }
        return push(std::move(y), [parts, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            int off = 0;
            for (auto p : parts) {
                Mat<T>& gp = t.grad(p);
                for (int r = 0; r < gp.rows(); ++r)
                    for (int c = 0; c < gp.cols(); ++c) gp(r, c) += up(off + r, c);
                off += gp.rows();
            }
        });
    }

    Var<T> row_select(Var<T> x, int r) {
        const Mat<T>& X = val(x);
        if (r < 0 || r >= X.rows()) throw ShapeError("row_select: row " + std::to_string(r) + " of " + X.shape_str());
        Mat<T> y(1, X.cols());
        for (int c = 0; c < X.cols(); ++c) y(0, c) = X(r, c);
        return push(std::move(y), [x, r, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>& gx = t.grad(x);
            for (int c = 0; c < up.cols(); ++c) gx(r, c) += up(0, c);
        });
    }

    Var<T> gather_rows(Var<T> x, std::vector<int> idx) {
        const Mat<T>& X = val(x);
        Mat<T> y(static_cast<int>(idx.size()), X.cols());
        for (size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] < 0 || idx[k] >= X.rows()) throw ShapeError("gather_rows: index out of range");
            for (int c = 0; c < X.cols(); ++c) y(static_cast<int>(k), c) = X(idx[k], c);
        }
        return push(std::move(y), [x, idx = std::move(idx), self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>& gx = t.grad(x);
            for (size_t k = 0; k < idx.size(); ++k)
                for (int c = 0; c < up.cols(); ++c) gx(idx[k], c) += up(static_cast<int>(k), c);
        });
    }

    /// Scales row r by the constant factors[r] (dropout-style masking).
    Var<T> row_scale_const(Var<T> x, std::vector<T> factors) {
        const Mat<T>& X = val(x);
        if (static_cast<int>(factors.size()) != X.rows()) throw ShapeError("row_scale_const: factor count");
        Mat<T> y(X.rows(), X.cols());
        for (int r = 0; r < X.rows(); ++r)
            for (int c = 0; c < X.cols(); ++c) y(r, c) = factors[r] * X(r, c);
        return push(std::move(y), [x, factors = std::move(factors), self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            Mat<T>& gx = t.grad(x);
            for (int r = 0; r < up.rows(); ++r)
                for (int c = 0; c < up.cols(); ++c) gx(r, c) += factors[r] * up(r, c);
        });
    }

    Var<T> clamp_min(Var<T> x, T lo) {
        const Mat<T>& X = val(x);
        Mat<T> y(X.rows(), X.cols());
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = X.data()[i] > lo ? X.data()[i] : lo;
        return push(std::move(y), [x, lo, self = next_id()](Tape& t) {
            const Mat<T>& up = t.nodes_[self].grad;
            const Mat<T>& X = t.val(x);
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < up.size(); ++i)
                if (X.data()[i] > lo) gx.data()[i] += up.data()[i];
        });
    }

    /// Sum of all entries, as a 1x1 node.
    Var<T> sum_all(Var<T> x) {
        const Mat<T>& X = val(x);
        T s = T(0);
        for (size_t i = 0; i < X.size(); ++i) s += X.data()[i];
        Mat<T> y(1, 1);
        y(0, 0) = s;
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const T up = t.nodes_[self].grad(0, 0);
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < gx.size(); ++i) gx.data()[i] += up;
        });
    }

    /// Sum of squares of all entries, as a 1x1 node.
    Var<T> l2_sq_norm(Var<T> x) {
        const Mat<T>& X = val(x);
        T s = T(0);
        for (size_t i = 0; i < X.size(); ++i) s += X.data()[i] * X.data()[i];
        Mat<T> y(1, 1);
        y(0, 0) = s;
        return push(std::move(y), [x, self = next_id()](Tape& t) {
            const T up = t.nodes_[self].grad(0, 0);
            const Mat<T>& X = t.val(x);
            Mat<T>& gx = t.grad(x);
            for (size_t i = 0; i < X.size(); ++i) gx.data()[i] += T(2) * X.data()[i] * up;
        });
    }

    /// Sum over rows of -log p[r, labels[r]], floored so log never overflows.
    Var<T> cross_entropy_rows(Var<T> p, std::vector<int> labels) {
        const Mat<T>& P = val(p);
        if (static_cast<int>(labels.size()) != P.rows()) throw ShapeError("cross_entropy_rows: label count");
        T s = T(0);
        for (int r = 0; r < P.rows(); ++r) {
            if (labels[r] < 0 || labels[r] >= P.cols()) throw TaxonomyError("label index out of range");
            const T pv = P(r, labels[r]);
            s += -std::log(pv > T(kProbFloor) ? pv : T(kProbFloor));
        }
        Mat<T> y(1, 1);
        y(0, 0) = s;
        return push(std::move(y), [p, labels = std::move(labels), self = next_id()](Tape& t) {
            const T up = t.nodes_[self].grad(0, 0);
            const Mat<T>& P = t.val(p);
            Mat<T>& gp = t.grad(p);
            for (int r = 0; r < P.rows(); ++r) {
                const T pv = P(r, labels[r]);
                if (pv > T(kProbFloor)) gp(r, labels[r]) += -up / pv;
            }
        });
    }

    /// Seeds the loss gradient and runs all backward closures in reverse
    /// order, then exports leaf gradients into their sinks. Single use.
    T backward(Var<T> loss, T seed = T(1)) {
        if (backward_done_) throw StateError("tape backward already run");
        const Mat<T>& L = val(loss);
        if (L.rows() != 1 || L.cols() != 1) throw ShapeError("backward target must be 1x1, got " + L.shape_str());
        backward_done_ = true;
        nodes_[loss.id].grad(0, 0) = seed;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
            if (nodes_[i].back) nodes_[i].back(*this);
        for (auto& n : nodes_)
            if (n.sink) {
                check_same_shape(*n.sink, n.grad, "gradient sink");
                for (size_t i = 0; i < n.grad.size(); ++i) n.sink->data()[i] += n.grad.data()[i];
            }
        return L(0, 0);
    }

  private:
    struct Node {
        Mat<T> owned;
        const Mat<T>* ext = nullptr;
        Mat<T> grad;
        std::function<void(Tape&)> back;
        Mat<T>* sink = nullptr;
    };

    int next_id() const { return static_cast<int>(nodes_.size()); }

    Var<T> push_leaf(Mat<T> owned, const Mat<T>* ext, Mat<T>* sink) {
        Node n;
        n.owned = std::move(owned);
        n.ext = ext;
        const Mat<T>& v = ext ? *ext : n.owned;
        n.grad = Mat<T>(v.rows(), v.cols());
        n.sink = sink;
        nodes_.push_back(std::move(n));
        return Var<T>{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace merc
