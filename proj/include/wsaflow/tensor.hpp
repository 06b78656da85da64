#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wsaflow/errors.hpp"

namespace wsaflow {

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
    long long n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("tensor extents must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Plain N x K index matrix used by gather-style ops.
struct IndexTable {
    int rows = 0;
    int cols = 0;
    std::vector<int> idx;  // row-major, rows*cols entries

    int at(int r, int c) const { return idx[size_t(r) * cols + c]; }
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until backward touches this node
    bool requires_grad = false;
    bool leaf = true;
    bool backward_done = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this->grad, accumulates into parents' grads.
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

// Lightweight handle to a node in the computation graph. Copies share storage.
template <typename T>
class TensorT {
   public:
    TensorT() = default;
    explicit TensorT(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

    static TensorT zeros(Shape s, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode<T>>();
        n->value.assign(size_t(shape_numel(s)), T(0));
        n->shape = std::move(s);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT full(Shape s, T v, bool requires_grad = false) {
        auto t = zeros(std::move(s), requires_grad);
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }

    static TensorT from_data(Shape s, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(s) != (long long)data.size())
            throw DimensionError("from_data: shape " + shape_str(s) + " does not match " +
                                 std::to_string(data.size()) + " values");
        for (T v : data)
            if (!std::isfinite(double(v))) throw NumericError("from_data: non-finite value");
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(s);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT scalar(T v) { return from_data({1}, {v}); }

    bool defined() const { return bool(node_); }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return int(node_->shape.size()); }
    int dim(int i) const { return node_->shape[size_t(i)]; }
    long long size() const { return (long long)node_->value.size(); }
    const std::vector<T>& value() const { return node_->value; }
    // Mutable access for parameter updates; caller owns graph hygiene.
    std::vector<T>& raw_value() { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty()) throw ContractError("grad accessed before backward");
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    T item() const {
        if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    T at(std::initializer_list<int> ix) const {
        const Shape& s = node_->shape;
        if (ix.size() != s.size()) throw DimensionError("at(): rank mismatch");
        long long flat = 0;
        size_t d = 0;
        for (int i : ix) {
            if (i < 0 || i >= s[d]) throw IndexError("at(): index out of range");
            flat = flat * s[d] + i;
            ++d;
        }
        return node_->value[size_t(flat)];
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    // True if `other` appears in this tensor's ancestry (inclusive).
    bool depends_on(const TensorT& other) const {
        if (!node_ || !other.node_) return false;
        std::unordered_set<const TensorNode<T>*> seen;
        std::vector<const TensorNode<T>*> stack{node_.get()};
        while (!stack.empty()) {
            const TensorNode<T>* n = stack.back();
            stack.pop_back();
            if (n == other.node_.get()) return true;
            if (!seen.insert(n).second) continue;
            for (const auto& p : n->parents) stack.push_back(p.get());
        }
        return false;
    }

   private:
    std::shared_ptr<TensorNode<T>> node_;
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    for (T x : v)
        if (!std::isfinite(double(x))) throw NumericError(std::string(op) + ": non-finite input");
}

template <typename T>
inline std::shared_ptr<TensorNode<T>> make_node(Shape s, const char* op,
                                                std::vector<std::shared_ptr<TensorNode<T>>> parents) {
    auto n = std::make_shared<TensorNode<T>>();
    n->value.assign(size_t(shape_numel(s)), T(0));
    n->shape = std::move(s);
    n->leaf = false;
    n->op = op;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents = std::move(parents);
    return n;
}

inline long long rows_of(const Shape& s) {
    long long r = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
    return r;
}

template <typename T>
inline void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_same_shape(a, b, "add");
    auto n = detail::make_node<T>(a.shape(), "add", {a.node(), b.node()});
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] + bv[i];
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            for (int p = 0; p < 2; ++p) {
                auto& par = *self.parents[p];
                if (!par.requires_grad) continue;
                par.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_same_shape(a, b, "sub");
    auto n = detail::make_node<T>(a.shape(), "sub", {a.node(), b.node()});
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] - bv[i];
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_same_shape(a, b, "mul");
    auto n = detail::make_node<T>(a.shape(), "mul", {a.node(), b.node()});
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * bv[i];
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
    auto n = detail::make_node<T>(a.shape(), "scale", {a.node()});
    const auto& av = a.value();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * c;
    if (n->requires_grad) {
        n->backprop = [c](TensorNode<T>& self) {
            auto& pa = *self.parents[0];
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * c;
        };
    }
    return TensorT<T>(n);
}

// y = x W + b over the last axis; x: [.., Cin], W: [Cin, Cout], b: [Cout].
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.ndim() < 1 || w.ndim() != 2 || b.ndim() != 1)
        throw DimensionError("linear: expected x[..,Cin], W[Cin,Cout], b[Cout]");
    const int ci = x.dim(x.ndim() - 1);
    const int co = w.dim(1);
    if (w.dim(0) != ci)
        throw DimensionError("linear: inner extent mismatch, x " + shape_str(x.shape()) + " vs W " +
                             shape_str(w.shape()));
    if (b.dim(0) != co) throw DimensionError("linear: bias extent mismatch");
    detail::check_finite(x.value(), "linear");
    detail::check_finite(w.value(), "linear");
    detail::check_finite(b.value(), "linear");

    Shape out_shape = x.shape();
    out_shape.back() = co;
    const long long rows = detail::rows_of(x.shape());
    auto n = detail::make_node<T>(out_shape, "linear", {x.node(), w.node(), b.node()});
    const T* xv = x.value().data();
    const T* wv = w.value().data();
    const T* bv = b.value().data();
    T* yv = n->value.data();
    for (long long r = 0; r < rows; ++r) {
        T* yrow = yv + r * co;
        for (int c = 0; c < co; ++c) yrow[c] = bv[c];
        const T* xrow = xv + r * ci;
        for (int i = 0; i < ci; ++i) {
            const T xi = xrow[i];
            const T* wrow = wv + (long long)i * co;
            for (int c = 0; c < co; ++c) yrow[c] += xi * wrow[c];
        }
    }
    if (n->requires_grad) {
        n->backprop = [rows, ci, co](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            auto& pb = *self.parents[2];
            const T* g = self.grad.data();
            if (px.requires_grad) {
                px.ensure_grad();
                T* gx = px.grad.data();
                const T* wv = pw.value.data();
                for (long long r = 0; r < rows; ++r) {
                    const T* grow = g + r * co;
                    T* gxrow = gx + r * ci;
                    for (int i = 0; i < ci; ++i) {
                        const T* wrow = wv + (long long)i * co;
                        T acc = 0;
                        for (int c = 0; c < co; ++c) acc += grow[c] * wrow[c];
                        gxrow[i] += acc;
                    }
                }
            }
            if (pw.requires_grad) {
                pw.ensure_grad();
                T* gw = pw.grad.data();
                const T* xv = px.value.data();
                for (long long r = 0; r < rows; ++r) {
                    const T* grow = g + r * co;
                    const T* xrow = xv + r * ci;
                    for (int i = 0; i < ci; ++i) {
                        const T xi = xrow[i];
                        T* gwrow = gw + (long long)i * co;
                        for (int c = 0; c < co; ++c) gwrow[c] += xi * grow[c];
                    }
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                T* gb = pb.grad.data();
                for (long long r = 0; r < rows; ++r) {
                    const T* grow = g + r * co;
                    for (int c = 0; c < co; ++c) gb[c] += grow[c];
                }
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    detail::check_finite(x.value(), "relu");
    auto n = detail::make_node<T>(x.shape(), "relu", {x.node()});
    const auto& xv = x.value();
    for (size_t i = 0; i < xv.size(); ++i) n->value[i] = xv[i] > T(0) ? xv[i] : T(0);
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (px.value[i] > T(0)) px.grad[i] += self.grad[i];
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, T slope) {
    detail::check_finite(x.value(), "leaky_relu");
    auto n = detail::make_node<T>(x.shape(), "leaky_relu", {x.node()});
    const auto& xv = x.value();
    for (size_t i = 0; i < xv.size(); ++i) n->value[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
    if (n->requires_grad) {
        n->backprop = [slope](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                px.grad[i] += px.value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
        };
    }
    return TensorT<T>(n);
}

// Softmax over the last axis, stabilized by max subtraction.
template <typename T>
TensorT<T> softmax(const TensorT<T>& x) {
    detail::check_finite(x.value(), "softmax");
    const int k = x.dim(x.ndim() - 1);
    const long long rows = detail::rows_of(x.shape());
    auto n = detail::make_node<T>(x.shape(), "softmax", {x.node()});
    const T* xv = x.value().data();
    T* yv = n->value.data();
    for (long long r = 0; r < rows; ++r) {
        const T* xr = xv + r * k;
        T* yr = yv + r * k;
        T mx = xr[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
        T sum = 0;
        for (int i = 0; i < k; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            sum += yr[i];
        }
        const T inv = T(1) / sum;
        for (int i = 0; i < k; ++i) yr[i] *= inv;
    }
    if (n->requires_grad) {
        n->backprop = [rows, k](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            const T* y = self.value.data();
            const T* g = self.grad.data();
            T* gx = px.grad.data();
            for (long long r = 0; r < rows; ++r) {
                const T* yr = y + r * k;
                const T* gr = g + r * k;
                T dot = 0;
                for (int i = 0; i < k; ++i) dot += gr[i] * yr[i];
                T* gxr = gx + r * k;
                for (int i = 0; i < k; ++i) gxr[i] += (gr[i] - dot) * yr[i];
            }
        };
    }
    return TensorT<T>(n);
}

// out[i,k,:] = features[idx[i,k],:]; gradient scatter-adds into features.
template <typename T>
TensorT<T> gather(const TensorT<T>& features, const IndexTable& table) {
    if (features.ndim() != 2) throw DimensionError("gather: features must be [M,C]");
    const int m = features.dim(0);
    const int c = features.dim(1);
    for (int v : table.idx)
        if (v < 0 || v >= m)
            throw IndexError("gather: index " + std::to_string(v) + " out of range [0," +
                             std::to_string(m) + ")");
    auto n = detail::make_node<T>({table.rows, table.cols, c}, "gather", {features.node()});
    const T* f = features.value().data();
    T* y = n->value.data();
    const long long nk = (long long)table.rows * table.cols;
    for (long long j = 0; j < nk; ++j) {
        const T* src = f + (long long)table.idx[size_t(j)] * c;
        std::copy(src, src + c, y + j * c);
    }
    if (n->requires_grad) {
        auto idx = table.idx;  // keep a copy alive in the closure
        n->backprop = [idx = std::move(idx), nk, c](TensorNode<T>& self) {
            auto& pf = *self.parents[0];
            pf.ensure_grad();
            T* gf = pf.grad.data();
            const T* g = self.grad.data();
            for (long long j = 0; j < nk; ++j) {
                T* dst = gf + (long long)idx[size_t(j)] * c;
                const T* src = g + j * c;
                for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
        };
    }
    return TensorT<T>(n);
}

enum class Reduce { Max, Mean, Sum };

// Reduce one axis away. Max routes gradient to the argmax (ties to lowest index).
template <typename T>
TensorT<T> reduce(const TensorT<T>& x, int axis, Reduce kind) {
    if (axis < 0 || axis >= x.ndim()) throw DimensionError("reduce: bad axis");
    const Shape& s = x.shape();
    long long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[size_t(i)];
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= s[size_t(i)];
    const int red = s[size_t(axis)];
    Shape out_shape;
    for (int i = 0; i < x.ndim(); ++i)
        if (i != axis) out_shape.push_back(s[size_t(i)]);
    if (out_shape.empty()) out_shape = {1};

    const char* opname = kind == Reduce::Max ? "reduce_max" : kind == Reduce::Mean ? "reduce_mean" : "reduce_sum";
    auto n = detail::make_node<T>(out_shape, opname, {x.node()});
    const T* xv = x.value().data();
    T* yv = n->value.data();
    std::vector<int> argmax;
    if (kind == Reduce::Max) argmax.assign(size_t(outer * inner), 0);
    for (long long o = 0; o < outer; ++o) {
        for (long long in = 0; in < inner; ++in) {
            const T* base = xv + o * red * inner + in;
            if (kind == Reduce::Max) {
                T best = base[0];
                int bi = 0;
                for (int r = 1; r < red; ++r) {
                    const T v = base[(long long)r * inner];
                    if (v > best) {
                        best = v;
                        bi = r;
                    }
                }
                yv[o * inner + in] = best;
                argmax[size_t(o * inner + in)] = bi;
            } else {
                T acc = 0;
                for (int r = 0; r < red; ++r) acc += base[(long long)r * inner];
                yv[o * inner + in] = kind == Reduce::Mean ? acc / T(red) : acc;
            }
        }
    }
    if (n->requires_grad) {
        n->backprop = [outer, inner, red, kind, argmax = std::move(argmax)](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            T* gx = px.grad.data();
            const T* g = self.grad.data();
            for (long long o = 0; o < outer; ++o) {
                for (long long in = 0; in < inner; ++in) {
                    const T gv = g[o * inner + in];
                    T* base = gx + o * red * inner + in;
                    if (kind == Reduce::Max) {
                        base[(long long)argmax[size_t(o * inner + in)] * inner] += gv;
                    } else if (kind == Reduce::Mean) {
                        const T share = gv / T(red);
                        for (int r = 0; r < red; ++r) base[(long long)r * inner] += share;
                    } else {
                        for (int r = 0; r < red; ++r) base[(long long)r * inner] += gv;
                    }
                }
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> reduce_max(const TensorT<T>& x, int axis) {
    return reduce(x, axis, Reduce::Max);
}
template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& x, int axis) {
    return reduce(x, axis, Reduce::Mean);
}
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& x, int axis) {
    return reduce(x, axis, Reduce::Sum);
}

// Concatenate along the last axis. All leading extents must agree.
template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& xs) {
    if (xs.empty()) throw DimensionError("concat: no inputs");
    const Shape& s0 = xs[0].shape();
    int total_c = 0;
    for (const auto& x : xs) {
        if (x.ndim() != int(s0.size()))
            throw DimensionError("concat: rank mismatch");
        for (int i = 0; i + 1 < x.ndim(); ++i)
            if (x.dim(i) != s0[size_t(i)])
                throw DimensionError("concat: leading extent mismatch " + shape_str(x.shape()) +
                                     " vs " + shape_str(s0));
        total_c += x.dim(x.ndim() - 1);
    }
    Shape out_shape = s0;
    out_shape.back() = total_c;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    for (const auto& x : xs) parents.push_back(x.node());
    auto n = detail::make_node<T>(out_shape, "concat", std::move(parents));
    const long long rows = detail::rows_of(out_shape);
    T* y = n->value.data();
    long long off = 0;
    std::vector<int> widths;
    for (const auto& x : xs) {
        const int c = x.dim(x.ndim() - 1);
        widths.push_back(c);
        const T* xv = x.value().data();
        for (long long r = 0; r < rows; ++r)
            std::copy(xv + r * c, xv + (r + 1) * c, y + r * total_c + off);
        off += c;
    }
    if (n->requires_grad) {
        n->backprop = [rows, total_c, widths = std::move(widths)](TensorNode<T>& self) {
            const T* g = self.grad.data();
            long long off = 0;
            for (size_t p = 0; p < self.parents.size(); ++p) {
                auto& par = *self.parents[p];
                const int c = widths[p];
                if (par.requires_grad) {
                    par.ensure_grad();
                    T* gp = par.grad.data();
                    for (long long r = 0; r < rows; ++r) {
                        const T* src = g + r * total_c + off;
                        T* dst = gp + r * c;
                        for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                    }
                }
                off += c;
            }
        };
    }
    return TensorT<T>(n);
}

// y[..., c] = x[..., c] * w[...]; w has x's shape minus the last axis.
template <typename T>
TensorT<T> scale_rows(const TensorT<T>& x, const TensorT<T>& w) {
    if (x.ndim() < 2) throw DimensionError("scale_rows: x needs at least 2 axes");
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    if (w.shape() != lead)
        throw DimensionError("scale_rows: weights " + shape_str(w.shape()) + " vs rows " +
                             shape_str(lead));
    const int c = x.dim(x.ndim() - 1);
    const long long rows = detail::rows_of(x.shape());
    auto n = detail::make_node<T>(x.shape(), "scale_rows", {x.node(), w.node()});
    const T* xv = x.value().data();
    const T* wv = w.value().data();
    T* y = n->value.data();
    for (long long r = 0; r < rows; ++r) {
        const T s = wv[r];
        for (int ch = 0; ch < c; ++ch) y[r * c + ch] = xv[r * c + ch] * s;
    }
    if (n->requires_grad) {
        n->backprop = [rows, c](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            const T* g = self.grad.data();
            if (px.requires_grad) {
                px.ensure_grad();
                T* gx = px.grad.data();
                const T* wv = pw.value.data();
                for (long long r = 0; r < rows; ++r) {
                    const T s = wv[r];
                    for (int ch = 0; ch < c; ++ch) gx[r * c + ch] += g[r * c + ch] * s;
                }
            }
            if (pw.requires_grad) {
                pw.ensure_grad();
                T* gw = pw.grad.data();
                const T* xv = px.value.data();
                for (long long r = 0; r < rows; ++r) {
                    T acc = 0;
                    for (int ch = 0; ch < c; ++ch) acc += g[r * c + ch] * xv[r * c + ch];
                    gw[r] += acc;
                }
            }
        };
    }
    return TensorT<T>(n);
}

// y[a,b,:] = x[a,b,:] - center[a,:]
template <typename T>
TensorT<T> sub_bcast(const TensorT<T>& x, const TensorT<T>& center) {
    if (x.ndim() != 3 || center.ndim() != 2 || x.dim(0) != center.dim(0) ||
        x.dim(2) != center.dim(1))
        throw DimensionError("sub_bcast: expected x[A,B,C] and center[A,C]");
    const long long a = x.dim(0), b = x.dim(1), c = x.dim(2);
    auto n = detail::make_node<T>(x.shape(), "sub_bcast", {x.node(), center.node()});
    const T* xv = x.value().data();
    const T* cv = center.value().data();
    T* y = n->value.data();
    for (long long i = 0; i < a; ++i)
        for (long long j = 0; j < b; ++j)
            for (long long ch = 0; ch < c; ++ch)
                y[(i * b + j) * c + ch] = xv[(i * b + j) * c + ch] - cv[i * c + ch];
    if (n->requires_grad) {
        n->backprop = [a, b, c](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            auto& pc = *self.parents[1];
            const T* g = self.grad.data();
            if (px.requires_grad) {
                px.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += g[i];
            }
            if (pc.requires_grad) {
                pc.ensure_grad();
                T* gc = pc.grad.data();
                for (long long i = 0; i < a; ++i)
                    for (long long j = 0; j < b; ++j)
                        for (long long ch = 0; ch < c; ++ch)
                            gc[i * c + ch] -= g[(i * b + j) * c + ch];
            }
        };
    }
    return TensorT<T>(n);
}

// [A,C] -> [A,B,C] by replication; gradient sums over the replicas.
template <typename T>
TensorT<T> expand_mid(const TensorT<T>& x, int b) {
    if (x.ndim() != 2 || b <= 0) throw DimensionError("expand_mid: expected x[A,C], B>0");
    const long long a = x.dim(0), c = x.dim(1);
    auto n = detail::make_node<T>({int(a), b, int(c)}, "expand_mid", {x.node()});
    const T* xv = x.value().data();
    T* y = n->value.data();
    for (long long i = 0; i < a; ++i)
        for (long long j = 0; j < b; ++j)
            std::copy(xv + i * c, xv + (i + 1) * c, y + (i * b + j) * c);
    if (n->requires_grad) {
        n->backprop = [a, b, c](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            T* gx = px.grad.data();
            const T* g = self.grad.data();
            for (long long i = 0; i < a; ++i)
                for (long long j = 0; j < b; ++j)
                    for (long long ch = 0; ch < c; ++ch) gx[i * c + ch] += g[(i * b + j) * c + ch];
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape s) {
    if (shape_numel(s) != x.size())
        throw DimensionError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                             shape_str(s));
    auto n = detail::make_node<T>(std::move(s), "reshape", {x.node()});
    n->value = x.value();
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        };
    }
    return TensorT<T>(n);
}

// |x| with subgradient 0 at 0.
template <typename T>
TensorT<T> abs_t(const TensorT<T>& x) {
    auto n = detail::make_node<T>(x.shape(), "abs", {x.node()});
    const auto& xv = x.value();
    for (size_t i = 0; i < xv.size(); ++i) n->value[i] = std::abs(xv[i]);
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const T v = px.value[i];
                if (v > T(0))
                    px.grad[i] += self.grad[i];
                else if (v < T(0))
                    px.grad[i] -= self.grad[i];
            }
        };
    }
    return TensorT<T>(n);
}

// Euclidean norm of each row over the last axis: [.., C] -> [..]. Subgradient 0 at 0.
template <typename T>
TensorT<T> l2norm_rows(const TensorT<T>& x) {
    if (x.ndim() < 2) throw DimensionError("l2norm_rows: x needs at least 2 axes");
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    const int c = x.dim(x.ndim() - 1);
    const long long rows = detail::rows_of(x.shape());
    auto n = detail::make_node<T>(out_shape, "l2norm_rows", {x.node()});
    const T* xv = x.value().data();
    T* y = n->value.data();
    for (long long r = 0; r < rows; ++r) {
        T acc = 0;
        for (int ch = 0; ch < c; ++ch) acc += xv[r * c + ch] * xv[r * c + ch];
        y[r] = std::sqrt(acc);
    }
    if (n->requires_grad) {
        n->backprop = [rows, c](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            T* gx = px.grad.data();
            const T* g = self.grad.data();
            const T* xv = px.value.data();
            const T* y = self.value.data();
            for (long long r = 0; r < rows; ++r) {
                if (y[r] <= T(0)) continue;
                const T s = g[r] / y[r];
                for (int ch = 0; ch < c; ++ch) gx[r * c + ch] += s * xv[r * c + ch];
            }
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x) {
    auto n = detail::make_node<T>({1}, "sum_all", {x.node()});
    T acc = 0;
    for (T v : x.value()) acc += v;
    n->value[0] = acc;
    if (n->requires_grad) {
        n->backprop = [](TensorNode<T>& self) {
            auto& px = *self.parents[0];
            px.ensure_grad();
            const T g = self.grad[0];
            for (auto& gv : px.grad) gv += g;
        };
    }
    return TensorT<T>(n);
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x) {
    return scale(sum_all(x), T(1) / T(x.size()));
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar root. With accumulate=false (default) the
// grads of all reachable leaves are reset first; accumulate=true adds onto
// existing leaf grads (used for batching). A second call on the same root is
// an error: rebuild the graph instead.
template <typename T>
void backward(const TensorT<T>& root, bool accumulate = false) {
    auto r = root.node();
    if (!r) throw ContractError("backward: undefined tensor");
    if (r->value.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(r->shape));
    if (r->backward_done) throw ContractError("backward: already ran for this node");
    if (!r->requires_grad) throw ContractError("backward: root does not require grad");
    if (!std::isfinite(double(r->value[0]))) throw NumericError("backward: non-finite loss");

    // Iterative post-order DFS over grad-requiring nodes.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    stack.push_back({r.get(), 0});
    visited.insert(r.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode<T>* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TensorNode<T>* n : order) {
        if (n->leaf && accumulate)
            n->ensure_grad();
        else
            n->grad.assign(n->value.size(), T(0));
    }
    r->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
    r->backward_done = true;
}

}  // namespace wsaflow
