#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "humocon/core/errors.hpp"
#include "humocon/core/tensor.hpp"

// Reverse-mode autodiff on a dynamic DAG. Backward passes are themselves
// expressed as graph ops, so gradients stay differentiable and
// grad(..., create_graph=true) supports the second-order objectives.

namespace humocon::ag {

using humocon::Shape;
using humocon::Tensor;

template <class T>
struct Node;

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
using VjpFn = std::function<void(const Var<T>& self, const Var<T>& gout, std::vector<Var<T>>& pg)>;

template <class T>
struct Node {
    Tensor<T> value;
    std::vector<Var<T>> parents;
    VjpFn<T> vjp;               // null for leaves/constants
    bool needs_grad = false;    // some requires-grad leaf is reachable
    bool higher_order = true;   // vjp composed of differentiable ops
    const char* op = "leaf";

    Node() = default;
    explicit Node(Tensor<T> v) : value(std::move(v)) {}

    // Iterative release so destruction of deep graphs cannot overflow the
    // stack.
    ~Node() {
        std::vector<Var<T>> stack;
        for (auto& p : parents)
            if (p && p.use_count() == 1) stack.push_back(std::move(p));
        parents.clear();
        while (!stack.empty()) {
            Var<T> n = std::move(stack.back());
            stack.pop_back();
            for (auto& p : n->parents)
                if (p && p.use_count() == 1) stack.push_back(std::move(p));
            n->parents.clear();
        }
    }
};

template <class T>
Var<T> constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>(std::move(v));
    n->op = "const";
    return n;
}

template <class T>
Var<T> scalar_const(T v) {
    return constant(Tensor<T>::full({1}, v));
}

template <class T>
Var<T> leaf(Tensor<T> v, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>(std::move(v));
    n->needs_grad = requires_grad;
    n->op = requires_grad ? "param" : "const";
    return n;
}

template <class T>
Var<T> detach(const Var<T>& x) {
    return constant(Tensor<T>(x->value));
}

template <class T>
Var<T> make_node(Tensor<T> val, std::vector<Var<T>> parents, VjpFn<T> vjp, const char* op) {
    auto n = std::make_shared<Node<T>>(std::move(val));
    n->op = op;
    bool ng = false;
    for (const auto& p : parents) ng = ng || (p && p->needs_grad);
    n->needs_grad = ng;
    if (ng) {
        n->parents = std::move(parents);
        n->vjp = std::move(vjp);
    }
    return n;
}

// ---------------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (size_t i = 0; i < n; ++i) {
        long da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        long db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        HUMOCON_CHECK(da == db || da == 1 || db == 1, humocon::ShapeError,
                      "incompatible broadcast " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `src` laid over `out` (0 where src is broadcast).
inline Shape strides_over(const Shape& src, const Shape& out) {
    Shape st(out.size(), 0);
    Shape ss = contiguous_strides(src);
    size_t off = out.size() - src.size();
    for (size_t i = 0; i < src.size(); ++i)
        st[off + i] = (src[i] == 1 && out[off + i] != 1) ? 0 : ss[i];
    return st;
}

// Element-wise binary op with numpy broadcasting.
template <class T, class F>
Tensor<T> ew_binary(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
    if (a.shape == b.shape) {
        Tensor<T> out(a.shape);
        const long n = a.numel();
        for (long i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    Shape os = broadcast_shape(a.shape, b.shape);
    Tensor<T> out(os);
    Shape sa = strides_over(a.shape, os);
    Shape sb = strides_over(b.shape, os);
    const int nd = static_cast<int>(os.size());
    std::vector<long> idx(static_cast<size_t>(nd), 0);
    long ia = 0, ib = 0;
    const long n = out.numel();
    for (long lin = 0; lin < n; ++lin) {
        out[lin] = f(a[ia], b[ib]);
        for (int d = nd - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            ia += sa[static_cast<size_t>(d)];
            ib += sb[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
            ia -= sa[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
            ib -= sb[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return out;
}

// Reduce `g` (shaped like `os`) back down to `target` by summing broadcast
// axes.
template <class T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
    if (g.shape == target) return g;
    Tensor<T> out(target);
    Shape st = strides_over(target, g.shape);
    const int nd = static_cast<int>(g.shape.size());
    std::vector<long> idx(static_cast<size_t>(nd), 0);
    long io = 0;
    const long n = g.numel();
    for (long lin = 0; lin < n; ++lin) {
        out[io] += g[lin];
        for (int d = nd - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            io += st[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < g.shape[static_cast<size_t>(d)]) break;
            io -= st[static_cast<size_t>(d)] * g.shape[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return out;
}

template <class T>
Var<T> sum_to(const Var<T>& x, const Shape& target);

template <class T>
Var<T> broadcast_to(const Var<T>& x, const Shape& target) {
    if (x->value.shape == target) return x;
    Shape src = x->value.shape;
    Tensor<T> ones(target, T(1));
    Tensor<T> val = ew_binary<T>(x->value, ones, [](T a, T) { return a; });
    return make_node<T>(
        std::move(val), {x},
        [src](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) { pg[0] = sum_to(g, src); },
        "broadcast");
}

template <class T>
Var<T> sum_to(const Var<T>& x, const Shape& target) {
    if (x->value.shape == target) return x;
    Tensor<T> val = reduce_to(x->value, target);
    Shape src = x->value.shape;
    return make_node<T>(
        std::move(val), {x},
        [src](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = broadcast_to(g, src);
        },
        "sum_to");
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    Tensor<T> val = ew_binary<T>(a->value, b->value, [](T x, T y) { return x + y; });
    Shape sa = a->value.shape, sb = b->value.shape;
    return make_node<T>(
        std::move(val), {a, b},
        [sa, sb](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = sum_to(g, sa);
            pg[1] = sum_to(g, sb);
        },
        "add");
}

template <class T>
Var<T> neg(const Var<T>& a) {
    Tensor<T> val(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) val[i] = -a->value[i];
    return make_node<T>(
        std::move(val), {a},
        [](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) { pg[0] = neg(g); }, "neg");
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    Tensor<T> val = ew_binary<T>(a->value, b->value, [](T x, T y) { return x - y; });
    Shape sa = a->value.shape, sb = b->value.shape;
    return make_node<T>(
        std::move(val), {a, b},
        [sa, sb](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = sum_to(g, sa);
            pg[1] = sum_to(neg(g), sb);
        },
        "sub");
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    Tensor<T> val = ew_binary<T>(a->value, b->value, [](T x, T y) { return x * y; });
    Shape sa = a->value.shape, sb = b->value.shape;
    Var<T> av = a, bv = b;
    return make_node<T>(
        std::move(val), {a, b},
        [sa, sb, av, bv](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = sum_to(mul(g, bv), sa);
            pg[1] = sum_to(mul(g, av), sb);
        },
        "mul");
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
    Tensor<T> val(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) val[i] = a->value[i] * c;
    return make_node<T>(
        std::move(val), {a},
        [c](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) { pg[0] = scale(g, c); },
        "scale");
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
    Tensor<T> val(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) val[i] = a->value[i] + c;
    return make_node<T>(
        std::move(val), {a},
        [](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) { pg[0] = g; }, "add_scalar");
}

// Unary op whose derivative is a function of the op's own output.
template <class T, class F, class DF>
Var<T> unary_on_self(const Var<T>& a, F&& f, DF&& df_of_self, const char* name) {
    Tensor<T> val(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) val[i] = f(a->value[i]);
    DF dcopy = df_of_self;
    return make_node<T>(
        std::move(val), {a},
        [dcopy](const Var<T>& self, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = mul(g, dcopy(self));
        },
        name);
}

template <class T>
Var<T> exp_v(const Var<T>& a) {
    return unary_on_self(
        a, [](T x) { return std::exp(x); }, [](const Var<T>& self) { return self; }, "exp");
}

template <class T>
Var<T> reciprocal(const Var<T>& a) {
    return unary_on_self(
        a, [](T x) { return T(1) / x; },
        [](const Var<T>& self) { return neg(mul(self, self)); }, "reciprocal");
}

template <class T>
Var<T> log_v(const Var<T>& a) {
    Tensor<T> val(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) val[i] = std::log(a->value[i]);
    Var<T> av = a;
    return make_node<T>(
        std::move(val), {a},
        [av](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = mul(g, reciprocal(av));
        },
        "log");
}

template <class T>
Var<T> sqrt_v(const Var<T>& a) {
    return unary_on_self(
        a, [](T x) { return std::sqrt(x); },
        [](const Var<T>& self) { return scale(reciprocal(self), T(0.5)); }, "sqrt");
}

template <class T>
Var<T> tanh_v(const Var<T>& a) {
    return unary_on_self(
        a, [](T x) { return std::tanh(x); },
        [](const Var<T>& self) { return add_scalar(neg(mul(self, self)), T(1)); }, "tanh");
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
    return unary_on_self(
        a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
        [](const Var<T>& self) { return mul(self, add_scalar(neg(self), T(1))); }, "sigmoid");
}

// Data-dependent 0/1 gate; the gate is treated as a constant in the backward
// graph (exact almost everywhere).
template <class T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> val(a->value.shape);
    auto gate = std::make_shared<Tensor<T>>(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) {
        bool on = a->value[i] > T(0);
        val[i] = on ? a->value[i] : T(0);
        (*gate)[i] = on ? T(1) : T(0);
    }
    return make_node<T>(
        std::move(val), {a},
        [gate](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = mul(g, constant(Tensor<T>(*gate)));
        },
        "relu");
}

template <class T>
Var<T> clamp_min(const Var<T>& a, T lo) {
    Tensor<T> val(a->value.shape);
    auto gate = std::make_shared<Tensor<T>>(a->value.shape);
    for (long i = 0; i < val.numel(); ++i) {
        bool on = a->value[i] > lo;
        val[i] = on ? a->value[i] : lo;
        (*gate)[i] = on ? T(1) : T(0);
    }
    return make_node<T>(
        std::move(val), {a},
        [gate](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = mul(g, constant(Tensor<T>(*gate)));
        },
        "clamp_min");
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
    // one dim may be -1
    long known = 1;
    int wild = -1;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == -1) {
            wild = static_cast<int>(i);
        } else {
            known *= s[i];
        }
    }
    if (wild >= 0) s[static_cast<size_t>(wild)] = a->value.numel() / known;
    HUMOCON_CHECK(shape_numel(s) == a->value.numel(), humocon::ShapeError,
                  "reshape " + shape_str(a->value.shape) + " -> " + shape_str(s));
    Tensor<T> val(s, a->value.data);
    Shape src = a->value.shape;
    return make_node<T>(
        std::move(val), {a},
        [src](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = reshape(g, src);
        },
        "reshape");
}

template <class T>
Var<T> transpose(const Var<T>& a, int d0, int d1) {
    const Shape& s = a->value.shape;
    int nd = a->value.ndim();
    if (d0 < 0) d0 += nd;
    if (d1 < 0) d1 += nd;
    Shape os = s;
    std::swap(os[static_cast<size_t>(d0)], os[static_cast<size_t>(d1)]);
    Tensor<T> val(os);
    Shape in_st = contiguous_strides(s);
    std::swap(in_st[static_cast<size_t>(d0)], in_st[static_cast<size_t>(d1)]);
    std::vector<long> idx(static_cast<size_t>(nd), 0);
    long ii = 0;
    const long n = val.numel();
    for (long lin = 0; lin < n; ++lin) {
        val[lin] = a->value[ii];
        for (int d = nd - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            ii += in_st[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
            ii -= in_st[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return make_node<T>(
        std::move(val), {a},
        [d0, d1](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = transpose(g, d0, d1);
        },
        "transpose");
}

template <class T>
Var<T> pad_slice(const Var<T>& g, int axis, long start, const Shape& full);

template <class T>
Var<T> slice(const Var<T>& a, int axis, long start, long len) {
    const Shape& s = a->value.shape;
    if (axis < 0) axis += a->value.ndim();
    HUMOCON_CHECK(start >= 0 && start + len <= s[static_cast<size_t>(axis)], humocon::ShapeError,
                  "slice out of range");
    Shape os = s;
    os[static_cast<size_t>(axis)] = len;
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    const long dim = s[static_cast<size_t>(axis)];
    Tensor<T> val(os);
    for (long o = 0; o < outer; ++o)
        std::memcpy(&val[o * len * inner], &a->value[(o * dim + start) * inner],
                    static_cast<size_t>(len * inner) * sizeof(T));
    Shape src = s;
    return make_node<T>(
        std::move(val), {a},
        [axis, start, src](const Var<T>& self, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = pad_slice(g, axis, start, src);
        },
        "slice");
}

// Zero tensor of shape `full` with `g` written at offset `start` on `axis`;
// the adjoint of slice.
template <class T>
Var<T> pad_slice(const Var<T>& g, int axis, long start, const Shape& full) {
    const Shape& gs = g->value.shape;
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= full[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < full.size(); ++i) inner *= full[i];
    const long dim = full[static_cast<size_t>(axis)];
    const long len = gs[static_cast<size_t>(axis)];
    Tensor<T> val(full);
    for (long o = 0; o < outer; ++o)
        std::memcpy(&val[(o * dim + start) * inner], &g->value[o * len * inner],
                    static_cast<size_t>(len * inner) * sizeof(T));
    long len_copy = len;
    return make_node<T>(
        std::move(val), {g},
        [axis, start, len_copy](const Var<T>&, const Var<T>& gg, std::vector<Var<T>>& pg) {
            pg[0] = slice(gg, axis, start, len_copy);
        },
        "pad_slice");
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
    HUMOCON_CHECK(!xs.empty(), humocon::ShapeError, "concat of nothing");
    Shape os = xs[0]->value.shape;
    if (axis < 0) axis += static_cast<int>(os.size());
    long total = 0;
    for (const auto& x : xs) total += x->value.shape[static_cast<size_t>(axis)];
    os[static_cast<size_t>(axis)] = total;
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < os.size(); ++i) inner *= os[i];
    Tensor<T> val(os);
    long off = 0;
    for (const auto& x : xs) {
        const long len = x->value.shape[static_cast<size_t>(axis)];
        for (long o = 0; o < outer; ++o)
            std::memcpy(&val[(o * total + off) * inner], &x->value[o * len * inner],
                        static_cast<size_t>(len * inner) * sizeof(T));
        off += len;
    }
    std::vector<long> lens;
    for (const auto& x : xs) lens.push_back(x->value.shape[static_cast<size_t>(axis)]);
    return make_node<T>(
        std::move(val), xs,
        [axis, lens](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            long off2 = 0;
            for (size_t i = 0; i < lens.size(); ++i) {
                pg[i] = slice(g, axis, off2, lens[i]);
                off2 += lens[i];
            }
        },
        "concat");
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_axis(const Var<T>& a, int axis, bool keepdim = false) {
    const Shape& s = a->value.shape;
    if (axis < 0) axis += a->value.ndim();
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    const long dim = s[static_cast<size_t>(axis)];
    Shape os = s;
    if (keepdim) {
        os[static_cast<size_t>(axis)] = 1;
    } else {
        os.erase(os.begin() + axis);
    }
    Tensor<T> val(os.empty() ? Shape{1} : os);
    for (long o = 0; o < outer; ++o)
        for (long d = 0; d < dim; ++d) {
            const T* src = &a->value[(o * dim + d) * inner];
            T* dst = &val[o * inner];
            for (long i = 0; i < inner; ++i) dst[i] += src[i];
        }
    Shape keep = s;
    keep[static_cast<size_t>(axis)] = 1;
    Shape src_shape = s;
    return make_node<T>(
        std::move(val), {a},
        [keep, src_shape](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = broadcast_to(reshape(g, keep), src_shape);
        },
        "sum_axis");
}

template <class T>
Var<T> mean_axis(const Var<T>& a, int axis, bool keepdim = false) {
    if (axis < 0) axis += a->value.ndim();
    long dim = a->value.shape[static_cast<size_t>(axis)];
    return scale(sum_axis(a, axis, keepdim), T(1) / static_cast<T>(dim));
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
    T acc = 0;
    for (long i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    Shape src = a->value.shape;
    return make_node<T>(
        Tensor<T>({1}, std::vector<T>{acc}), {a},
        [src](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = broadcast_to(reshape(g, Shape(src.size(), 1)), src);
        },
        "sum_all");
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
    return scale(sum_all(a), T(1) / static_cast<T>(a->value.numel()));
}

// ---------------------------------------------------------------------------
// matmul / bmm
// ---------------------------------------------------------------------------

// C[M,N] += A[M,K] * B[K,N], all row-major contiguous.
template <class T>
void gemm_acc(const T* A, const T* B, T* C, long M, long K, long N) {
    for (long i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        long k = 0;
        for (; k + 4 <= K; k += 4) {
            const T a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
            const T* b0 = B + k * N;
            const T* b1 = b0 + N;
            const T* b2 = b1 + N;
            const T* b3 = b2 + N;
            for (long j = 0; j < N; ++j) c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; k < K; ++k) {
            const T ak = a[k];
            const T* b = B + k * N;
            for (long j = 0; j < N; ++j) c[j] += ak * b[j];
        }
    }
}

template <class T>
Tensor<T> transpose2d_data(const T* src, long r, long c) {
    Tensor<T> out(Shape{c, r});
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
    return out;
}

// A is (..., K) with leading dims collapsed to M (or (K, M) when ta);
// B is strictly 2-D. ta requires A 2-D.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
    const Shape& as = a->value.shape;
    const Shape& bs = b->value.shape;
    HUMOCON_CHECK(bs.size() == 2, humocon::ShapeError, "matmul rhs must be 2-D");
    HUMOCON_CHECK(!ta || as.size() == 2, humocon::ShapeError, "matmul ta requires 2-D lhs");
    long M, K;
    if (ta) {
        K = as[0];
        M = as[1];
    } else {
        K = as.back();
        M = a->value.numel() / K;
    }
    const long Kb = tb ? bs[1] : bs[0];
    const long N = tb ? bs[0] : bs[1];
    HUMOCON_CHECK(K == Kb, humocon::ShapeError,
                  "matmul inner dim mismatch " + shape_str(as) + " x " + shape_str(bs));
    Tensor<T> A2, B2;
    const T* Ap = a->value.data.data();
    const T* Bp = b->value.data.data();
    if (ta) {
        A2 = transpose2d_data(Ap, K, M);
        Ap = A2.data.data();
    }
    if (tb) {
        B2 = transpose2d_data(Bp, N, K);
        Bp = B2.data.data();
    }
    Shape os;
    if (ta) {
        os = {M, N};
    } else {
        os = as;
        os.back() = N;
    }
    Tensor<T> val(os);
    gemm_acc(Ap, Bp, val.data.data(), M, K, N);
    Var<T> av = a, bv = b;
    return make_node<T>(
        std::move(val), {a, b},
        [av, bv, ta, tb](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            const Shape& ash = av->value.shape;
            const Shape& bsh = bv->value.shape;
            long K2 = ta ? ash[0] : ash.back();
            long M2 = ta ? ash[1] : av->value.numel() / K2;
            long N2 = tb ? bsh[0] : bsh[1];
            Var<T> g2 = reshape(g, {M2, N2});
            // With A' = ta ? A^T : A and B' = tb ? B^T : B, C = A'.B':
            // dA' = G.B'^T and dB' = A'^T.G, mapped back to the stored layouts.
            Var<T> da = matmul(g2, bv, false, !tb);  // G.B'^T, shape (M,K)
            pg[0] = ta ? transpose(da, 0, 1) : reshape(da, ash);
            if (!ta) {
                Var<T> a2 = reshape(av, {M2, K2});
                pg[1] = tb ? matmul(g2, a2, true, false)   // G^T.A  (N,K)
                           : matmul(a2, g2, true, false);  // A^T.G  (K,N)
            } else {
                pg[1] = tb ? matmul(g2, av, true, true)     // G^T.A^T (N,K)
                           : matmul(av, g2, false, false);  // A.G     (K,N)
            }
        },
        "matmul");
}

// Batched 3-D matmul: a (B,M,K), b (B,K,N) with per-operand transpose of the
// trailing two dims.
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
    const Shape& as = a->value.shape;
    const Shape& bs = b->value.shape;
    HUMOCON_CHECK(as.size() == 3 && bs.size() == 3 && as[0] == bs[0], humocon::ShapeError,
                  "bmm expects matching 3-D batches, got " + shape_str(as) + " x " + shape_str(bs));
    const long B = as[0];
    const long M = ta ? as[2] : as[1];
    const long K = ta ? as[1] : as[2];
    const long Kb = tb ? bs[2] : bs[1];
    const long N = tb ? bs[1] : bs[2];
    HUMOCON_CHECK(K == Kb, humocon::ShapeError, "bmm inner dim mismatch");
    Tensor<T> val(Shape{B, M, N});
    for (long i = 0; i < B; ++i) {
        const T* Ap = &a->value[i * as[1] * as[2]];
        const T* Bp = &b->value[i * bs[1] * bs[2]];
        Tensor<T> A2, B2;
        if (ta) {
            A2 = transpose2d_data(Ap, K, M);
            Ap = A2.data.data();
        }
        if (tb) {
            B2 = transpose2d_data(Bp, N, K);
            Bp = B2.data.data();
        }
        gemm_acc(Ap, Bp, &val[i * M * N], M, K, N);
    }
    Var<T> av = a, bv = b;
    return make_node<T>(
        std::move(val), {a, b},
        [av, bv, ta, tb](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            // Standard four-case algebra; each case reduces to bmm again.
            if (!ta) {
                pg[0] = tb ? bmm(g, bv, false, false) : bmm(g, bv, false, true);
            } else {
                Var<T> t = tb ? bmm(bv, g, true, true) : bmm(bv, g, false, true);
                pg[0] = t;
            }
            if (!tb) {
                pg[1] = ta ? bmm(av, g, false, false) : bmm(av, g, true, false);
            } else {
                Var<T> t = ta ? bmm(g, av, true, true) : bmm(g, av, true, false);
                pg[1] = t;
            }
        },
        "bmm");
}

// ---------------------------------------------------------------------------
// indexing
// ---------------------------------------------------------------------------

template <class T>
Var<T> index_add(const std::shared_ptr<std::vector<long>>& idx, const Var<T>& src, long rows);

// Gather rows along axis 0.
template <class T>
Var<T> index_select(const Var<T>& a, std::shared_ptr<std::vector<long>> idx) {
    const Shape& s = a->value.shape;
    long inner = a->value.numel() / s[0];
    Shape os = s;
    os[0] = static_cast<long>(idx->size());
    Tensor<T> val(os);
    for (size_t i = 0; i < idx->size(); ++i) {
        HUMOCON_CHECK((*idx)[i] >= 0 && (*idx)[i] < s[0], humocon::ShapeError,
                      "index_select out of range");
        std::memcpy(&val[static_cast<long>(i) * inner], &a->value[(*idx)[i] * inner],
                    static_cast<size_t>(inner) * sizeof(T));
    }
    long rows = s[0];
    return make_node<T>(
        std::move(val), {a},
        [idx, rows](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = index_add(idx, g, rows);
        },
        "index_select");
}

// Scatter-add rows of src into a zero tensor with `rows` rows.
template <class T>
Var<T> index_add(const std::shared_ptr<std::vector<long>>& idx, const Var<T>& src, long rows) {
    const Shape& s = src->value.shape;
    long inner = src->value.numel() / s[0];
    Shape os = s;
    os[0] = rows;
    Tensor<T> val(os);
    for (size_t i = 0; i < idx->size(); ++i) {
        const T* sp = &src->value[static_cast<long>(i) * inner];
        T* dp = &val[(*idx)[i] * inner];
        for (long j = 0; j < inner; ++j) dp[j] += sp[j];
    }
    return make_node<T>(
        std::move(val), {src},
        [idx](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) {
            pg[0] = index_select(g, idx);
        },
        "index_add");
}

// ---------------------------------------------------------------------------
// straight-through quantization
// ---------------------------------------------------------------------------

// Value is `q`; gradient passes to `f` unchanged.
template <class T>
Var<T> straight_through(const Var<T>& f, Tensor<T> q) {
    HUMOCON_CHECK(f->value.shape == q.shape, humocon::ShapeError,
                  "straight_through shape mismatch");
    return make_node<T>(
        std::move(q), {f},
        [](const Var<T>&, const Var<T>& g, std::vector<Var<T>>& pg) { pg[0] = g; },
        "straight_through");
}

// ---------------------------------------------------------------------------
// grad
// ---------------------------------------------------------------------------

struct GradOptions {
    bool create_graph = false;
    bool allow_unused = true;
};

template <class T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& wrt,
                         const GradOptions& opt = {}) {
    HUMOCON_CHECK(root->value.numel() == 1, humocon::ShapeError,
                  "grad root must be scalar, got " + shape_str(root->value.shape));
    // Iterative post-order topological sort over the needs_grad subgraph.
    std::vector<Var<T>> topo;
    std::unordered_set<const Node<T>*> done;
    std::vector<std::pair<Var<T>, size_t>> stack;
    if (root->needs_grad) stack.push_back({root, 0});
    while (!stack.empty()) {
        auto& [n, ci] = stack.back();
        if (done.count(n.get())) {
            stack.pop_back();
            continue;
        }
        bool descended = false;
        while (ci < n->parents.size()) {
            const Var<T>& p = n->parents[ci++];
            if (p && p->needs_grad && !done.count(p.get())) {
                stack.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (descended) continue;
        done.insert(n.get());
        topo.push_back(n);
        stack.pop_back();
    }

    std::unordered_map<const Node<T>*, Var<T>> gm;
    gm[root.get()] = constant(Tensor<T>::full(root->value.shape, T(1)));
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const Var<T>& n = *it;
        auto gi = gm.find(n.get());
        if (gi == gm.end() || !n->vjp) continue;
        if (opt.create_graph)
            HUMOCON_CHECK(n->higher_order, humocon::CapabilityError,
                          std::string("op '") + n->op + "' does not support double backward");
        std::vector<Var<T>> pg(n->parents.size());
        n->vjp(n, gi->second, pg);
        for (size_t i = 0; i < pg.size(); ++i) {
            if (!pg[i] || !n->parents[i] || !n->parents[i]->needs_grad) continue;
            auto pi = gm.find(n->parents[i].get());
            if (pi == gm.end()) {
                gm[n->parents[i].get()] = pg[i];
            } else {
                pi->second = add(pi->second, pg[i]);
            }
        }
    }

    std::vector<Var<T>> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto gi = gm.find(w.get());
        if (gi == gm.end()) {
            HUMOCON_CHECK(opt.allow_unused, humocon::DomainError,
                          "grad: target not reachable from root");
            out.push_back(constant(Tensor<T>::zeros(w->value.shape)));
        } else {
            out.push_back(opt.create_graph ? gi->second : detach(gi->second));
        }
    }
    return out;
}

// operator sugar
template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
    return add(a, b);
}
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
    return sub(a, b);
}
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
    return mul(a, b);
}

}  // namespace humocon::ag
