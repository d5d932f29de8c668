#include "hwm/numcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hwm::num {

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<Mat<T>>;
template <class T>
using CMapM = Eigen::Map<const Mat<T>>;
template <class T>
using SMapM = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using CSMapM = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

constexpr double kLayerNormEps = 1e-5;

template <class T>
T dot_n(const T* a, const T* b, std::int64_t n) {
    T acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

template <class T>
void axpy_n(T alpha, const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

int norm_axis(int axis, int rank, const char* kernel) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw DimensionError(std::string(kernel) + ": axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank));
    }
    return a;
}

std::int64_t prod(const Shape& s, std::size_t from, std::size_t to) {
    std::int64_t n = 1;
    for (std::size_t i = from; i < to; ++i) {
        n *= s[i];
    }
    return n;
}

// Number of times b repeats when broadcast against a (b a suffix of a).
std::int64_t suffix_repeats(const Shape& a, const Shape& b, const char* kernel) {
    if (b.size() > a.size() || !std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
        throw DimensionError(std::string(kernel) + ": shape " + shape_str(b) + " is not a suffix of " + shape_str(a));
    }
    return prod(a, 0, a.size() - b.size());
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.data();
    const T* s = src.data();
    const std::int64_t n = dst.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        d[i] += s[i];
    }
}

template <class T>
void rotate_rows(const T* src, T* dst, const T* cos, const T* sin, std::int64_t outer, std::int64_t n,
                 std::int64_t chunks, std::int64_t half, T sign) {
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t t = 0; t < n; ++t) {
            const T* c = cos + t * half;
            const T* sn = sin + t * half;
            for (std::int64_t ch = 0; ch < chunks; ++ch) {
                const std::int64_t base = ((o * n + t) * chunks + ch) * 2 * half;
                for (std::int64_t i = 0; i < half; ++i) {
                    const T a = src[base + 2 * i], b = src[base + 2 * i + 1];
                    dst[base + 2 * i] += a * c[i] - sign * b * sn[i];
                    dst[base + 2 * i + 1] += sign * a * sn[i] + b * c[i];
                }
            }
        }
    }
}

}  // namespace

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    const int ix = x.id;
    return x.g->push("reshape", std::move(out), {x}, [ix](Graph<T>& g, const Tensor<T>& gout) {
        if (g.needs_grad(ix)) {
            add_into(g.grad_buffer(ix), gout);
        }
    });
}

template <class T>
Var<T> permute(Var<T> x, const std::vector<int>& perm) {
    const Shape& in = x.shape();
    const int r = x.rank();
    if (static_cast<int>(perm.size()) != r) {
        throw DimensionError("permute: permutation rank mismatch for " + shape_str(in));
    }
    std::vector<int> seen(static_cast<std::size_t>(r), 0);
    Shape out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const int p = perm[static_cast<std::size_t>(i)];
        if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]++) {
            throw DimensionError("permute: invalid permutation");
        }
        out_shape[static_cast<std::size_t>(i)] = in[static_cast<std::size_t>(p)];
    }
    // Input stride for each output axis.
    std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) {
        in_stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(i + 1)] * in[static_cast<std::size_t>(i + 1)];
    }
    std::vector<std::int64_t> stride(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const std::int64_t n = shape_numel(out_shape);
    // offsets[j] = input offset of output element j.
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(n));
    {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
        std::int64_t off = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            offsets[static_cast<std::size_t>(j)] = off;
            for (int ax = r - 1; ax >= 0; --ax) {
                const auto a = static_cast<std::size_t>(ax);
                if (++idx[a] < out_shape[a]) {
                    off += stride[a];
                    break;
                }
                off -= stride[a] * (out_shape[a] - 1);
                idx[a] = 0;
            }
        }
    }
    Tensor<T> out(out_shape);
    const T* src = x.value().data();
    for (std::int64_t j = 0; j < n; ++j) {
        out[j] = src[offsets[static_cast<std::size_t>(j)]];
    }
    const int ix = x.id;
    return x.g->push("permute", std::move(out), {x},
                     [ix, offsets = std::move(offsets)](Graph<T>& g, const Tensor<T>& gout) {
                         if (!g.needs_grad(ix)) {
                             return;
                         }
                         T* d = g.grad_buffer(ix).data();
                         for (std::size_t j = 0; j < offsets.size(); ++j) {
                             d[offsets[j]] += gout[static_cast<std::int64_t>(j)];
                         }
                     });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
    if (xs.empty()) {
        throw DimensionError("concat: no inputs");
    }
    const Shape& s0 = xs[0].shape();
    const int a = norm_axis(axis, static_cast<int>(s0.size()), "concat");
    Shape out_shape = s0;
    out_shape[static_cast<std::size_t>(a)] = 0;
    std::vector<std::int64_t> widths;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        bool ok = s.size() == s0.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
            ok = static_cast<int>(i) == a || s[i] == s0[i];
        }
        if (!ok) {
            throw DimensionError("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        }
        widths.push_back(s[static_cast<std::size_t>(a)] * prod(s, static_cast<std::size_t>(a) + 1, s.size()));
        out_shape[static_cast<std::size_t>(a)] += s[static_cast<std::size_t>(a)];
    }
    const std::int64_t outer = prod(s0, 0, static_cast<std::size_t>(a));
    const std::int64_t total = std::accumulate(widths.begin(), widths.end(), std::int64_t{0});
    Tensor<T> out(out_shape);
    std::int64_t col = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const T* src = xs[k].value().data();
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(src + o * widths[k], widths[k], out.data() + o * total + col);
        }
        col += widths[k];
    }
    std::vector<int> ids;
    for (const auto& x : xs) {
        ids.push_back(x.id);
    }
    return xs[0].g->push("concat", std::move(out), xs,
                         [ids, widths, outer, total](Graph<T>& g, const Tensor<T>& gout) {
                             std::int64_t c = 0;
                             for (std::size_t k = 0; k < ids.size(); ++k) {
                                 if (g.needs_grad(ids[k])) {
                                     T* d = g.grad_buffer(ids[k]).data();
                                     for (std::int64_t o = 0; o < outer; ++o) {
                                         const T* s = gout.data() + o * total + c;
                                         for (std::int64_t i = 0; i < widths[k]; ++i) {
                                             d[o * widths[k] + i] += s[i];
                                         }
                                     }
                                 }
                                 c += widths[k];
                             }
                         });
}

template <class T>
Var<T> slice(Var<T> x, int axis, std::int64_t start, std::int64_t length) {
    const Shape& s = x.shape();
    const int a = norm_axis(axis, x.rank(), "slice");
    const std::int64_t extent = s[static_cast<std::size_t>(a)];
    if (start < 0 || length < 0 || start + length > extent) {
        throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") out of bounds for " + shape_str(s));
    }
    Shape out_shape = s;
    out_shape[static_cast<std::size_t>(a)] = length;
    const std::int64_t outer = prod(s, 0, static_cast<std::size_t>(a));
    const std::int64_t inner = prod(s, static_cast<std::size_t>(a) + 1, s.size());
    const std::int64_t in_w = extent * inner;
    const std::int64_t out_w = length * inner;
    const std::int64_t off = start * inner;
    Tensor<T> out(out_shape);
    const T* src = x.value().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src + o * in_w + off, out_w, out.data() + o * out_w);
    }
    const int ix = x.id;
    return x.g->push("slice", std::move(out), {x},
                     [ix, outer, in_w, out_w, off](Graph<T>& g, const Tensor<T>& gout) {
                         if (!g.needs_grad(ix)) {
                             return;
                         }
                         T* d = g.grad_buffer(ix).data();
                         for (std::int64_t o = 0; o < outer; ++o) {
                             for (std::int64_t i = 0; i < out_w; ++i) {
                                 d[o * in_w + off + i] += gout[o * out_w + i];
                             }
                         }
                     });
}

template <class T>
Var<T> repeat_axis(Var<T> x, int axis, std::int64_t n) {
    const Shape& s = x.shape();
    const int a = norm_axis(axis, x.rank() + 1, "repeat_axis");
    Shape out_shape = s;
    out_shape.insert(out_shape.begin() + a, n);
    const std::int64_t outer = prod(s, 0, static_cast<std::size_t>(a));
    const std::int64_t inner = prod(s, static_cast<std::size_t>(a), s.size());
    Tensor<T> out(out_shape);
    const T* src = x.value().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t r = 0; r < n; ++r) {
            std::copy_n(src + o * inner, inner, out.data() + (o * n + r) * inner);
        }
    }
    const int ix = x.id;
    return x.g->push("repeat_axis", std::move(out), {x}, [ix, outer, inner, n](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(ix)) {
            return;
        }
        T* d = g.grad_buffer(ix).data();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t r = 0; r < n; ++r) {
                const T* s = gout.data() + (o * n + r) * inner;
                for (std::int64_t i = 0; i < inner; ++i) {
                    d[o * inner + i] += s[i];
                }
            }
        }
    });
}

template <class T>
Var<T> mean_axis(Var<T> x, int axis) {
    const Shape& s = x.shape();
    const int a = norm_axis(axis, x.rank(), "mean_axis");
    const std::int64_t n = s[static_cast<std::size_t>(a)];
    if (n == 0) {
        throw DimensionError("mean_axis: empty axis in " + shape_str(s));
    }
    Shape out_shape = s;
    out_shape.erase(out_shape.begin() + a);
    const std::int64_t outer = prod(s, 0, static_cast<std::size_t>(a));
    const std::int64_t inner = prod(s, static_cast<std::size_t>(a) + 1, s.size());
    Tensor<T> out(out_shape);
    const T* src = x.value().data();
    const T inv = T{1} / static_cast<T>(n);
    for (std::int64_t o = 0; o < outer; ++o) {
        T* d = out.data() + o * inner;
        for (std::int64_t r = 0; r < n; ++r) {
            const T* p = src + (o * n + r) * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
                d[i] += p[i];
            }
        }
        for (std::int64_t i = 0; i < inner; ++i) {
            d[i] *= inv;
        }
    }
    const int ix = x.id;
    return x.g->push("mean_axis", std::move(out), {x}, [ix, outer, inner, n, inv](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(ix)) {
            return;
        }
        T* d = g.grad_buffer(ix).data();
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* s = gout.data() + o * inner;
            for (std::int64_t r = 0; r < n; ++r) {
                for (std::int64_t i = 0; i < inner; ++i) {
                    d[(o * n + r) * inner + i] += s[i] * inv;
                }
            }
        }
    });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    const std::int64_t reps = suffix_repeats(a.shape(), b.shape(), "add");
    const std::int64_t m = b.value().numel();
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::int64_t r = 0; r < reps; ++r) {
        T* d = out.data() + r * m;
        for (std::int64_t i = 0; i < m; ++i) {
            d[i] += pb[i];
        }
    }
    const int ia = a.id, ib = b.id;
    return a.g->push("add", std::move(out), {a, b}, [ia, ib, reps, m](Graph<T>& g, const Tensor<T>& gout) {
        if (g.needs_grad(ia)) {
            add_into(g.grad_buffer(ia), gout);
        }
        if (g.needs_grad(ib)) {
            T* d = g.grad_buffer(ib).data();
            for (std::int64_t r = 0; r < reps; ++r) {
                for (std::int64_t i = 0; i < m; ++i) {
                    d[i] += gout[r * m + i];
                }
            }
        }
    });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    return add(a, scale(b, T{-1}));
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    const std::int64_t reps = suffix_repeats(a.shape(), b.shape(), "mul");
    const std::int64_t m = b.value().numel();
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::int64_t r = 0; r < reps; ++r) {
        T* d = out.data() + r * m;
        for (std::int64_t i = 0; i < m; ++i) {
            d[i] *= pb[i];
        }
    }
    const int ia = a.id, ib = b.id;
    return a.g->push("mul", std::move(out), {a, b}, [ia, ib, reps, m](Graph<T>& g, const Tensor<T>& gout) {
        const T* va = g.value(ia).data();
        const T* vb = g.value(ib).data();
        if (g.needs_grad(ia)) {
            T* d = g.grad_buffer(ia).data();
            for (std::int64_t r = 0; r < reps; ++r) {
                for (std::int64_t i = 0; i < m; ++i) {
                    d[r * m + i] += gout[r * m + i] * vb[i];
                }
            }
        }
        if (g.needs_grad(ib)) {
            T* d = g.grad_buffer(ib).data();
            for (std::int64_t r = 0; r < reps; ++r) {
                for (std::int64_t i = 0; i < m; ++i) {
                    d[i] += gout[r * m + i] * va[r * m + i];
                }
            }
        }
    });
}

template <class T>
Var<T> scale(Var<T> x, T s) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) {
        v *= s;
    }
    const int ix = x.id;
    return x.g->push("scale", std::move(out), {x}, [ix, s](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(ix)) {
            return;
        }
        T* d = g.grad_buffer(ix).data();
        for (std::int64_t i = 0; i < gout.numel(); ++i) {
            d[i] += s * gout[i];
        }
    });
}

template <class T>
Var<T> gelu(Var<T> x) {
    static constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    static constexpr T k = static_cast<T>(0.044715);
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    Tensor<T> out(x.shape());
    const auto v = Eigen::Map<const Arr>(x.value().data(), out.numel());
    Eigen::Map<Arr>(out.data(), out.numel()) = T{0.5} * v * (T{1} + (c * (v + k * v.cube())).tanh());
    const int ix = x.id;
    return x.g->push("gelu", std::move(out), {x}, [ix](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(ix)) {
            return;
        }
        const std::int64_t n = gout.numel();
        const auto v = Eigen::Map<const Arr>(g.value(ix).data(), n);
        const Arr th = (c * (v + k * v.cube())).tanh();
        const auto dth = (T{1} - th.square()) * c * (T{1} + T{3} * k * v.square());
        Eigen::Map<Arr>(g.grad_buffer(ix).data(), n) +=
            Eigen::Map<const Arr>(gout.data(), n) * (T{0.5} * (T{1} + th) + T{0.5} * v * dth);
    });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(sa) + " and " + shape_str(sb));
    }
    const std::int64_t m = sa[sa.size() - 2], k = sa.back();
    const std::int64_t k2 = sb[sb.size() - 2], n = sb.back();
    if (k != k2) {
        throw DimensionError("matmul: inner extents differ in " + shape_str(sa) + " x " + shape_str(sb));
    }
    const Shape la(sa.begin(), sa.end() - 2), lb(sb.begin(), sb.end() - 2);
    const std::int64_t ba = shape_numel(la), bb = shape_numel(lb);
    if (la != lb && ba != 1 && bb != 1) {
        throw DimensionError("matmul: batch extents not broadcastable in " + shape_str(sa) + " x " + shape_str(sb));
    }
    Shape out_shape = ba > bb ? la : (bb > ba ? lb : (la.size() >= lb.size() ? la : lb));
    const std::int64_t batch = std::max(ba, bb);
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> out(out_shape);
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    for (std::int64_t i = 0; i < batch; ++i) {
        CMapM<T> A(pa + (ba == 1 ? 0 : i) * m * k, m, k);
        CMapM<T> B(pb + (bb == 1 ? 0 : i) * k * n, k, n);
        MapM<T>(out.data() + i * m * n, m, n).noalias() = A * B;
    }
    const int ia = a.id, ib = b.id;
    return a.g->push("matmul", std::move(out), {a, b}, [ia, ib, m, k, n, ba, bb, batch](Graph<T>& g, const Tensor<T>& gout) {
        const T* pa = g.value(ia).data();
        const T* pb = g.value(ib).data();
        const bool need_a = g.needs_grad(ia), need_b = g.needs_grad(ib);
        T* da = need_a ? g.grad_buffer(ia).data() : nullptr;
        T* db = need_b ? g.grad_buffer(ib).data() : nullptr;
        for (std::int64_t i = 0; i < batch; ++i) {
            CMapM<T> G(gout.data() + i * m * n, m, n);
            const std::int64_t oa = (ba == 1 ? 0 : i) * m * k;
            const std::int64_t ob = (bb == 1 ? 0 : i) * k * n;
            if (need_a) {
                MapM<T>(da + oa, m, k).noalias() += G * CMapM<T>(pb + ob, k, n).transpose();
            }
            if (need_b) {
                MapM<T>(db + ob, k, n).noalias() += CMapM<T>(pa + oa, m, k).transpose() * G;
            }
        }
    });
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    if (sw.size() != 2 || sx.empty() || sx.back() != sw[0]) {
        throw DimensionError("linear: input " + shape_str(sx) + " incompatible with weight " + shape_str(sw));
    }
    const bool has_bias = bias.valid();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != sw[1])) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(sw));
    }
    const std::int64_t in = sw[0], outd = sw[1];
    const std::int64_t rows = x.value().numel() / std::max<std::int64_t>(in, 1);
    Shape out_shape = sx;
    out_shape.back() = outd;
    Tensor<T> out(out_shape);
    MapM<T> Y(out.data(), rows, outd);
    Y.noalias() = CMapM<T>(x.value().data(), rows, in) * CMapM<T>(w.value().data(), in, outd);
    if (has_bias) {
        Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data(), outd);
    }
    const int ix = x.id, iw = w.id, ib = bias.id;
    std::vector<Var<T>> inputs{x, w};
    if (has_bias) {
        inputs.push_back(bias);
    }
    return x.g->push("linear", std::move(out), inputs, [ix, iw, ib, has_bias, rows, in, outd](Graph<T>& g, const Tensor<T>& gout) {
        CMapM<T> G(gout.data(), rows, outd);
        if (g.needs_grad(ix)) {
            MapM<T>(g.grad_buffer(ix).data(), rows, in).noalias() += G * CMapM<T>(g.value(iw).data(), in, outd).transpose();
        }
        if (g.needs_grad(iw)) {
            MapM<T>(g.grad_buffer(iw).data(), in, outd).noalias() +=
                CMapM<T>(g.value(ix).data(), rows, in).transpose() * G;
        }
        if (has_bias && g.needs_grad(ib)) {
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.grad_buffer(ib).data(), outd) += G.colwise().sum();
        }
    });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, int axis) {
    const Shape& s = x.shape();
    const int a = norm_axis(axis, x.rank(), "layer_norm");
    const std::int64_t n = s[static_cast<std::size_t>(a)];
    const std::int64_t outer = prod(s, 0, static_cast<std::size_t>(a));
    const std::int64_t inner = prod(s, static_cast<std::size_t>(a) + 1, s.size());
    for (const Var<T>* p : {&gain, &bias}) {
        if (p->valid() && (p->rank() != 1 || p->dim(0) != n)) {
            throw DimensionError("layer_norm: affine parameter " + shape_str(p->shape()) + " does not match extent " +
                                 std::to_string(n));
        }
    }
    const T* px = x.value().data();
    const T* pg = gain.valid() ? gain.value().data() : nullptr;
    const T* pb = bias.valid() ? bias.value().data() : nullptr;
    Tensor<T> out(s);
    // Normalized values and inverse std per slice, kept for backward.
    Tensor<T> xhat(s);
    std::vector<T> rstd(static_cast<std::size_t>(outer * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            T mu = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                mu += px[base + i * inner];
            }
            mu /= static_cast<T>(n);
            T var = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const T dlt = px[base + i * inner] - mu;
                var += dlt * dlt;
            }
            var /= static_cast<T>(n);
            const T r = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
            rstd[static_cast<std::size_t>(o * inner + in)] = r;
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int64_t j = base + i * inner;
                const T h = (px[j] - mu) * r;
                xhat[j] = h;
                out[j] = h * (pg ? pg[i] : T{1}) + (pb ? pb[i] : T{0});
            }
        }
    }
    const int ix = x.id, ig = gain.id, ib = bias.id;
    const bool has_g = gain.valid(), has_b = bias.valid();
    std::vector<Var<T>> inputs{x};
    if (has_g) {
        inputs.push_back(gain);
    }
    if (has_b) {
        inputs.push_back(bias);
    }
    return x.g->push("layer_norm", std::move(out), inputs,
                     [ix, ig, ib, has_g, has_b, n, outer, inner, xhat = std::move(xhat), rstd = std::move(rstd)](
                         Graph<T>& g, const Tensor<T>& gout) {
                         const T* pg = has_g ? g.value(ig).data() : nullptr;
                         const bool need_x = g.needs_grad(ix);
                         T* dx = need_x ? g.grad_buffer(ix).data() : nullptr;
                         T* dg = has_g && g.needs_grad(ig) ? g.grad_buffer(ig).data() : nullptr;
                         T* db = has_b && g.needs_grad(ib) ? g.grad_buffer(ib).data() : nullptr;
                         for (std::int64_t o = 0; o < outer; ++o) {
                             for (std::int64_t in = 0; in < inner; ++in) {
                                 const std::int64_t base = o * n * inner + in;
                                 T sum_dy = 0, sum_dyx = 0;
                                 for (std::int64_t i = 0; i < n; ++i) {
                                     const std::int64_t j = base + i * inner;
                                     const T dy = gout[j] * (pg ? pg[i] : T{1});
                                     sum_dy += dy;
                                     sum_dyx += dy * xhat[j];
                                     if (dg) {
                                         dg[i] += gout[j] * xhat[j];
                                     }
                                     if (db) {
                                         db[i] += gout[j];
                                     }
                                 }
                                 if (!dx) {
                                     continue;
                                 }
                                 const T r = rstd[static_cast<std::size_t>(o * inner + in)];
                                 const T inv_n = T{1} / static_cast<T>(n);
                                 for (std::int64_t i = 0; i < n; ++i) {
                                     const std::int64_t j = base + i * inner;
                                     const T dy = gout[j] * (pg ? pg[i] : T{1});
                                     dx[j] += r * (dy - inv_n * sum_dy - xhat[j] * inv_n * sum_dyx);
                                 }
                             }
                         }
                     });
}

template <class T>
Var<T> softmax(Var<T> x, int axis) {
    const Shape& s = x.shape();
    const int a = norm_axis(axis, x.rank(), "softmax");
    const std::int64_t n = s[static_cast<std::size_t>(a)];
    const std::int64_t outer = prod(s, 0, static_cast<std::size_t>(a));
    const std::int64_t inner = prod(s, static_cast<std::size_t>(a) + 1, s.size());
    const T* px = x.value().data();
    Tensor<T> out(s);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            T mx = px[base];
            for (std::int64_t i = 1; i < n; ++i) {
                mx = std::max(mx, px[base + i * inner]);
            }
            T z = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const T e = std::exp(px[base + i * inner] - mx);
                out[base + i * inner] = e;
                z += e;
            }
            for (std::int64_t i = 0; i < n; ++i) {
                out[base + i * inner] /= z;
            }
        }
    }
    const int ix = x.id;
    const int self = static_cast<int>(x.g->size());
    return x.g->push("softmax", std::move(out), {x}, [ix, self, n, outer, inner](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(ix)) {
            return;
        }
        const T* y = g.value(self).data();
        T* d = g.grad_buffer(ix).data();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * n * inner + in;
                T dot = 0;
                for (std::int64_t i = 0; i < n; ++i) {
                    dot += gout[base + i * inner] * y[base + i * inner];
                }
                for (std::int64_t i = 0; i < n; ++i) {
                    const std::int64_t j = base + i * inner;
                    d[j] += y[j] * (gout[j] - dot);
                }
            }
        }
    });
}

template <class T>
Var<T> modulate(Var<T> x, Var<T> shift, Var<T> scl) {
    const Shape& s = x.shape();
    if (s.size() != 3 || shift.shape() != Shape{s[0], s[2]} || scl.shape() != Shape{s[0], s[2]}) {
        throw DimensionError("modulate: expected x [B,N,h] with shift/scale [B,h], got " + shape_str(s) + ", " +
                             shape_str(shift.shape()) + ", " + shape_str(scl.shape()));
    }
    const std::int64_t B = s[0], N = s[1], h = s[2];
    Tensor<T> out(s);
    const T* px = x.value().data();
    const T* ps = shift.value().data();
    const T* pc = scl.value().data();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t t = 0; t < N; ++t) {
            const std::int64_t row = (b * N + t) * h;
            for (std::int64_t i = 0; i < h; ++i) {
                out[row + i] = px[row + i] * (T{1} + pc[b * h + i]) + ps[b * h + i];
            }
        }
    }
    const int ix = x.id, is = shift.id, ic = scl.id;
    return x.g->push("modulate", std::move(out), {x, shift, scl}, [ix, is, ic, B, N, h](Graph<T>& g, const Tensor<T>& gout) {
        const T* px = g.value(ix).data();
        const T* pc = g.value(ic).data();
        T* dx = g.needs_grad(ix) ? g.grad_buffer(ix).data() : nullptr;
        T* ds = g.needs_grad(is) ? g.grad_buffer(is).data() : nullptr;
        T* dc = g.needs_grad(ic) ? g.grad_buffer(ic).data() : nullptr;
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t t = 0; t < N; ++t) {
                const std::int64_t row = (b * N + t) * h;
                for (std::int64_t i = 0; i < h; ++i) {
                    const T gy = gout[row + i];
                    if (dx) {
                        dx[row + i] += gy * (T{1} + pc[b * h + i]);
                    }
                    if (ds) {
                        ds[b * h + i] += gy;
                    }
                    if (dc) {
                        dc[b * h + i] += gy * px[row + i];
                    }
                }
            }
        }
    });
}

template <class T>
Var<T> gate(Var<T> x, Var<T> gv) {
    const Shape& s = x.shape();
    if (s.size() != 3 || gv.shape() != Shape{s[0], s[2]}) {
        throw DimensionError("gate: expected x [B,N,h] with gate [B,h], got " + shape_str(s) + ", " +
                             shape_str(gv.shape()));
    }
    const std::int64_t B = s[0], N = s[1], h = s[2];
    Tensor<T> out(s);
    const T* px = x.value().data();
    const T* pg = gv.value().data();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t t = 0; t < N; ++t) {
            const std::int64_t row = (b * N + t) * h;
            for (std::int64_t i = 0; i < h; ++i) {
                out[row + i] = px[row + i] * pg[b * h + i];
            }
        }
    }
    const int ix = x.id, ig = gv.id;
    return x.g->push("gate", std::move(out), {x, gv}, [ix, ig, B, N, h](Graph<T>& g, const Tensor<T>& gout) {
        const T* px = g.value(ix).data();
        const T* pg = g.value(ig).data();
        T* dx = g.needs_grad(ix) ? g.grad_buffer(ix).data() : nullptr;
        T* dg = g.needs_grad(ig) ? g.grad_buffer(ig).data() : nullptr;
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t t = 0; t < N; ++t) {
                const std::int64_t row = (b * N + t) * h;
                for (std::int64_t i = 0; i < h; ++i) {
                    if (dx) {
                        dx[row + i] += gout[row + i] * pg[b * h + i];
                    }
                    if (dg) {
                        dg[b * h + i] += gout[row + i] * px[row + i];
                    }
                }
            }
        }
    });
}

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, int heads, Tensor<T>* probs) {
    const Shape& sq = q.shape();
    const Shape& sk = k.shape();
    if (sq.size() != 3 || sk.size() != 3 || v.shape() != sk || sq[0] != sk[0] || sq[2] != sk[2]) {
        throw DimensionError("attention: incompatible q " + shape_str(sq) + ", k " + shape_str(sk) + ", v " +
                             shape_str(v.shape()));
    }
    const std::int64_t B = sq[0], Nq = sq[1], Nk = sk[1], h = sq[2];
    if (heads <= 0 || h % heads != 0) {
        throw DimensionError("attention: width " + std::to_string(h) + " not divisible by " + std::to_string(heads) +
                             " heads");
    }
    const std::int64_t dh = h / heads;
    const T sc = T{1} / std::sqrt(static_cast<T>(dh));
    // Tiny per-head products are dominated by GEMM dispatch; loop them directly.
    const bool small = Nq * Nk * dh <= 16384;
    Tensor<T> P({B, heads, Nq, Nk});
    Tensor<T> out(sq);
    const T* pq = q.value().data();
    const T* pk = k.value().data();
    const T* pv = v.value().data();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t hd = 0; hd < heads; ++hd) {
            const T* qb = pq + b * Nq * h + hd * dh;
            const T* kb = pk + b * Nk * h + hd * dh;
            const T* vb = pv + b * Nk * h + hd * dh;
            T* sb = P.data() + (b * heads + hd) * Nq * Nk;
            T* ob = out.data() + b * Nq * h + hd * dh;
            if (small) {
                for (std::int64_t i = 0; i < Nq; ++i) {
                    T* srow = sb + i * Nk;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (std::int64_t j = 0; j < Nk; ++j) {
                        srow[j] = dot_n(qb + i * h, kb + j * h, dh) * sc;
                        mx = std::max(mx, srow[j]);
                    }
                    T sum = 0;
                    for (std::int64_t j = 0; j < Nk; ++j) {
                        srow[j] = std::exp(srow[j] - mx);
                        sum += srow[j];
                    }
                    T* orow = ob + i * h;
                    std::fill(orow, orow + dh, T{0});
                    for (std::int64_t j = 0; j < Nk; ++j) {
                        srow[j] /= sum;
                        axpy_n(srow[j], vb + j * h, orow, dh);
                    }
                }
                continue;
            }
            CSMapM<T> Q(qb, Nq, dh, Eigen::OuterStride<>(h));
            CSMapM<T> K(kb, Nk, dh, Eigen::OuterStride<>(h));
            CSMapM<T> V(vb, Nk, dh, Eigen::OuterStride<>(h));
            MapM<T> S(sb, Nq, Nk);
            S.noalias() = (Q * K.transpose()) * sc;
            for (std::int64_t i = 0; i < Nq; ++i) {
                auto row = S.row(i);
                row.array() = (row.array() - row.maxCoeff()).exp();
                row /= row.sum();
            }
            SMapM<T>(ob, Nq, dh, Eigen::OuterStride<>(h)).noalias() = S * V;
        }
    }
    if (probs) {
        *probs = P;
    }
    const int iq = q.id, ik = k.id, iv = v.id;
    return q.g->push(
        "attention", std::move(out), {q, k, v},
        [iq, ik, iv, B, Nq, Nk, h, heads, dh, sc, small, P = std::move(P)](Graph<T>& g, const Tensor<T>& gout) {
            const T* pq = g.value(iq).data();
            const T* pk = g.value(ik).data();
            const T* pv = g.value(iv).data();
            T* dq = g.needs_grad(iq) ? g.grad_buffer(iq).data() : nullptr;
            T* dk = g.needs_grad(ik) ? g.grad_buffer(ik).data() : nullptr;
            T* dv = g.needs_grad(iv) ? g.grad_buffer(iv).data() : nullptr;
            Mat<T> dS(Nq, Nk);
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t hd = 0; hd < heads; ++hd) {
                    const std::int64_t oq = b * Nq * h + hd * dh;
                    const std::int64_t ok = b * Nk * h + hd * dh;
                    if (small) {
                        const T* S = P.data() + (b * heads + hd) * Nq * Nk;
                        for (std::int64_t i = 0; i < Nq; ++i) {
                            const T* srow = S + i * Nk;
                            const T* grow = gout.data() + oq + i * h;
                            T* ds = dS.data() + i * Nk;
                            T dot = 0;
                            for (std::int64_t j = 0; j < Nk; ++j) {
                                if (dv) {
                                    axpy_n(srow[j], grow, dv + ok + j * h, dh);
                                }
                                ds[j] = dot_n(grow, pv + ok + j * h, dh);
                                dot += ds[j] * srow[j];
                            }
                            if (!dq && !dk) {
                                continue;
                            }
                            for (std::int64_t j = 0; j < Nk; ++j) {
                                const T d = srow[j] * (ds[j] - dot) * sc;
                                if (dq) {
                                    axpy_n(d, pk + ok + j * h, dq + oq + i * h, dh);
                                }
                                if (dk) {
                                    axpy_n(d, pq + oq + i * h, dk + ok + j * h, dh);
                                }
                            }
                        }
                        continue;
                    }
                    const Eigen::OuterStride<> st(h);
                    CMapM<T> S(P.data() + (b * heads + hd) * Nq * Nk, Nq, Nk);
                    CSMapM<T> G(gout.data() + oq, Nq, dh, st);
                    if (dv) {
                        SMapM<T>(dv + ok, Nk, dh, st).noalias() += S.transpose() * G;
                    }
                    if (!dq && !dk) {
                        continue;
                    }
                    dS.noalias() = G * CSMapM<T>(pv + ok, Nk, dh, st).transpose();
                    for (std::int64_t i = 0; i < Nq; ++i) {
                        const T dot = dS.row(i).dot(S.row(i));
                        dS.row(i).array() = S.row(i).array() * (dS.row(i).array() - dot) * sc;
                    }
                    if (dq) {
                        SMapM<T>(dq + oq, Nq, dh, st).noalias() += dS * CSMapM<T>(pk + ok, Nk, dh, st);
                    }
                    if (dk) {
                        SMapM<T>(dk + ok, Nk, dh, st).noalias() += dS.transpose() * CSMapM<T>(pq + oq, Nq, dh, st);
                    }
                }
            }
        });
}

template <class T>
Var<T> rotate_pairs(Var<T> x, const Tensor<T>& cos, const Tensor<T>& sin) {
    const Shape& s = x.shape();
    if (s.size() < 2 || cos.rank() != 2 || cos.shape() != sin.shape() || cos.dim(0) != s[s.size() - 2]) {
        throw DimensionError("rotate_pairs: tables " + shape_str(cos.shape()) + " do not match input " + shape_str(s));
    }
    const std::int64_t n = s[s.size() - 2], w = s.back(), half = cos.dim(1);
    if (half == 0 || w % (2 * half) != 0) {
        throw DimensionError("rotate_pairs: width " + std::to_string(w) + " not a multiple of rotary dim " +
                             std::to_string(2 * half));
    }
    const std::int64_t chunks = w / (2 * half);
    const std::int64_t outer = x.value().numel() / (n * w);
    Tensor<T> out(s);
    rotate_rows(x.value().data(), out.data(), cos.data(), sin.data(), outer, n, chunks, half, T{1});
    const int ix = x.id;
    return x.g->push("rotate_pairs", std::move(out), {x},
                     [ix, cos, sin, outer, n, chunks, half](Graph<T>& g, const Tensor<T>& gout) {
                         if (g.needs_grad(ix)) {
                             rotate_rows(gout.data(), g.grad_buffer(ix).data(), cos.data(), sin.data(), outer, n, chunks,
                                         half, T{-1});
                         }
                     });
}

template <class T>
Var<T> embedding(Var<T> table, const std::vector<std::int64_t>& ids, Shape prefix) {
    const Shape& st = table.shape();
    if (st.size() != 2) {
        throw DimensionError("embedding: table must be [V, h], got " + shape_str(st));
    }
    if (shape_numel(prefix) != static_cast<std::int64_t>(ids.size())) {
        throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids do not fill " + shape_str(prefix));
    }
    const std::int64_t V = st[0], h = st[1];
    for (const auto id : ids) {
        if (id < 0 || id >= V) {
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside [0, " + std::to_string(V) + ")");
        }
    }
    prefix.push_back(h);
    Tensor<T> out(prefix);
    const T* pt = table.value().data();
    for (std::size_t r = 0; r < ids.size(); ++r) {
        std::copy_n(pt + ids[r] * h, h, out.data() + static_cast<std::int64_t>(r) * h);
    }
    const int it = table.id;
    return table.g->push("embedding", std::move(out), {table}, [it, ids, h](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(it)) {
            return;
        }
        T* d = g.grad_buffer(it).data();
        for (std::size_t r = 0; r < ids.size(); ++r) {
            const T* s = gout.data() + static_cast<std::int64_t>(r) * h;
            for (std::int64_t i = 0; i < h; ++i) {
                d[ids[r] * h + i] += s[i];
            }
        }
    });
}

template <class T>
Var<T> select_batch(Var<T> x, Var<T> null, const std::vector<std::uint8_t>& use_null) {
    const Shape& s = x.shape();
    if (s.empty() || static_cast<std::int64_t>(use_null.size()) != s[0]) {
        throw DimensionError("select_batch: flag count does not match batch of " + shape_str(s));
    }
    const Shape item(s.begin() + 1, s.end());
    const std::int64_t reps = suffix_repeats(item, null.shape(), "select_batch");
    const std::int64_t m = null.value().numel();
    const std::int64_t per = reps * m;
    Tensor<T> out = x.value();
    const T* pn = null.value().data();
    for (std::size_t b = 0; b < use_null.size(); ++b) {
        if (use_null[b]) {
            for (std::int64_t r = 0; r < reps; ++r) {
                std::copy_n(pn, m, out.data() + static_cast<std::int64_t>(b) * per + r * m);
            }
        }
    }
    const int ix = x.id, in = null.id;
    return x.g->push("select_batch", std::move(out), {x, null}, [ix, in, use_null, reps, m, per](Graph<T>& g, const Tensor<T>& gout) {
        T* dx = g.needs_grad(ix) ? g.grad_buffer(ix).data() : nullptr;
        T* dn = g.needs_grad(in) ? g.grad_buffer(in).data() : nullptr;
        for (std::size_t b = 0; b < use_null.size(); ++b) {
            const T* s = gout.data() + static_cast<std::int64_t>(b) * per;
            if (use_null[b]) {
                if (dn) {
                    for (std::int64_t r = 0; r < reps; ++r) {
                        for (std::int64_t i = 0; i < m; ++i) {
                            dn[i] += s[r * m + i];
                        }
                    }
                }
            } else if (dx) {
                T* d = dx + static_cast<std::int64_t>(b) * per;
                for (std::int64_t i = 0; i < per; ++i) {
                    d[i] += s[i];
                }
            }
        }
    });
}

template <class T>
Var<T> sum(Var<T> x) {
    T acc = 0;
    for (const T v : x.value().values()) {
        acc += v;
    }
    const int ix = x.id;
    return x.g->push("sum", Tensor<T>(Shape{}, acc), {x}, [ix](Graph<T>& g, const Tensor<T>& gout) {
        if (!g.needs_grad(ix)) {
            return;
        }
        const T gv = gout[0];
        for (auto& d : g.grad_buffer(ix).values()) {
            d += gv;
        }
    });
}

template <class T>
Var<T> mean(Var<T> x) {
    const std::int64_t n = x.value().numel();
    if (n == 0) {
        throw DimensionError("mean: empty tensor");
    }
    return scale(sum(x), T{1} / static_cast<T>(n));
}

template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mse: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::int64_t n = a.value().numel();
    if (n == 0) {
        throw DimensionError("mse: empty tensors");
    }
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        acc += d * d;
    }
    const int ia = a.id, ib = b.id;
    return a.g->push("mse", Tensor<T>(Shape{}, static_cast<T>(acc / static_cast<double>(n))), {a, b},
                     [ia, ib, n](Graph<T>& g, const Tensor<T>& gout) {
                         const T* pa = g.value(ia).data();
                         const T* pb = g.value(ib).data();
                         const T k = T{2} * gout[0] / static_cast<T>(n);
                         T* da = g.needs_grad(ia) ? g.grad_buffer(ia).data() : nullptr;
                         T* db = g.needs_grad(ib) ? g.grad_buffer(ib).data() : nullptr;
                         for (std::int64_t i = 0; i < n; ++i) {
                             const T d = k * (pa[i] - pb[i]);
                             if (da) {
                                 da[i] += d;
                             }
                             if (db) {
                                 db[i] -= d;
                             }
                         }
                     });
}

template <class T>
Var<T> masked_cross_entropy(Var<T> logits, const std::vector<std::int64_t>& targets,
                            const std::vector<std::uint8_t>& mask, bool* empty) {
    const Shape& s = logits.shape();
    if (s.size() != 2 || static_cast<std::int64_t>(targets.size()) != s[0] ||
        static_cast<std::int64_t>(mask.size()) != s[0]) {
        throw DimensionError("masked_cross_entropy: logits " + shape_str(s) + " with " + std::to_string(targets.size()) +
                             " targets and " + std::to_string(mask.size()) + " mask entries");
    }
    const std::int64_t N = s[0], V = s[1];
    const T* pl = logits.value().data();
    std::int64_t count = 0;
    double loss = 0;
    // Softmax rows of masked positions, kept for backward.
    Tensor<T> probs({N, V});
    for (std::int64_t r = 0; r < N; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) {
            continue;
        }
        const std::int64_t t = targets[static_cast<std::size_t>(r)];
        if (t < 0 || t >= V) {
            throw std::out_of_range("masked_cross_entropy: target " + std::to_string(t) + " outside vocabulary");
        }
        const T* row = pl + r * V;
        const T mx = *std::max_element(row, row + V);
        double z = 0;
        for (std::int64_t i = 0; i < V; ++i) {
            const T e = std::exp(row[i] - mx);
            probs[r * V + i] = e;
            z += static_cast<double>(e);
        }
        for (std::int64_t i = 0; i < V; ++i) {
            probs[r * V + i] = static_cast<T>(static_cast<double>(probs[r * V + i]) / z);
        }
        loss += std::log(z) - static_cast<double>(row[t] - mx);
        ++count;
    }
    if (empty) {
        *empty = count == 0;
    }
    const T value = count ? static_cast<T>(loss / static_cast<double>(count)) : T{0};
    const int il = logits.id;
    return logits.g->push("masked_cross_entropy", Tensor<T>(Shape{}, value), {logits},
                          [il, targets, mask, count, N, V, probs = std::move(probs)](Graph<T>& g, const Tensor<T>& gout) {
                              if (count == 0 || !g.needs_grad(il)) {
                                  return;
                              }
                              const T k = gout[0] / static_cast<T>(count);
                              T* d = g.grad_buffer(il).data();
                              for (std::int64_t r = 0; r < N; ++r) {
                                  if (!mask[static_cast<std::size_t>(r)]) {
                                      continue;
                                  }
                                  for (std::int64_t i = 0; i < V; ++i) {
                                      d[r * V + i] += k * probs[r * V + i];
                                  }
                                  d[r * V + targets[static_cast<std::size_t>(r)]] -= k;
                              }
                          });
}

#define HWM_INSTANTIATE_OPS(T)                                                                                  \
    template Var<T> reshape(Var<T>, Shape);                                                                     \
    template Var<T> permute(Var<T>, const std::vector<int>&);                                                   \
    template Var<T> concat(const std::vector<Var<T>>&, int);                                                    \
    template Var<T> slice(Var<T>, int, std::int64_t, std::int64_t);                                             \
    template Var<T> repeat_axis(Var<T>, int, std::int64_t);                                                     \
    template Var<T> mean_axis(Var<T>, int);                                                                     \
    template Var<T> add(Var<T>, Var<T>);                                                                        \
    template Var<T> sub(Var<T>, Var<T>);                                                                        \
    template Var<T> mul(Var<T>, Var<T>);                                                                        \
    template Var<T> scale(Var<T>, T);                                                                           \
    template Var<T> gelu(Var<T>);                                                                               \
    template Var<T> matmul(Var<T>, Var<T>);                                                                     \
    template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                             \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, int);                                                    \
    template Var<T> softmax(Var<T>, int);                                                                       \
    template Var<T> modulate(Var<T>, Var<T>, Var<T>);                                                           \
    template Var<T> gate(Var<T>, Var<T>);                                                                       \
    template Var<T> attention(Var<T>, Var<T>, Var<T>, int, Tensor<T>*);                                         \
    template Var<T> rotate_pairs(Var<T>, const Tensor<T>&, const Tensor<T>&);                                   \
    template Var<T> embedding(Var<T>, const std::vector<std::int64_t>&, Shape);                                 \
    template Var<T> select_batch(Var<T>, Var<T>, const std::vector<std::uint8_t>&);                             \
    template Var<T> sum(Var<T>);                                                                                \
    template Var<T> mean(Var<T>);                                                                               \
    template Var<T> mse(Var<T>, Var<T>);                                                                        \
    template Var<T> masked_cross_entropy(Var<T>, const std::vector<std::int64_t>&, const std::vector<std::uint8_t>&, \
                                         bool*);

HWM_INSTANTIATE_OPS(float)
HWM_INSTANTIATE_OPS(double)

}  // namespace hwm::num
