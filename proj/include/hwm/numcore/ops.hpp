#pragma once

#include <cstdint>
#include <vector>

#include "hwm/numcore/graph.hpp"

namespace hwm::num {

// Shape manipulation.
template <class T>
Var<T> reshape(Var<T> x, Shape shape);
template <class T>
Var<T> permute(Var<T> x, const std::vector<int>& perm);
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <class T>
Var<T> slice(Var<T> x, int axis, std::int64_t start, std::int64_t length);
// Inserts a new axis of extent n at `axis`, copying x along it.
template <class T>
Var<T> repeat_axis(Var<T> x, int axis, std::int64_t n);
// Mean over `axis`, which is removed from the shape.
template <class T>
Var<T> mean_axis(Var<T> x, int axis);

// Elementwise. The second operand's shape must equal a suffix of the first's
// (broadcast over leading extents only).
template <class T>
Var<T> add(Var<T> a, Var<T> b);
template <class T>
Var<T> sub(Var<T> a, Var<T> b);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> scale(Var<T> x, T s);
template <class T>
Var<T> gelu(Var<T> x);

// a [..., m, k] · b [..., k, n]; batch extents equal or one side unbatched.
template <class T>
Var<T> matmul(Var<T> a, Var<T> b);
// x [..., in] · w [in, out] + bias [out]. Pass an invalid Var for no bias.
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias = {});

// Normalizes over `axis` with eps 1e-5. gain/bias are optional.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain = {}, Var<T> bias = {}, int axis = -1);
template <class T>
Var<T> softmax(Var<T> x, int axis = -1);

// x [B, N, h] * (1 + scale[B, h]) + shift[B, h].
template <class T>
Var<T> modulate(Var<T> x, Var<T> shift, Var<T> scale);
// x [B, N, h] * g[B, h].
template <class T>
Var<T> gate(Var<T> x, Var<T> g);

// Multi-head scaled dot-product attention on token-major layout:
// q [B, Nq, h], k [B, Nk, h], v [B, Nk, h] -> [B, Nq, h]. When `probs` is
// given it receives the weights [B, heads, Nq, Nk].
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, int heads, Tensor<T>* probs = nullptr);

// Rotates adjacent pairs of every head chunk of x [..., n, heads*d] by the
// angles tabulated in cos/sin [n, d/2].
template <class T>
Var<T> rotate_pairs(Var<T> x, const Tensor<T>& cos, const Tensor<T>& sin);

// Rows of table [V, h] selected by ids; output shape prefix + [h].
template <class T>
Var<T> embedding(Var<T> table, const std::vector<std::int64_t>& ids, Shape prefix);

// out[b] = use_null[b] ? null (broadcast) : x[b]; null's shape is a suffix of
// x's per-item shape.
template <class T>
Var<T> select_batch(Var<T> x, Var<T> null, const std::vector<std::uint8_t>& use_null);

// Reductions and losses.
template <class T>
Var<T> sum(Var<T> x);
template <class T>
Var<T> mean(Var<T> x);
template <class T>
Var<T> mse(Var<T> a, Var<T> b);
// Mean NLL over rows where mask != 0. logits [N, s]. An empty mask yields 0
// and sets *empty when provided.
template <class T>
Var<T> masked_cross_entropy(Var<T> logits, const std::vector<std::int64_t>& targets,
                            const std::vector<std::uint8_t>& mask, bool* empty = nullptr);

}  // namespace hwm::num
