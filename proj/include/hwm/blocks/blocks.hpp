#pragma once

#include <array>
#include <string>
#include <vector>

#include "hwm/blocks/config.hpp"
#include "hwm/numcore/ops.hpp"
#include "hwm/rope/rope.hpp"

namespace hwm::blocks {

template <class T>
using Streams = std::array<num::Var<T>, 4>;

// Receives attention weights [B, heads, Nq, Nk] of every attention call.
template <class T>
using AttentionProbe = std::vector<num::Tensor<T>>;

// ---- shared layers ----

template <class T>
num::Var<T> linear_p(num::Graph<T>& g, const std::string& name, num::Var<T> x);
template <class T>
num::Var<T> mlp_p(num::Graph<T>& g, const std::string& prefix, num::Var<T> x);
// Affine layer norm with <prefix>.g / <prefix>.b.
template <class T>
num::Var<T> norm_p(num::Graph<T>& g, const std::string& prefix, num::Var<T> x);

// ---- flow-matching family: timestep-modulated joint or split blocks ----

// Rotary tables for streams laid out as [B, n_s, h]: video streams use 3D
// (t, y, x) positions, action streams 1D.
template <class T>
struct FlowTables {
    std::array<rope::Tables<T>, 4> stream;
    rope::Tables<T> joint;    // v_p, v_f, a_p, a_f
    rope::Tables<T> context;  // v_p, a_p, a_f
};

template <class T>
FlowTables<T> make_flow_tables(int head_dim, const rope::StreamLayout& layout, double rope_base = 10000.0);

template <class T>
void declare_flow_blocks(num::ParamStore<T>& store, const BlockConfig& cfg);

// cond [B, time_dim] is the activated timestep embedding.
template <class T>
Streams<T> flow_block(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x, num::Var<T> cond,
                      const FlowTables<T>& tables, AttentionProbe<T>* probe = nullptr);

// ---- masked family: factorized spatial/temporal blocks ----

// Token counts of one forward pass. Video streams are [B, frames * sites, h],
// action streams [B, actions, h].
struct MaskedGeometry {
    std::int64_t batch = 1;
    std::int64_t past_frames = 2;
    std::int64_t future_frames = 1;
    std::int64_t rows = 8;
    std::int64_t cols = 8;
    std::int64_t past_actions = 2;
    std::int64_t future_actions = 1;

    std::int64_t sites() const { return rows * cols; }
    std::int64_t frames() const { return past_frames + future_frames; }
    std::int64_t actions() const { return past_actions + future_actions; }
};

template <class T>
struct MaskedTables {
    rope::Tables<T> spatial;                // [sites], (y, x)
    rope::Tables<T> temporal;               // video frames then actions, t
    std::array<rope::Tables<T>, 4> stream;  // per-stream t
    rope::Tables<T> context;                // v_p frames then actions, t
};

template <class T>
MaskedTables<T> make_masked_tables(int head_dim, const MaskedGeometry& geo, double rope_base = 10000.0);

template <class T>
void declare_masked_blocks(num::ParamStore<T>& store, const BlockConfig& cfg);

// Attention over the sites of each frame, video streams only.
template <class T>
Streams<T> masked_spatial(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x,
                          const MaskedGeometry& geo, const MaskedTables<T>& tables, AttentionProbe<T>* probe = nullptr);
// Attention along time at each site. Action tokens join every site's
// sequence and receive the site-averaged update.
template <class T>
Streams<T> masked_temporal(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x,
                           const MaskedGeometry& geo, const MaskedTables<T>& tables,
                           AttentionProbe<T>* probe = nullptr);
template <class T>
Streams<T> masked_mlp(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x);

template <class T>
Streams<T> masked_block(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x,
                        const MaskedGeometry& geo, const MaskedTables<T>& tables, AttentionProbe<T>* probe = nullptr);

}  // namespace hwm::blocks
