#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hwm/blocks/blocks.hpp"
#include "hwm/world/world.hpp"

namespace hwm::flow {

class SampleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FlowConfig {
    blocks::BlockConfig blocks{blocks::Variant::Base, 4, 128, 8, 512, 4, true, 128};
    int channels = 16;
    int action_dim = 4;
    int grid = 8;
    int p_lw = 2;
    int p_t = 1;
    int past_frames = 2;
    int future_frames = 1;
    int freq_dim = 256;  // sinusoidal timestep features
    double sigma_min = 1e-4;
    double cond_drop = 0.1;
    double cfg_scale = 3.0;
    int sample_steps = 50;

    std::int64_t patch_dim() const { return static_cast<std::int64_t>(p_t) * p_lw * p_lw * channels; }
    std::int64_t tokens_per_frame() const { return static_cast<std::int64_t>(grid / p_lw) * (grid / p_lw); }
    std::int64_t past_tokens() const { return past_frames / p_t * tokens_per_frame(); }
    std::int64_t future_tokens() const { return future_frames / p_t * tokens_per_frame(); }
    rope::StreamLayout layout() const;
};

void validate(const FlowConfig& cfg);

// Latents [B, T, C, G, G] <-> tokens [B, (T/p_t)(G/p_lw)^2, p_t p_lw^2 C].
// Tokens run over (t, y, x) patches; features over (dt, c, dy, dx).
template <class T>
num::Tensor<T> patchify(const num::Tensor<T>& latents, int p_lw, int p_t);
template <class T>
num::Tensor<T> unpatchify(const num::Tensor<T>& tokens, int frames, int channels, int grid, int p_lw, int p_t);

// xt = t x1 + (1 - (1 - sigma_min) t) x0, vt = x1 - (1 - sigma_min) x0, with
// one t per leading batch item.
template <class T>
struct Interpolant {
    num::Tensor<T> xt;
    num::Tensor<T> vt;
};
template <class T>
Interpolant<T> interpolate(const num::Tensor<T>& x0, const num::Tensor<T>& x1, const std::vector<double>& t,
                           double sigma_min);
std::pair<double, double> interpolate(double x0, double x1, double t, double sigma_min);

// u_uncond + scale (u_cond - u_uncond); scale 1 returns u_cond as is.
template <class T>
num::Tensor<T> cfg_combine(const num::Tensor<T>& u_cond, const num::Tensor<T>& u_uncond, double scale);

// [B, dim] cos/sin features of 1000 t.
template <class T>
num::Tensor<T> timestep_embedding(const std::vector<double>& t, int dim);

template <class T>
struct FlowInput {
    std::int64_t batch = 0;
    num::Tensor<T> past;            // tokens [B, past_tokens, patch_dim]
    num::Tensor<T> xt;              // tokens [B, future_tokens, patch_dim]
    num::Tensor<T> past_actions;    // [B, past_frames, z]
    num::Tensor<T> future_actions;  // [B, future_frames, z]
    std::vector<double> t;
    std::vector<std::uint8_t> drop;  // 1 -> conditioning replaced by null embeddings
};

template <class T>
void declare_model(num::ParamStore<T>& store, const FlowConfig& cfg);

// Predicted velocity in token space [B, future_tokens, patch_dim].
template <class T>
num::Var<T> forward(num::Graph<T>& g, const FlowConfig& cfg, const FlowInput<T>& in,
                    const blocks::FlowTables<T>& tables, blocks::AttentionProbe<T>* probe = nullptr);

template <class T>
num::Var<T> loss(num::Graph<T>& g, const FlowConfig& cfg, const FlowInput<T>& in, const num::Tensor<T>& target,
                 const blocks::FlowTables<T>& tables);

struct FlowBatch {
    FlowInput<float> input;
    num::Tensor<float> x0;      // token space
    num::Tensor<float> x1;
    num::Tensor<float> target;  // vt
};

// Conditioning tokens and actions of the episodes with xt/t left empty.
FlowInput<float> conditioning(const std::vector<world::Episode>& episodes, const FlowConfig& cfg);
// t ~ U(0,1) and x0 ~ N(0, I) per item; conditioning dropped with
// probability cond_drop.
FlowBatch make_batch(const std::vector<world::Episode>& episodes, const FlowConfig& cfg, std::uint64_t seed);

// Velocity field over token-space states for a fixed conditioning.
using VelocityFn = std::function<num::Tensor<float>(const num::Tensor<float>& x, double t, bool uncond)>;
VelocityFn model_velocity(num::ParamStore<float>& store, const FlowConfig& cfg, const FlowInput<float>& cond);

// Euler integration from t=0 to 1 with guided velocities.
num::Tensor<float> euler_sample(const VelocityFn& velocity, num::Tensor<float> x0, int steps, double scale);

// Samples future latents for every episode and returns them as clips.
std::vector<world::LatentClip> sample_futures(num::ParamStore<float>& store, const FlowConfig& cfg,
                                              const std::vector<world::Episode>& episodes, int steps, double scale,
                                              std::uint64_t seed);

}  // namespace hwm::flow
