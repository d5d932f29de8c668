#include <memory>

#include "hwm/flow/flow.hpp"
#include "hwm/numcore/rng.hpp"

namespace hwm::flow {

using num::Var;

rope::StreamLayout FlowConfig::layout() const {
    return {past_frames / p_t, future_frames / p_t, grid / p_lw, grid / p_lw, past_frames, future_frames, -1};
}

void validate(const FlowConfig& cfg) {
    blocks::validate(cfg.blocks);
    if (!cfg.blocks.time_modulation) {
        throw blocks::ConfigError("flow blocks require time modulation");
    }
    if (cfg.channels < 1 || cfg.action_dim < 1 || cfg.grid < 1 || cfg.past_frames < 1 || cfg.future_frames < 1) {
        throw blocks::ConfigError("flow model extents must be positive");
    }
    if (cfg.p_lw < 1 || cfg.grid % cfg.p_lw != 0) {
        throw blocks::ConfigError("grid " + std::to_string(cfg.grid) + " is not divisible by p_lw " +
                                  std::to_string(cfg.p_lw));
    }
    // Action tokens are per latent frame, so their time axis must match the
    // video token time axis.
    if (cfg.p_t != 1) {
        throw blocks::ConfigError("p_t must be 1 for action-conditioned streams");
    }
    if (cfg.freq_dim < 2 || cfg.freq_dim % 2 != 0) {
        throw blocks::ConfigError("freq_dim must be even");
    }
    if (!(cfg.sigma_min >= 0 && cfg.sigma_min < 1) || !(cfg.cond_drop >= 0 && cfg.cond_drop < 1) ||
        !(cfg.cfg_scale >= 0)) {
        throw blocks::ConfigError("sigma_min, cond_drop in [0, 1) and cfg_scale >= 0 required");
    }
    if (cfg.sample_steps < 1) {
        throw blocks::ConfigError("sample_steps must be >= 1");
    }
}

template <class T>
void declare_model(num::ParamStore<T>& store, const FlowConfig& cfg) {
    validate(cfg);
    const std::int64_t h = cfg.blocks.h, m = cfg.blocks.mlp_hidden, dt = cfg.blocks.time_dim;
    const std::int64_t pd = cfg.patch_dim(), z = cfg.action_dim;
    auto linear = [&](const std::string& name, std::int64_t in, std::int64_t out, bool decay = true) {
        store.declare(name + ".w", {in, out}, decay);
        store.declare(name + ".b", {out}, false);
    };
    linear("time.fc1", cfg.freq_dim, dt);
    linear("time.fc2", dt, dt);
    linear("patch.v_p", pd, h);
    linear("patch.v_f", pd, h);
    for (const char* st : {"a_p", "a_f"}) {
        linear(std::string("action_embed.") + st + ".fc1", z, m);
        linear(std::string("action_embed.") + st + ".fc2", m, h);
    }
    for (const char* st : {"v_p", "a_p", "a_f"}) {
        store.declare(std::string("null.") + st, {h}, false);
    }
    blocks::declare_flow_blocks(store, cfg.blocks);
    linear("final.mod", dt, 2 * h, false);
    linear("final.linear", h, pd);
}

template <class T>
Var<T> forward(num::Graph<T>& g, const FlowConfig& cfg, const FlowInput<T>& in, const blocks::FlowTables<T>& tables,
               blocks::AttentionProbe<T>* probe) {
    const std::int64_t b = in.batch, h = cfg.blocks.h;
    if (static_cast<std::int64_t>(in.t.size()) != b) {
        throw num::DimensionError("flow forward: one t per batch item required");
    }
    const auto temb = blocks::mlp_p(g, "time", g.constant(timestep_embedding<T>(in.t, cfg.freq_dim)));
    const auto cond = num::gelu(temb);

    blocks::Streams<T> x;
    x[blocks::VP] = blocks::linear_p(g, "patch.v_p", g.constant(in.past));
    x[blocks::VF] = blocks::linear_p(g, "patch.v_f", g.constant(in.xt));
    x[blocks::AP] = blocks::mlp_p(g, "action_embed.a_p", g.constant(in.past_actions));
    x[blocks::AF] = blocks::mlp_p(g, "action_embed.a_f", g.constant(in.future_actions));
    bool any_drop = false;
    for (const auto d : in.drop) {
        any_drop = any_drop || d;
    }
    if (any_drop) {
        if (static_cast<std::int64_t>(in.drop.size()) != b) {
            throw num::DimensionError("flow forward: one drop flag per batch item required");
        }
        x[blocks::VP] = num::select_batch(x[blocks::VP], g.param("null.v_p"), in.drop);
        x[blocks::AP] = num::select_batch(x[blocks::AP], g.param("null.a_p"), in.drop);
        x[blocks::AF] = num::select_batch(x[blocks::AF], g.param("null.a_f"), in.drop);
    }
    for (int l = 0; l < cfg.blocks.layers; ++l) {
        x = blocks::flow_block(g, cfg.blocks, l, x, cond, tables, probe);
    }
    const auto mod = blocks::linear_p(g, "final.mod", cond);
    const auto y = num::modulate(num::layer_norm(x[blocks::VF]), num::slice(mod, 1, 0, h), num::slice(mod, 1, h, h));
    return blocks::linear_p(g, "final.linear", y);
}

template <class T>
Var<T> loss(num::Graph<T>& g, const FlowConfig& cfg, const FlowInput<T>& in, const num::Tensor<T>& target,
            const blocks::FlowTables<T>& tables) {
    return num::mse(forward(g, cfg, in, tables), g.constant(target));
}

namespace {

num::Tensor<float> stack_latents(const std::vector<world::Episode>& episodes, bool future, const FlowConfig& cfg) {
    const auto b = static_cast<std::int64_t>(episodes.size());
    const int frames = future ? cfg.future_frames : cfg.past_frames;
    num::Tensor<float> out({b, frames, cfg.channels, cfg.grid, cfg.grid});
    const std::int64_t per = out.numel() / std::max<std::int64_t>(b, 1);
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& clip = future ? episodes[static_cast<std::size_t>(i)].future_latents
                                  : episodes[static_cast<std::size_t>(i)].past_latents;
        if (clip.frames != frames || clip.C != cfg.channels || clip.G != cfg.grid) {
            throw blocks::ConfigError("episode latents do not match the flow model config");
        }
        std::copy(clip.values.begin(), clip.values.end(), out.data() + i * per);
    }
    return out;
}

num::Tensor<float> stack_actions(const std::vector<world::Episode>& episodes, bool future, const FlowConfig& cfg) {
    const auto b = static_cast<std::int64_t>(episodes.size());
    const int frames = future ? cfg.future_frames : cfg.past_frames;
    num::Tensor<float> out({b, frames, cfg.action_dim});
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& a = future ? episodes[static_cast<std::size_t>(i)].future_actions
                               : episodes[static_cast<std::size_t>(i)].past_actions;
        if (a.frames != frames || a.z != cfg.action_dim) {
            throw blocks::ConfigError("episode actions do not match the flow model config");
        }
        std::copy(a.values.begin(), a.values.end(), out.data() + i * frames * cfg.action_dim);
    }
    return out;
}

}  // namespace

FlowInput<float> conditioning(const std::vector<world::Episode>& episodes, const FlowConfig& cfg) {
    FlowInput<float> in;
    in.batch = static_cast<std::int64_t>(episodes.size());
    in.past = patchify(stack_latents(episodes, false, cfg), cfg.p_lw, cfg.p_t);
    in.past_actions = stack_actions(episodes, false, cfg);
    in.future_actions = stack_actions(episodes, true, cfg);
    in.drop.assign(episodes.size(), 0);
    return in;
}

FlowBatch make_batch(const std::vector<world::Episode>& episodes, const FlowConfig& cfg, std::uint64_t seed) {
    FlowBatch out;
    out.input = conditioning(episodes, cfg);
    out.x1 = patchify(stack_latents(episodes, true, cfg), cfg.p_lw, cfg.p_t);
    out.x0 = num::Tensor<float>(out.x1.shape());
    Rng rng(seed);
    for (std::int64_t i = 0; i < out.x0.numel(); ++i) {
        out.x0[i] = static_cast<float>(rng.normal());
    }
    out.input.t.resize(episodes.size());
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        out.input.t[i] = rng.uniform();
        out.input.drop[i] = rng.uniform() < cfg.cond_drop ? 1 : 0;
    }
    auto path = interpolate(out.x0, out.x1, out.input.t, cfg.sigma_min);
    out.input.xt = std::move(path.xt);
    out.target = std::move(path.vt);
    return out;
}

VelocityFn model_velocity(num::ParamStore<float>& store, const FlowConfig& cfg, const FlowInput<float>& cond) {
    auto tables = std::make_shared<blocks::FlowTables<float>>(
        blocks::make_flow_tables<float>(cfg.blocks.head_dim(), cfg.layout(), cfg.blocks.rope_base));
    auto base = std::make_shared<FlowInput<float>>(cond);
    return [&store, cfg, tables, base](const num::Tensor<float>& x, double t, bool uncond) {
        FlowInput<float> in = *base;
        in.xt = x;
        in.t.assign(static_cast<std::size_t>(in.batch), t);
        in.drop.assign(static_cast<std::size_t>(in.batch), uncond ? 1 : 0);
        num::Graph<float> g(&store, false);
        return forward(g, cfg, in, *tables).value();
    };
}

std::vector<world::LatentClip> sample_futures(num::ParamStore<float>& store, const FlowConfig& cfg,
                                              const std::vector<world::Episode>& episodes, int steps, double scale,
                                              std::uint64_t seed) {
    const auto cond = conditioning(episodes, cfg);
    num::Tensor<float> x0({cond.batch, cfg.future_tokens(), cfg.patch_dim()});
    Rng rng(seed);
    for (std::int64_t i = 0; i < x0.numel(); ++i) {
        x0[i] = static_cast<float>(rng.normal());
    }
    const auto x = euler_sample(model_velocity(store, cfg, cond), std::move(x0), steps, scale);
    const auto lat = unpatchify(x, cfg.future_frames, cfg.channels, cfg.grid, cfg.p_lw, cfg.p_t);
    std::vector<world::LatentClip> out;
    const std::int64_t per = lat.numel() / std::max<std::int64_t>(cond.batch, 1);
    for (std::int64_t i = 0; i < cond.batch; ++i) {
        world::LatentClip clip(cfg.future_frames, cfg.channels, cfg.grid);
        std::copy_n(lat.data() + i * per, per, clip.values.begin());
        out.push_back(std::move(clip));
    }
    return out;
}

template void declare_model(num::ParamStore<float>&, const FlowConfig&);
template void declare_model(num::ParamStore<double>&, const FlowConfig&);
template Var<float> forward(num::Graph<float>&, const FlowConfig&, const FlowInput<float>&,
                            const blocks::FlowTables<float>&, blocks::AttentionProbe<float>*);
template Var<double> forward(num::Graph<double>&, const FlowConfig&, const FlowInput<double>&,
                             const blocks::FlowTables<double>&, blocks::AttentionProbe<double>*);
template Var<float> loss(num::Graph<float>&, const FlowConfig&, const FlowInput<float>&, const num::Tensor<float>&,
                         const blocks::FlowTables<float>&);
template Var<double> loss(num::Graph<double>&, const FlowConfig&, const FlowInput<double>&, const num::Tensor<double>&,
                          const blocks::FlowTables<double>&);

}  // namespace hwm::flow
