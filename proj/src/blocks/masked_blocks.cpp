#include "hwm/blocks/blocks.hpp"

namespace hwm::blocks {

using num::Var;

namespace {

template <class T>
Var<T> attn_layer(num::Graph<T>& g, const std::string& prefix, Var<T> x, int heads, const rope::Tables<T>& tab,
                  AttentionProbe<T>* probe) {
    const std::int64_t h = x.dim(-1);
    const auto qkv = linear_p(g, prefix + ".qkv", norm_p(g, prefix + ".norm", x));
    const auto q = rope::rope_apply(num::slice(qkv, -1, 0, h), tab);
    const auto k = rope::rope_apply(num::slice(qkv, -1, h, h), tab);
    const auto v = num::slice(qkv, -1, 2 * h, h);
    num::Tensor<T> probs;
    const auto o = num::attention(q, k, v, heads, probe ? &probs : nullptr);
    if (probe) {
        probe->push_back(std::move(probs));
    }
    return linear_p(g, prefix + ".out", o);
}

// [B, frames * sites, h] <-> [B * sites, frames, h]
template <class T>
Var<T> to_sites(Var<T> v, std::int64_t b, std::int64_t frames, std::int64_t sites) {
    const std::int64_t h = v.dim(-1);
    return num::reshape(num::permute(num::reshape(v, {b, frames, sites, h}), {0, 2, 1, 3}), {b * sites, frames, h});
}

template <class T>
Var<T> from_sites(Var<T> v, std::int64_t b, std::int64_t frames, std::int64_t sites) {
    const std::int64_t h = v.dim(-1);
    return num::reshape(num::permute(num::reshape(v, {b, sites, frames, h}), {0, 2, 1, 3}), {b, frames * sites, h});
}

void check_geometry(const MaskedGeometry& geo) {
    if (geo.batch < 1 || geo.past_frames < 1 || geo.future_frames < 1 || geo.rows < 1 || geo.cols < 1 ||
        geo.past_actions < 1 || geo.future_actions < 1) {
        throw ConfigError("masked geometry extents must be positive");
    }
}

}  // namespace

template <class T>
MaskedTables<T> make_masked_tables(int head_dim, const MaskedGeometry& geo, double rope_base) {
    check_geometry(geo);
    const auto pos = rope::build_positions(rope::StreamLayout{
        static_cast<int>(geo.past_frames), static_cast<int>(geo.future_frames), static_cast<int>(geo.rows),
        static_cast<int>(geo.cols), static_cast<int>(geo.past_actions), static_cast<int>(geo.future_actions), -1});
    const auto s1 = rope::spec_1d(head_dim, rope_base);
    MaskedTables<T> t;
    t.spatial = rope::make_tables<T>(rope::spec_2d(head_dim, rope_base), rope::grid_positions(static_cast<int>(geo.rows),
                                                                                  static_cast<int>(geo.cols)));
    t.stream[VP] = rope::make_tables<T>(s1, rope::time_positions(0, geo.past_frames));
    t.stream[VF] = rope::make_tables<T>(s1, rope::time_positions(geo.past_frames, geo.future_frames));
    t.stream[AP] = rope::make_tables<T>(s1, pos.a_p);
    t.stream[AF] = rope::make_tables<T>(s1, pos.a_f);
    t.temporal = rope::concat_tables<T>({&t.stream[VP], &t.stream[VF], &t.stream[AP], &t.stream[AF]});
    t.context = rope::concat_tables<T>({&t.stream[VP], &t.stream[AP], &t.stream[AF]});
    return t;
}

template <class T>
void declare_masked_blocks(num::ParamStore<T>& store, const BlockConfig& cfg) {
    validate(cfg);
    const std::int64_t h = cfg.h, m = cfg.mlp_hidden;
    auto attn = [&](std::vector<ParamDecl>& d, const std::string& name) {
        add_norm(d, name + ".norm", h);
        add_linear(d, name + ".qkv", h, 3 * h);
        add_linear(d, name + ".out", h, h);
    };
    auto mlp = [&](std::vector<ParamDecl>& d) {
        add_norm(d, "mlp.norm", h);
        add_linear(d, "mlp.fc1", h, m);
        add_linear(d, "mlp.fc2", m, h);
    };
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = "blocks." + std::to_string(l) + ".";
        if (cfg.variant != Variant::Split) {
            std::vector<ParamDecl> shared;
            attn(shared, "spatial");
            attn(shared, "temporal");
            for (const auto& d : shared) {
                store.declare(lp + d.suffix, d.shape, d.decay);
            }
            for (int s = 0; s < 4; ++s) {
                std::vector<ParamDecl> d;
                mlp(d);
                declare_stream(store, cfg, l, s, d);
            }
            continue;
        }
        for (int s = 0; s < 4; ++s) {
            std::vector<ParamDecl> d;
            if (s == VP || s == VF) {
                attn(d, "spatial");
            }
            attn(d, "temporal");
            if (s == VF) {
                add_norm(d, "cross.norm_q", h);
                add_norm(d, "cross.norm_kv", h);
                add_linear(d, "cross.q", h, h);
                add_linear(d, "cross.kv", h, 2 * h);
                add_linear(d, "cross.out", h, h);
                mlp(d);
            }
            declare_stream(store, cfg, l, s, d);
        }
    }
}

template <class T>
Streams<T> masked_spatial(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x,
                          const MaskedGeometry& geo, const MaskedTables<T>& tables, AttentionProbe<T>* probe) {
    const std::int64_t b = geo.batch, s = geo.sites(), h = cfg.h;
    Streams<T> out = x;
    if (cfg.variant == Variant::Split) {
        for (const int st : {VP, VF}) {
            const std::int64_t frames = st == VP ? geo.past_frames : geo.future_frames;
            const auto v = num::reshape(x[static_cast<std::size_t>(st)], {b * frames, s, h});
            const auto d = attn_layer(g, stream_prefix(layer, st) + ".spatial", v, cfg.heads, tables.spatial, probe);
            out[static_cast<std::size_t>(st)] = num::reshape(num::add(v, d), {b, frames * s, h});
        }
        return out;
    }
    const auto v = num::reshape(num::concat(std::vector<Var<T>>{x[VP], x[VF]}, 1), {b * geo.frames(), s, h});
    const auto d = attn_layer(g, "blocks." + std::to_string(layer) + ".spatial", v, cfg.heads, tables.spatial, probe);
    const auto y = num::reshape(num::add(v, d), {b, geo.frames() * s, h});
    out[VP] = num::slice(y, 1, 0, geo.past_frames * s);
    out[VF] = num::slice(y, 1, geo.past_frames * s, geo.future_frames * s);
    return out;
}

template <class T>
Streams<T> masked_temporal(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x,
                           const MaskedGeometry& geo, const MaskedTables<T>& tables, AttentionProbe<T>* probe) {
    const std::int64_t b = geo.batch, s = geo.sites(), h = cfg.h;
    const std::int64_t p = geo.past_frames, f = geo.future_frames, na = geo.actions();
    Streams<T> out = x;
    if (cfg.variant == Variant::Split) {
        for (int st = 0; st < 4; ++st) {
            const auto prefix = stream_prefix(layer, st) + ".temporal";
            const auto& tab = tables.stream[static_cast<std::size_t>(st)];
            const auto xs = x[static_cast<std::size_t>(st)];
            if (st == VP || st == VF) {
                const std::int64_t frames = st == VP ? p : f;
                const auto v = to_sites(xs, b, frames, s);
                out[static_cast<std::size_t>(st)] =
                    from_sites(num::add(v, attn_layer(g, prefix, v, cfg.heads, tab, probe)), b, frames, s);
            } else {
                out[static_cast<std::size_t>(st)] = num::add(xs, attn_layer(g, prefix, xs, cfg.heads, tab, probe));
            }
        }
        // Future video attends to past video and actions at its own site.
        const auto prefix = stream_prefix(layer, VF) + ".cross";
        const auto vf = to_sites(out[VF], b, f, s);
        const auto acts = num::reshape(
            num::repeat_axis(num::concat(std::vector<Var<T>>{out[AP], out[AF]}, 1), 1, s), {b * s, na, h});
        const auto ctx = num::concat(std::vector<Var<T>>{to_sites(out[VP], b, p, s), acts}, 1);
        const auto q = linear_p(g, prefix + ".q", norm_p(g, prefix + ".norm_q", vf));
        const auto kv = linear_p(g, prefix + ".kv", norm_p(g, prefix + ".norm_kv", ctx));
        num::Tensor<T> probs;
        const auto o = num::attention(rope::rope_apply(q, tables.stream[VF]),
                                      rope::rope_apply(num::slice(kv, -1, 0, h), tables.context),
                                      num::slice(kv, -1, h, h), cfg.heads, probe ? &probs : nullptr);
        if (probe) {
            probe->push_back(std::move(probs));
        }
        out[VF] = from_sites(num::add(vf, linear_p(g, prefix + ".out", o)), b, f, s);
        return out;
    }

    const auto video = to_sites(num::concat(std::vector<Var<T>>{x[VP], x[VF]}, 1), b, p + f, s);
    const auto acts = num::concat(std::vector<Var<T>>{x[AP], x[AF]}, 1);
    const auto seq = num::concat(std::vector<Var<T>>{video, num::reshape(num::repeat_axis(acts, 1, s), {b * s, na, h})}, 1);
    const auto d = attn_layer(g, "blocks." + std::to_string(layer) + ".temporal", seq, cfg.heads, tables.temporal, probe);
    const auto v = from_sites(num::add(video, num::slice(d, 1, 0, p + f)), b, p + f, s);
    const auto da = num::mean_axis(num::reshape(num::slice(d, 1, p + f, na), {b, s, na, h}), 1);
    const auto a = num::add(acts, da);
    out[VP] = num::slice(v, 1, 0, p * s);
    out[VF] = num::slice(v, 1, p * s, f * s);
    out[AP] = num::slice(a, 1, 0, geo.past_actions);
    out[AF] = num::slice(a, 1, geo.past_actions, geo.future_actions);
    return out;
}

template <class T>
Streams<T> masked_mlp(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x) {
    Streams<T> out = x;
    if (cfg.variant == Variant::Split) {
        const auto prefix = stream_prefix(layer, VF) + ".mlp";
        out[VF] = num::add(x[VF], mlp_p(g, prefix, norm_p(g, prefix + ".norm", x[VF])));
        return out;
    }
    for (const auto& members : stream_groups(cfg, layer, {VP, VF, AP, AF})) {
        const auto prefix = stream_prefix(layer, canonical_stream(cfg, layer, members[0])) + ".mlp";
        std::vector<Var<T>> parts;
        for (const int s : members) {
            parts.push_back(x[static_cast<std::size_t>(s)]);
        }
        const auto xg = parts.size() == 1 ? parts[0] : num::concat(parts, 1);
        const auto y = num::add(xg, mlp_p(g, prefix, norm_p(g, prefix + ".norm", xg)));
        if (members.size() == 1) {
            out[static_cast<std::size_t>(members[0])] = y;
            continue;
        }
        std::int64_t off = 0;
        for (const int s : members) {
            const std::int64_t n = x[static_cast<std::size_t>(s)].dim(1);
            out[static_cast<std::size_t>(s)] = num::slice(y, 1, off, n);
            off += n;
        }
    }
    return out;
}

template <class T>
Streams<T> masked_block(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x,
                        const MaskedGeometry& geo, const MaskedTables<T>& tables, AttentionProbe<T>* probe) {
    auto y = masked_spatial(g, cfg, layer, x, geo, tables, probe);
    y = masked_temporal(g, cfg, layer, y, geo, tables, probe);
    return masked_mlp(g, cfg, layer, y);
}

#define HWM_INSTANTIATE_MASKED(T)                                                                                  \
    template MaskedTables<T> make_masked_tables<T>(int, const MaskedGeometry&, double);                           \
    template void declare_masked_blocks(num::ParamStore<T>&, const BlockConfig&);                                 \
    template Streams<T> masked_spatial(num::Graph<T>&, const BlockConfig&, int, const Streams<T>&,                \
                                       const MaskedGeometry&, const MaskedTables<T>&, AttentionProbe<T>*);        \
    template Streams<T> masked_temporal(num::Graph<T>&, const BlockConfig&, int, const Streams<T>&,               \
                                        const MaskedGeometry&, const MaskedTables<T>&, AttentionProbe<T>*);       \
    template Streams<T> masked_mlp(num::Graph<T>&, const BlockConfig&, int, const Streams<T>&);                   \
    template Streams<T> masked_block(num::Graph<T>&, const BlockConfig&, int, const Streams<T>&,                  \
                                     const MaskedGeometry&, const MaskedTables<T>&, AttentionProbe<T>*);

HWM_INSTANTIATE_MASKED(float)
HWM_INSTANTIATE_MASKED(double)

}  // namespace hwm::blocks
