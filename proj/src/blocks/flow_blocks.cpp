#include <numeric>

#include "hwm/blocks/blocks.hpp"

namespace hwm::blocks {

using num::Var;

namespace {

template <class T>
std::vector<Var<T>> chunks(Var<T> x, int axis, std::int64_t width, int n) {
    std::vector<Var<T>> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(num::slice(x, axis, i * width, width));
    }
    return out;
}

template <class T>
Var<T> cat(const std::vector<Var<T>>& xs, int axis) {
    return xs.size() == 1 ? xs[0] : num::concat(xs, axis);
}

template <class T>
Var<T> attend(Var<T> q, Var<T> k, Var<T> v, int heads, AttentionProbe<T>* probe) {
    if (!probe) {
        return num::attention(q, k, v, heads);
    }
    num::Tensor<T> probs;
    auto out = num::attention(q, k, v, heads, &probs);
    probe->push_back(std::move(probs));
    return out;
}

template <class T>
Streams<T> joint_block(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x, Var<T> cond,
                       const FlowTables<T>& tables, AttentionProbe<T>* probe) {
    const std::int64_t h = cfg.h;
    const auto groups = stream_groups(cfg, layer, {VP, VF, AP, AF});
    struct Group {
        std::string prefix;
        Var<T> x;
        std::vector<Var<T>> mod;
        std::vector<std::int64_t> lens;
    };
    std::vector<Group> gs;
    std::vector<Var<T>> qs, ks, vs;
    for (const auto& members : groups) {
        Group gr;
        gr.prefix = stream_prefix(layer, canonical_stream(cfg, layer, members[0]));
        std::vector<Var<T>> parts;
        for (const int s : members) {
            parts.push_back(x[static_cast<std::size_t>(s)]);
            gr.lens.push_back(x[static_cast<std::size_t>(s)].dim(1));
        }
        gr.x = cat(parts, 1);
        gr.mod = chunks(linear_p(g, gr.prefix + ".mod", cond), 1, h, 6);
        const auto xn = num::modulate(num::layer_norm(gr.x), gr.mod[0], gr.mod[1]);
        const auto qkv = chunks(linear_p(g, gr.prefix + ".qkv", xn), 2, h, 3);
        qs.push_back(qkv[0]);
        ks.push_back(qkv[1]);
        vs.push_back(qkv[2]);
        gs.push_back(std::move(gr));
    }
    const auto q = rope::rope_apply(cat(qs, 1), tables.joint);
    const auto k = rope::rope_apply(cat(ks, 1), tables.joint);
    const auto o = attend(q, k, cat(vs, 1), cfg.heads, probe);

    Streams<T> out;
    std::int64_t off = 0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        auto& gr = gs[i];
        const std::int64_t n = gr.x.dim(1);
        const auto y = linear_p(g, gr.prefix + ".out", num::slice(o, 1, off, n));
        off += n;
        auto xg = num::add(gr.x, num::gate(y, gr.mod[2]));
        const auto m = mlp_p(g, gr.prefix + ".mlp", num::modulate(num::layer_norm(xg), gr.mod[3], gr.mod[4]));
        xg = num::add(xg, num::gate(m, gr.mod[5]));
        if (groups[i].size() == 1) {
            out[static_cast<std::size_t>(groups[i][0])] = xg;
            continue;
        }
        std::int64_t so = 0;
        for (std::size_t j = 0; j < groups[i].size(); ++j) {
            out[static_cast<std::size_t>(groups[i][j])] = num::slice(xg, 1, so, gr.lens[j]);
            so += gr.lens[j];
        }
    }
    return out;
}

template <class T>
Streams<T> split_block(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x, Var<T> cond,
                       const FlowTables<T>& tables, AttentionProbe<T>* probe) {
    const std::int64_t h = cfg.h;
    Streams<T> out;
    std::vector<Var<T>> vf_mod;
    for (int s = 0; s < 4; ++s) {
        const auto prefix = stream_prefix(layer, s);
        const auto mod = chunks(linear_p(g, prefix + ".mod", cond), 1, h, s == VF ? 9 : 3);
        const auto xs = x[static_cast<std::size_t>(s)];
        const auto qkv = chunks(linear_p(g, prefix + ".qkv", num::modulate(num::layer_norm(xs), mod[0], mod[1])), 2, h, 3);
        const auto& tab = tables.stream[static_cast<std::size_t>(s)];
        const auto o = attend(rope::rope_apply(qkv[0], tab), rope::rope_apply(qkv[1], tab), qkv[2], cfg.heads, probe);
        out[static_cast<std::size_t>(s)] = num::add(xs, num::gate(linear_p(g, prefix + ".out", o), mod[2]));
        if (s == VF) {
            vf_mod = mod;
        }
    }

    // Future video reads the updated context streams; they are not written.
    const auto prefix = stream_prefix(layer, VF);
    auto vf = out[VF];
    const auto ctx = num::layer_norm(num::concat(std::vector<Var<T>>{out[VP], out[AP], out[AF]}, 1));
    const auto kv = chunks(linear_p(g, prefix + ".cross.kv", ctx), 2, h, 2);
    const auto q = linear_p(g, prefix + ".cross.q", num::modulate(num::layer_norm(vf), vf_mod[3], vf_mod[4]));
    const auto o = attend(rope::rope_apply(q, tables.stream[VF]), rope::rope_apply(kv[0], tables.context), kv[1],
                          cfg.heads, probe);
    vf = num::add(vf, num::gate(linear_p(g, prefix + ".cross.out", o), vf_mod[5]));
    const auto m = mlp_p(g, prefix + ".mlp", num::modulate(num::layer_norm(vf), vf_mod[6], vf_mod[7]));
    out[VF] = num::add(vf, num::gate(m, vf_mod[8]));
    return out;
}

}  // namespace

template <class T>
FlowTables<T> make_flow_tables(int head_dim, const rope::StreamLayout& layout, double rope_base) {
    const auto pos = rope::build_positions(layout);
    const auto s3 = rope::spec_3d(head_dim, rope_base);
    const auto s1 = rope::spec_1d(head_dim, rope_base);
    FlowTables<T> t;
    t.stream[VP] = rope::make_tables<T>(s3, pos.v_p);
    t.stream[VF] = rope::make_tables<T>(s3, pos.v_f);
    t.stream[AP] = rope::make_tables<T>(s1, pos.a_p);
    t.stream[AF] = rope::make_tables<T>(s1, pos.a_f);
    t.joint = rope::concat_tables<T>({&t.stream[VP], &t.stream[VF], &t.stream[AP], &t.stream[AF]});
    t.context = rope::concat_tables<T>({&t.stream[VP], &t.stream[AP], &t.stream[AF]});
    return t;
}

template <class T>
void declare_flow_blocks(num::ParamStore<T>& store, const BlockConfig& cfg) {
    validate(cfg);
    if (!cfg.time_modulation) {
        throw ConfigError("flow blocks require time modulation");
    }
    const std::int64_t h = cfg.h, m = cfg.mlp_hidden, dt = cfg.time_dim;
    for (int l = 0; l < cfg.layers; ++l) {
        for (int s = 0; s < 4; ++s) {
            std::vector<ParamDecl> d;
            const bool split = cfg.variant == Variant::Split;
            const std::int64_t n_mod = !split ? 6 : s == VF ? 9 : 3;
            add_linear(d, "mod", dt, n_mod * h, false);
            add_linear(d, "qkv", h, 3 * h);
            add_linear(d, "out", h, h);
            if (split && s == VF) {
                add_linear(d, "cross.q", h, h);
                add_linear(d, "cross.kv", h, 2 * h);
                add_linear(d, "cross.out", h, h);
            }
            if (!split || s == VF) {
                add_linear(d, "mlp.fc1", h, m);
                add_linear(d, "mlp.fc2", m, h);
            }
            declare_stream(store, cfg, l, s, d);
        }
    }
}

template <class T>
Streams<T> flow_block(num::Graph<T>& g, const BlockConfig& cfg, int layer, const Streams<T>& x, Var<T> cond,
                      const FlowTables<T>& tables, AttentionProbe<T>* probe) {
    if (cfg.variant == Variant::Split) {
        return split_block(g, cfg, layer, x, cond, tables, probe);
    }
    return joint_block(g, cfg, layer, x, cond, tables, probe);
}

#define HWM_INSTANTIATE_FLOW(T)                                                                                   \
    template FlowTables<T> make_flow_tables<T>(int, const rope::StreamLayout&, double);                           \
    template void declare_flow_blocks(num::ParamStore<T>&, const BlockConfig&);                                  \
    template Streams<T> flow_block(num::Graph<T>&, const BlockConfig&, int, const Streams<T>&, Var<T>,           \
                                   const FlowTables<T>&, AttentionProbe<T>*);

HWM_INSTANTIATE_FLOW(float)
HWM_INSTANTIATE_FLOW(double)

}  // namespace hwm::blocks
