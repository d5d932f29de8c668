#include "hwm/masked/masked.hpp"

namespace hwm::masked {

using num::Var;

template <class T>
void declare_model(num::ParamStore<T>& store, const MaskedConfig& cfg) {
    validate(cfg);
    const std::int64_t h = cfg.blocks.h, m = cfg.blocks.mlp_hidden, s = cfg.vocab, z = cfg.action_dim;
    store.declare("tok_embed", {s, h});
    store.declare("mask_token", {1, h});
    for (const char* st : {"a_p", "a_f"}) {
        const std::string p = std::string("action_embed.") + st;
        store.declare(p + ".fc1.w", {z, m});
        store.declare(p + ".fc1.b", {m}, false);
        store.declare(p + ".fc2.w", {m, h});
        store.declare(p + ".fc2.b", {h}, false);
    }
    blocks::declare_masked_blocks(store, cfg.blocks);
    store.declare("head.norm.g", {h}, false);
    store.declare("head.norm.b", {h}, false);
    store.declare("head.w", {h, s});
    store.declare("head.b", {s}, false);
}

template <class T>
Var<T> forward(num::Graph<T>& g, const MaskedConfig& cfg, const MaskedInput<T>& in,
               const blocks::MaskedTables<T>& tables, blocks::AttentionProbe<T>* probe) {
    const std::int64_t b = in.batch, s = cfg.sites();
    const std::int64_t np = cfg.past_frames * s, nf = cfg.future_frames * s;
    if (static_cast<std::int64_t>(in.tokens.size()) != b * (np + nf)) {
        throw num::DimensionError("masked forward: expected " + std::to_string(b * (np + nf)) + " tokens, got " +
                                  std::to_string(in.tokens.size()));
    }
    const auto table = num::concat(std::vector<Var<T>>{g.param("tok_embed"), g.param("mask_token")}, 0);
    const auto emb = num::embedding(table, in.tokens, {b, np + nf});
    blocks::Streams<T> x;
    x[blocks::VP] = num::slice(emb, 1, 0, np);
    x[blocks::VF] = num::slice(emb, 1, np, nf);
    x[blocks::AP] = blocks::mlp_p(g, "action_embed.a_p", g.constant(in.past_actions));
    x[blocks::AF] = blocks::mlp_p(g, "action_embed.a_f", g.constant(in.future_actions));
    const auto geo = cfg.geometry(b);
    for (int l = 0; l < cfg.blocks.layers; ++l) {
        x = blocks::masked_block(g, cfg.blocks, l, x, geo, tables, probe);
    }
    return blocks::linear_p(g, "head", blocks::norm_p(g, "head.norm", x[blocks::VF]));
}

template <class T>
Var<T> loss(num::Graph<T>& g, const MaskedConfig& cfg, const MaskedInput<T>& in,
            const std::vector<std::int64_t>& targets, const std::vector<std::uint8_t>& mask,
            const blocks::MaskedTables<T>& tables, bool* empty) {
    const auto logits = forward(g, cfg, in, tables);
    const std::int64_t rows = logits.dim(0) * logits.dim(1);
    return num::masked_cross_entropy(num::reshape(logits, {rows, cfg.vocab}), targets, mask, empty);
}

template void declare_model(num::ParamStore<float>&, const MaskedConfig&);
template void declare_model(num::ParamStore<double>&, const MaskedConfig&);
template Var<float> forward(num::Graph<float>&, const MaskedConfig&, const MaskedInput<float>&,
                            const blocks::MaskedTables<float>&, blocks::AttentionProbe<float>*);
template Var<double> forward(num::Graph<double>&, const MaskedConfig&, const MaskedInput<double>&,
                             const blocks::MaskedTables<double>&, blocks::AttentionProbe<double>*);
template Var<float> loss(num::Graph<float>&, const MaskedConfig&, const MaskedInput<float>&,
                         const std::vector<std::int64_t>&, const std::vector<std::uint8_t>&,
                         const blocks::MaskedTables<float>&, bool*);
template Var<double> loss(num::Graph<double>&, const MaskedConfig&, const MaskedInput<double>&,
                          const std::vector<std::int64_t>&, const std::vector<std::uint8_t>&,
                          const blocks::MaskedTables<double>&, bool*);

}  // namespace hwm::masked
