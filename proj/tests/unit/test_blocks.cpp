#include <doctest.h>

#include <numeric>

#include "check_util.hpp"
#include "hwm/blocks/blocks.hpp"

using namespace hwm;
using namespace hwm::num;
using namespace hwm::blocks;
using hwm::testing::fill_normal;
using hwm::testing::probe;

namespace {

constexpr std::array<Variant, 4> kVariants = {Variant::Base, Variant::Split, Variant::ModalityShare,
                                              Variant::FullShare};

BlockConfig tiny(Variant v, bool flow, int layers = 3, int boundary = 1) {
    return {v, layers, 16, 2, 32, boundary, flow, 12};
}

const rope::StreamLayout kLayout{2, 1, 2, 2, 2, 1, -1};
const MaskedGeometry kGeo{2, 2, 1, 2, 2, 2, 1};
constexpr std::int64_t kBatch = 2;

// Stream token counts: flow uses kLayout, masked uses kGeo; both give 8/4/2/1.
constexpr std::array<std::int64_t, 4> kLens = {8, 4, 2, 1};

template <class Store>
void declare_inputs(Store& store, const BlockConfig& cfg) {
    for (int s = 0; s < 4; ++s) {
        store.declare(std::string("in.") + kStreamNames[static_cast<std::size_t>(s)],
                      {kBatch, kLens[static_cast<std::size_t>(s)], cfg.h});
    }
    if (cfg.time_modulation) {
        store.declare("cond", {kBatch, cfg.time_dim});
    }
}

ParamStore<double> make_store(const BlockConfig& cfg, std::uint64_t seed = 1) {
    ParamStore<double> store;
    declare_inputs(store, cfg);
    if (cfg.time_modulation) {
        declare_flow_blocks(store, cfg);
    } else {
        declare_masked_blocks(store, cfg);
    }
    store.allocate();
    fill_normal(store, seed, 0.5);
    return store;
}

Streams<double> inputs(Graph<double>& g) {
    Streams<double> x;
    for (int s = 0; s < 4; ++s) {
        x[static_cast<std::size_t>(s)] = g.param(std::string("in.") + kStreamNames[static_cast<std::size_t>(s)]);
    }
    return x;
}

Streams<double> run(Graph<double>& g, const BlockConfig& cfg, int first, int last, Streams<double> x,
                    AttentionProbe<double>* probes = nullptr) {
    static const auto ft = make_flow_tables<double>(8, kLayout);
    static const auto mt = make_masked_tables<double>(8, kGeo);
    for (int l = first; l < last; ++l) {
        x = cfg.time_modulation ? flow_block(g, cfg, l, x, g.param("cond"), ft, probes)
                                : masked_block(g, cfg, l, x, kGeo, mt, probes);
    }
    return x;
}

Var<double> total(const Streams<double>& x) {
    Var<double> acc = probe(x[0], 11);
    for (int s = 1; s < 4; ++s) {
        acc = add(acc, probe(x[static_cast<std::size_t>(s)], 11 + s));
    }
    return acc;
}

bool same(const Tensor<double>& a, const Tensor<double>& b) {
    return a.shape() == b.shape() && std::equal(a.data(), a.data() + a.numel(), b.data());
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TEST_CASE("sharing plans") {
    BlockConfig cfg{Variant::Base, 17, 64, 4, 256, 4, true, 32};
    CHECK(make_sharing_plan(cfg).empty());
    cfg.variant = Variant::Split;
    CHECK(make_sharing_plan(cfg).empty());

    cfg.variant = Variant::FullShare;
    auto plan = make_sharing_plan(cfg);
    CHECK(plan.size() == 13 * 3);
    CHECK(plan.at("blocks.4.v_f") == "blocks.4.v_p");
    CHECK(plan.at("blocks.16.a_f") == "blocks.16.v_p");
    CHECK(plan.count("blocks.3.v_f") == 0);

    cfg.variant = Variant::ModalityShare;
    plan = make_sharing_plan(cfg);
    CHECK(plan.size() == 13 * 2);
    CHECK(plan.at("blocks.4.v_f") == "blocks.4.v_p");
    CHECK(plan.at("blocks.4.a_f") == "blocks.4.a_p");
    CHECK(plan.count("blocks.4.a_p") == 0);

    CHECK_THROWS_AS(validate(BlockConfig{Variant::Base, 3, 10, 4, 8, 1, false, 1}), ConfigError);
    CHECK_THROWS_AS(validate(BlockConfig{Variant::Base, 3, 8, 4, 8, 4, false, 1}), ConfigError);
    CHECK(parse_variant("fullshare") == Variant::FullShare);
    CHECK_THROWS_AS(parse_variant("tied"), ConfigError);
}

TEST_CASE("storage counts follow the per-stream formulas") {
    const std::int64_t h = 1172, m = 4 * h, dt = 640, d = 17, shared = 13;
    const std::int64_t stream = (dt * 6 * h + 6 * h) + (h * 3 * h + 3 * h) + (h * h + h) + (h * m + m + m * h + h);
    auto flow_count = [&](Variant v) {
        ParamStore<float> s;
        declare_flow_blocks(s, BlockConfig{v, 17, 1172, 4, 4 * 1172, 4, true, 640});
        return s.count();
    };
    CHECK(flow_count(Variant::Base) == 4 * d * stream);
    CHECK(flow_count(Variant::FullShare) == 4 * 4 * stream + shared * stream);
    CHECK(flow_count(Variant::ModalityShare) == 4 * 4 * stream + shared * 2 * stream);

    const std::int64_t mh = 512, mm = 2048;
    const std::int64_t attn = 2 * mh + (mh * 3 * mh + 3 * mh) + (mh * mh + mh);
    const std::int64_t mlp = 2 * mh + (mh * mm + mm + mm * mh + mh);
    auto masked_count = [&](Variant v) {
        ParamStore<float> s;
        declare_masked_blocks(s, BlockConfig{v, 24, 512, 8, 2048, 4, false, 0});
        return s.count();
    };
    CHECK(masked_count(Variant::Base) == 24 * (2 * attn + 4 * mlp));
    CHECK(masked_count(Variant::FullShare) == 24 * 2 * attn + 4 * 4 * mlp + 20 * mlp);
    CHECK(masked_count(Variant::ModalityShare) == 24 * 2 * attn + 4 * 4 * mlp + 20 * 2 * mlp);
}

TEST_CASE("sharing shrinks storage whenever layers exceed the boundary") {
    for (int d = 5; d <= 9; ++d) {
        for (const bool flow : {true, false}) {
            std::array<std::int64_t, 4> n{};
            for (std::size_t i = 0; i < 4; ++i) {
                ParamStore<float> s;
                const BlockConfig cfg{kVariants[i], d, 32, 4, 128, 4, flow, 16};
                flow ? declare_flow_blocks(s, cfg) : declare_masked_blocks(s, cfg);
                n[i] = s.count();
            }
            CHECK(n[3] < n[2]);
            CHECK(n[2] < n[0]);
            CHECK(n[1] < n[0]);
        }
    }
}

TEST_CASE("zeroed output projections make every block the identity") {
    for (const bool flow : {true, false}) {
        for (const auto v : kVariants) {
            const auto cfg = tiny(v, flow);
            auto store = make_store(cfg);
            for (const auto& e : store.entries()) {
                if (ends_with(e.name, ".out.w") || ends_with(e.name, ".out.b") || ends_with(e.name, ".fc2.w") ||
                    ends_with(e.name, ".fc2.b")) {
                    store.value(e.name).fill(0.0);
                }
            }
            Graph<double> g(&store, false);
            const auto x = inputs(g);
            const auto y = run(g, cfg, 0, cfg.layers, x);
            for (std::size_t s = 0; s < 4; ++s) {
                CHECK_MESSAGE(same(y[s].value(), x[s].value()), variant_name(v), " stream ", s);
            }
        }
    }
}

TEST_CASE("joint attention normalizes over all four streams") {
    for (const auto v : {Variant::Base, Variant::FullShare}) {
        const auto cfg = tiny(v, true);
        auto store = make_store(cfg);
        Graph<double> g(&store, false);
        AttentionProbe<double> probes;
        run(g, cfg, 0, cfg.layers, inputs(g), &probes);
        REQUIRE(probes.size() == static_cast<std::size_t>(cfg.layers));
        const std::int64_t n = std::accumulate(kLens.begin(), kLens.end(), std::int64_t{0});
        for (const auto& p : probes) {
            REQUIRE(p.shape() == Shape{kBatch, cfg.heads, n, n});
            for (std::int64_t r = 0; r < p.numel() / n; ++r) {
                double sum = 0;
                for (std::int64_t c = 0; c < n; ++c) {
                    sum += p[r * n + c];
                }
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("split attention isolates context streams from future video") {
    const auto cfg = tiny(Variant::Split, true, 1);
    auto store = make_store(cfg);
    auto outputs = [&]() {
        Graph<double> g(&store, false);
        AttentionProbe<double> probes;
        const auto y = run(g, cfg, 0, 1, inputs(g), &probes);
        std::array<Tensor<double>, 4> out;
        for (std::size_t s = 0; s < 4; ++s) {
            out[s] = y[s].value();
        }
        return std::make_pair(out, probes);
    };
    const auto [a, probes] = outputs();
    auto& vf = store.value("in.v_f");
    for (auto& val : vf.values()) {
        val += 0.37;
    }
    const auto b = outputs().first;
    CHECK(same(a[VP], b[VP]));
    CHECK(same(a[AP], b[AP]));
    CHECK(same(a[AF], b[AF]));
    CHECK_FALSE(same(a[VF], b[VF]));

    // Four self-attentions then the cross stage over v_p, a_p, a_f.
    REQUIRE(probes.size() == 5);
    const auto& cross = probes[4];
    const std::int64_t nk = kLens[VP] + kLens[AP] + kLens[AF];
    REQUIRE(cross.shape() == Shape{kBatch, cfg.heads, kLens[VF], nk});
    for (std::int64_t r = 0; r < cross.numel() / nk; ++r) {
        double sum = 0;
        for (std::int64_t c = 0; c < nk; ++c) {
            sum += cross[r * nk + c];
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("early layers agree between Base and FullShare when their weights coincide") {
    for (const bool flow : {true, false}) {
        const auto base_cfg = tiny(Variant::Base, flow, 6, 4);
        auto full_cfg = base_cfg;
        full_cfg.variant = Variant::FullShare;
        auto base = make_store(base_cfg, 3);
        ParamStore<double> full;
        declare_inputs(full, full_cfg);
        flow ? declare_flow_blocks(full, full_cfg) : declare_masked_blocks(full, full_cfg);
        full.allocate();
        fill_normal(full, 4, 0.5);
        for (int s = 0; s < full.slot_count(); ++s) {
            const auto& name = full.slot(s).name;
            if (name.rfind("blocks.4.", 0) != 0 && name.rfind("blocks.5.", 0) != 0) {
                full.slot(s).value = base.value(name);
            }
        }
        Graph<double> gb(&base, false), gf(&full, false);
        auto xb = inputs(gb);
        auto xf = inputs(gf);
        for (int l = 0; l < 4; ++l) {
            xb = run(gb, base_cfg, l, l + 1, xb);
            xf = run(gf, full_cfg, l, l + 1, xf);
            for (std::size_t s = 0; s < 4; ++s) {
                CHECK(same(xb[s].value(), xf[s].value()));
            }
        }
        xb = run(gb, base_cfg, 4, 5, xb);
        xf = run(gf, full_cfg, 4, 5, xf);
        CHECK(max_diff(xb[VF].value(), xf[VF].value()) > 1e-3);
    }
}

TEST_CASE("shared weights accumulate the gradients of every stream") {
    for (const bool flow : {true, false}) {
        const auto base_cfg = tiny(Variant::Base, flow, 3, 1);
        auto full_cfg = base_cfg;
        full_cfg.variant = Variant::FullShare;
        auto base = make_store(base_cfg, 5);
        // Unshared clone: every stream in shared layers holds the v_p values.
        for (const auto& e : base.entries()) {
            for (int l = 1; l < 3; ++l) {
                const std::string from = stream_prefix(l, VP) + ".";
                for (int s = 1; s < 4; ++s) {
                    const std::string to = stream_prefix(l, s) + ".";
                    if (e.name.rfind(to, 0) == 0) {
                        base.value(e.name) = base.value(from + e.name.substr(to.size()));
                    }
                }
            }
        }
        ParamStore<double> full;
        declare_inputs(full, full_cfg);
        flow ? declare_flow_blocks(full, full_cfg) : declare_masked_blocks(full, full_cfg);
        full.allocate();
        for (int s = 0; s < full.slot_count(); ++s) {
            full.slot(s).value = base.value(full.slot(s).name);
        }
        for (auto* st : {&base, &full}) {
            st->zero_grad();
            Graph<double> g(st);
            g.backward(total(run(g, st == &base ? base_cfg : full_cfg, 0, 3, inputs(g))));
        }
        int compared = 0;
        for (const auto& e : full.entries()) {
            if (e.name.rfind(stream_prefix(2, VP) + ".", 0) != 0) {
                continue;
            }
            const std::string suffix = e.name.substr(stream_prefix(2, VP).size());
            Tensor<double> sum = base.grad(e.name);
            for (int s = 1; s < 4; ++s) {
                const auto& gs = base.grad(stream_prefix(2, s) + suffix);
                for (std::int64_t i = 0; i < sum.numel(); ++i) {
                    sum[i] += gs[i];
                }
            }
            CHECK(max_diff(full.grad(e.name), sum) < 1e-9);
            CHECK(same(full.grad(stream_prefix(2, AF) + suffix), full.grad(e.name)));
            ++compared;
        }
        CHECK(compared > 0);

        // A change to the shared weight reaches every stream's output.
        auto outputs = [&]() {
            Graph<double> g(&full, false);
            const auto y = run(g, full_cfg, 0, 3, inputs(g));
            std::array<Tensor<double>, 4> out;
            for (std::size_t s = 0; s < 4; ++s) {
                out[s] = y[s].value();
            }
            return out;
        };
        const auto before = outputs();
        full.value(stream_prefix(2, VP) + ".mlp.fc1.w")[0] += 0.5;
        const auto after = outputs();
        for (std::size_t s = 0; s < 4; ++s) {
            CHECK(max_diff(before[s], after[s]) > 0);
        }
    }
}

TEST_CASE("spatial attention bypasses the action streams") {
    for (const auto v : kVariants) {
        const auto cfg = tiny(v, false);
        auto store = make_store(cfg);
        Graph<double> g(&store, false);
        const auto x = inputs(g);
        const auto tables = make_masked_tables<double>(8, kGeo);
        const auto y = masked_spatial(g, cfg, 0, x, kGeo, tables);
        CHECK(y[AP].id == x[AP].id);
        CHECK(y[AF].id == x[AF].id);
        CHECK_FALSE(same(y[VP].value(), x[VP].value()));
    }
}

TEST_CASE("spatial attention is equivariant to consistent site permutations") {
    const std::vector<std::int64_t> perm = {2, 0, 3, 1};
    for (const auto v : {Variant::Base, Variant::Split}) {
        const auto cfg = tiny(v, false);
        auto store = make_store(cfg);
        const auto tables = make_masked_tables<double>(8, kGeo);
        auto permuted_tables = tables;
        const std::int64_t half = tables.spatial.cos.dim(1), h = cfg.h, sites = 4;
        for (std::int64_t i = 0; i < sites; ++i) {
            for (std::int64_t k = 0; k < half; ++k) {
                permuted_tables.spatial.cos[i * half + k] = tables.spatial.cos[perm[i] * half + k];
                permuted_tables.spatial.sin[i * half + k] = tables.spatial.sin[perm[i] * half + k];
            }
        }
        auto permute_sites = [&](const Tensor<double>& t) {
            Tensor<double> out(t.shape());
            const std::int64_t frames = t.dim(1) / sites;
            for (std::int64_t b = 0; b < t.dim(0); ++b) {
                for (std::int64_t f = 0; f < frames; ++f) {
                    for (std::int64_t i = 0; i < sites; ++i) {
                        const auto dst = ((b * frames + f) * sites + i) * h;
                        const auto src = ((b * frames + f) * sites + perm[i]) * h;
                        std::copy_n(t.data() + src, h, out.data() + dst);
                    }
                }
            }
            return out;
        };
        Graph<double> g(&store, false);
        const auto x = inputs(g);
        const auto y = masked_spatial(g, cfg, 0, x, kGeo, tables);
        Streams<double> xp = x;
        xp[VP] = g.constant(permute_sites(x[VP].value()));
        xp[VF] = g.constant(permute_sites(x[VF].value()));
        const auto yp = masked_spatial(g, cfg, 0, xp, kGeo, permuted_tables);
        CHECK(max_diff(yp[VP].value(), permute_sites(y[VP].value())) < 1e-12);
        CHECK(max_diff(yp[VF].value(), permute_sites(y[VF].value())) < 1e-12);
    }
}

TEST_CASE("temporal attention keeps sites apart") {
    for (const auto v : kVariants) {
        const auto cfg = tiny(v, false);
        auto store = make_store(cfg);
        const auto tables = make_masked_tables<double>(8, kGeo);
        auto outputs = [&]() {
            Graph<double> g(&store, false);
            const auto y = masked_temporal(g, cfg, 0, inputs(g), kGeo, tables);
            return std::make_pair(y[VP].value(), y[VF].value());
        };
        const auto a = outputs();
        // Perturb site 1 of past frame 0 in batch item 0.
        store.value("in.v_p")[1 * cfg.h + 3] += 0.8;
        const auto b = outputs();
        for (std::int64_t tok = 0; tok < kBatch * 8; ++tok) {
            const bool site1 = tok % 4 == 1 && tok < 8;
            for (std::int64_t i = 0; i < cfg.h; ++i) {
                const auto idx = tok * cfg.h + i;
                if (!site1) {
                    CHECK(a.first[idx] == b.first[idx]);
                }
            }
        }
        bool changed = false;
        for (std::int64_t i = 0; i < cfg.h; ++i) {
            changed = changed || a.first[(4 + 1) * cfg.h + i] != b.first[(4 + 1) * cfg.h + i];
        }
        CHECK(changed);
        for (std::int64_t tok = 0; tok < kBatch * 4; ++tok) {
            if (tok != 1) {
                for (std::int64_t i = 0; i < cfg.h; ++i) {
                    CHECK(a.second[tok * cfg.h + i] == b.second[tok * cfg.h + i]);
                }
            }
        }
    }
}

TEST_CASE("temporal attention at one site matches a direct sequence computation") {
    const auto cfg = tiny(Variant::Base, false, 1);
    auto store = make_store(cfg);
    const auto tables = make_masked_tables<double>(8, kGeo);
    Graph<double> g(&store, false);
    const auto x = inputs(g);
    const auto y = masked_temporal(g, cfg, 0, x, kGeo, tables);
    const std::int64_t h = cfg.h, sites = 4;
    for (std::int64_t b = 0; b < kBatch; ++b) {
        for (std::int64_t site = 0; site < sites; ++site) {
            // Sequence: v_p frames 0,1 and v_f frame 0 at this site, then a_p, a_f.
            Tensor<double> seq({1, 6, h});
            auto row = [&](const Tensor<double>& t, std::int64_t tok) { return t.data() + (b * t.dim(1) + tok) * h; };
            std::copy_n(row(x[VP].value(), site), h, seq.data());
            std::copy_n(row(x[VP].value(), sites + site), h, seq.data() + h);
            std::copy_n(row(x[VF].value(), site), h, seq.data() + 2 * h);
            std::copy_n(row(x[AP].value(), 0), h, seq.data() + 3 * h);
            std::copy_n(row(x[AP].value(), 1), h, seq.data() + 4 * h);
            std::copy_n(row(x[AF].value(), 0), h, seq.data() + 5 * h);
            const auto in = g.constant(seq);
            const auto qkv = linear_p(g, "blocks.0.temporal.qkv", norm_p(g, "blocks.0.temporal.norm", in));
            const auto q = rope::rope_apply(slice(qkv, 2, 0, h), tables.temporal);
            const auto k = rope::rope_apply(slice(qkv, 2, h, h), tables.temporal);
            const auto o = linear_p(g, "blocks.0.temporal.out", attention(q, k, slice(qkv, 2, 2 * h, h), cfg.heads));
            const auto direct = add(in, o).value();
            for (std::int64_t i = 0; i < h; ++i) {
                CHECK(std::abs(direct[i] - row(y[VP].value(), site)[i]) < 1e-12);
                CHECK(std::abs(direct[h + i] - row(y[VP].value(), sites + site)[i]) < 1e-12);
                CHECK(std::abs(direct[2 * h + i] - row(y[VF].value(), site)[i]) < 1e-12);
            }
        }
    }
}

TEST_CASE("every block variant passes the gradient check") {
    for (const bool flow : {true, false}) {
        for (const auto v : kVariants) {
            const auto cfg = tiny(v, flow);
            auto store = make_store(cfg, 7);
            GradCheckOptions opts;
            opts.tol = 1e-5;
            opts.max_entries_per_param = 6;
            const auto rep = grad_check([&](Graph<double>& g) { return total(run(g, cfg, 0, cfg.layers, inputs(g))); },
                                        store, opts);
            CHECK_MESSAGE(rep.passed, std::string(flow ? "flow " : "masked "), variant_name(v), ": ", rep.summary());
        }
    }
}
