#include <doctest.h>

#include <cmath>
#include <numbers>

#include "check_util.hpp"
#include "hwm/masked/masked.hpp"

using namespace hwm;
using namespace hwm::num;
using namespace hwm::masked;

namespace {

MaskedConfig tiny(blocks::Variant v = blocks::Variant::Base) {
    MaskedConfig cfg;
    cfg.blocks = {v, 2, 16, 2, 32, 1, false, 0};
    cfg.vocab = 8;
    cfg.action_dim = 3;
    cfg.rows = cfg.cols = 4;
    return cfg;
}

world::WorldConfig tiny_world() {
    world::WorldConfig w;
    w.G = 4;
    w.s = 8;
    w.z = 3;
    w.channels = 0;
    return w;
}

world::TokenGrid random_grid(int frames, int G, int vocab, std::uint64_t seed) {
    world::TokenGrid g(frames, G);
    Rng rng(seed);
    for (auto& t : g.tokens) {
        t = static_cast<std::int32_t>(rng.below(vocab));
    }
    return g;
}

// Logits that put all mass on a fixed token per position.
LogitFn peaked(const std::vector<world::TokenGrid>& truth, const MaskedConfig& cfg, int* calls = nullptr,
               std::vector<std::vector<std::int64_t>>* seen = nullptr) {
    return [=, &cfg](const MaskedInput<float>& in) {
        if (calls) {
            ++*calls;
        }
        if (seen) {
            seen->push_back(in.tokens);
        }
        const std::int64_t nf = cfg.future_frames * cfg.sites();
        Tensor<float> out({in.batch, nf, cfg.vocab}, -20.f);
        for (std::int64_t b = 0; b < in.batch; ++b) {
            for (std::int64_t j = 0; j < nf; ++j) {
                out[(b * nf + j) * cfg.vocab + truth[static_cast<std::size_t>(b)].tokens[static_cast<std::size_t>(j)]] = 20.f;
            }
        }
        return out;
    };
}

}  // namespace

TEST_CASE("cosine schedule endpoints and monotonicity") {
    CHECK(gamma_cosine(0.0) == 1.0);
    CHECK(gamma_cosine(1.0) == 0.0);
    double prev = 1.0;
    for (int i = 1; i <= 1000; ++i) {
        const double g = gamma_cosine(i / 1000.0);
        CHECK(g < prev);
        prev = g;
    }
    CHECK(std::abs(gamma_cosine(0.5) - std::cos(std::numbers::pi / 4)) < 1e-15);
}

TEST_CASE("corruption with rho_max 0 is the identity") {
    const auto g = random_grid(3, 8, 64, 1);
    const auto c = corrupt_tokens(g, 64, 0.0, 5);
    CHECK(c.grid == g);
    CHECK(c.rate == 0.0);
    CHECK(c.replaced == 0);
}

TEST_CASE("corruption fraction tracks the drawn rate") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto g = random_grid(1000, 10, 64, seed);
        const auto c = corrupt_tokens(g, 64, 0.2, seed + 100);
        CHECK(c.rate >= 0.0);
        CHECK(c.rate < 0.2);
        std::int64_t changed = 0;
        for (std::size_t i = 0; i < g.tokens.size(); ++i) {
            changed += g.tokens[i] != c.grid.tokens[i];
        }
        CHECK(changed == c.replaced);
        CHECK(std::abs(static_cast<double>(changed) / 1e5 - c.rate) <= 0.02);
    }
}

TEST_CASE("corruption never writes MASK") {
    const int s = 8;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        world::TokenGrid g(8, 8);
        for (std::size_t i = 0; i < g.tokens.size(); ++i) {
            g.tokens[i] = static_cast<std::int32_t>(i % s);
        }
        const auto c = corrupt_tokens(g, s, 0.99, seed);
        for (std::size_t i = 0; i < g.tokens.size(); ++i) {
            CHECK(c.grid.tokens[i] >= 0);
            CHECK(c.grid.tokens[i] < s);
        }
    }
}

TEST_CASE("replacement values are uniform over the other vocabulary entries") {
    const int s = 8;
    std::array<std::int64_t, 8> hist{};
    std::int64_t draws = 0;
    world::TokenGrid zeros(100, 100, 0);
    for (std::uint64_t seed = 0; draws < 1'000'000; ++seed) {
        const auto c = corrupt_tokens(zeros, s, 0.99, seed);
        for (const auto t : c.grid.tokens) {
            if (t != 0) {
                ++hist[static_cast<std::size_t>(t)];
                ++draws;
            }
        }
    }
    CHECK(hist[0] == 0);
    const double expected = static_cast<double>(draws) / (s - 1);
    double chi2 = 0;
    for (int v = 1; v < s; ++v) {
        chi2 += std::pow(hist[static_cast<std::size_t>(v)] - expected, 2) / expected;
    }
    // 99% quantile of chi-square with 6 degrees of freedom.
    CHECK(chi2 < 16.812);
}

TEST_CASE("mask_future respects forced schedule draws") {
    world::TokenGrid future(1000, 10, 3);
    const auto all = mask_future(future, 64, 1, 0.0);
    for (std::size_t i = 0; i < all.mask.size(); ++i) {
        CHECK(all.mask[i] == 1);
        CHECK(all.work_tokens.tokens[i] == 64);
    }
    const auto none = mask_future(future, 64, 2, 1.0);
    CHECK(none.work_tokens == future);
    CHECK(std::count(none.mask.begin(), none.mask.end(), 1) == 0);

    const auto half = mask_future(future, 64, 3, 0.5);
    const double frac = static_cast<double>(std::count(half.mask.begin(), half.mask.end(), 1)) / 1e5;
    CHECK(std::abs(frac - std::cos(std::numbers::pi / 4)) < 0.02);
}

TEST_CASE("training batches mask only future positions") {
    const auto cfg = tiny();
    const auto w = tiny_world();
    auto c2 = cfg;
    c2.rows = c2.cols = w.G;
    std::vector<world::Episode> eps;
    for (int i = 0; i < 6; ++i) {
        eps.push_back(world::gen_episode(world::episode_seed(3, "train", i), w));
    }
    const auto b = make_batch(eps, c2, 9);
    const std::int64_t s = c2.sites(), np = 2 * s, n = 3 * s;
    REQUIRE(b.input.tokens.size() == static_cast<std::size_t>(6 * n));
    for (std::int64_t e = 0; e < 6; ++e) {
        for (std::int64_t i = 0; i < np; ++i) {
            CHECK(b.input.tokens[static_cast<std::size_t>(e * n + i)] != c2.mask_id());
        }
        for (std::int64_t i = 0; i < s; ++i) {
            const auto tok = b.input.tokens[static_cast<std::size_t>(e * n + np + i)];
            const bool masked = b.mask[static_cast<std::size_t>(e * s + i)];
            CHECK((tok == c2.mask_id()) == masked);
            CHECK(b.targets[static_cast<std::size_t>(e * s + i)] ==
                  eps[static_cast<std::size_t>(e)].future_tokens.tokens[static_cast<std::size_t>(i)]);
        }
    }
    const auto again = make_batch(eps, c2, 9);
    CHECK(again.input.tokens == b.input.tokens);
    CHECK(again.mask == b.mask);
}

TEST_CASE("decoding fills every position in f*K passes") {
    for (const int frames : {1, 2}) {
        for (const int k : {1, 2, 4}) {
            auto w = tiny_world();
            w.f = frames;
            auto cfg = tiny();
            cfg.rows = cfg.cols = w.G;
            cfg.future_frames = frames;
            std::vector<world::Episode> eps;
            std::vector<world::TokenGrid> truth;
            for (int i = 0; i < 3; ++i) {
                eps.push_back(world::gen_episode(world::episode_seed(4, "heldout", i), w));
                truth.push_back(eps.back().future_tokens);
            }
            int calls = 0;
            DecodeStats stats;
            const auto out = decode_iterative(peaked(truth, cfg, &calls), cfg, eps, k, 11, &stats);
            CHECK(calls == frames * k);
            CHECK(stats.passes == frames * k);
            for (std::size_t i = 0; i < out.size(); ++i) {
                CHECK(std::count(out[i].tokens.begin(), out[i].tokens.end(), cfg.mask_id()) == 0);
                CHECK(out[i] == truth[i]);
            }
        }
    }
}

TEST_CASE("refinement re-masks fewer tokens at later steps and conditions on clean frames") {
    auto w = tiny_world();
    w.f = 2;
    w.G = 8;
    auto cfg = tiny();
    cfg.rows = cfg.cols = 8;
    cfg.future_frames = 2;
    const auto ep = world::gen_episode(5, w);
    std::vector<std::vector<std::int64_t>> seen;
    const int k = 4;
    const auto out = decode_iterative(peaked({ep.future_tokens}, cfg, nullptr, &seen), cfg, {ep}, k, 3);
    REQUIRE(seen.size() == 2 * k);
    const std::int64_t s = 64, np = 2 * s;
    for (int frame = 0; frame < 2; ++frame) {
        std::int64_t prev = s + 1;
        for (int step = 0; step < k; ++step) {
            const auto& toks = seen[static_cast<std::size_t>(frame * k + step)];
            const auto masked = std::count(toks.begin() + np + frame * s, toks.begin() + np + (frame + 1) * s,
                                           cfg.mask_id());
            const auto expected = step == 0 ? s : std::llround(gamma_cosine(double(step) / k) * s);
            CHECK(masked == expected);
            CHECK(masked < prev);
            prev = masked;
            if (frame == 1) {
                for (std::int64_t i = 0; i < s; ++i) {
                    CHECK(toks[static_cast<std::size_t>(np + i)] == out[0].tokens[static_cast<std::size_t>(i)]);
                }
            } else {
                CHECK(std::count(toks.begin() + np + s, toks.end(), cfg.mask_id()) == s);
            }
        }
    }
}

TEST_CASE("non-finite logits abort decoding") {
    const auto cfg = tiny();
    const auto w = tiny_world();
    const auto ep = world::gen_episode(1, w);
    const LogitFn bad = [&](const MaskedInput<float>& in) {
        Tensor<float> t({in.batch, cfg.sites(), cfg.vocab}, 0.f);
        t[3] = std::nanf("");
        return t;
    };
    CHECK_THROWS_AS(decode_iterative(bad, cfg, {ep}, 2, 1), DecodeError);
}

TEST_CASE("model logits cover the future frames and gradients pass the check") {
    const auto w = tiny_world();
    for (const auto v : {blocks::Variant::Base, blocks::Variant::Split, blocks::Variant::ModalityShare,
                         blocks::Variant::FullShare}) {
        const auto cfg = tiny(v);
        std::vector<world::Episode> eps = {world::gen_episode(1, w), world::gen_episode(2, w)};
        auto batch = make_batch(eps, cfg, 4);
        batch.mask.assign(batch.mask.size(), 1);
        MaskedInput<double> in{batch.input.batch, batch.input.tokens, batch.input.past_actions.cast<double>(),
                               batch.input.future_actions.cast<double>()};
        ParamStore<double> store;
        declare_model(store, cfg);
        store.allocate();
        hwm::testing::fill_normal(store, 8, 0.4);
        const auto tables = blocks::make_masked_tables<double>(8, cfg.geometry(2));
        {
            Graph<double> g(&store, false);
            CHECK(forward(g, cfg, in, tables).shape() == Shape{2, 16, 8});
        }
        GradCheckOptions opts;
        opts.tol = 1e-5;
        opts.max_entries_per_param = 5;
        const auto rep = grad_check(
            [&](Graph<double>& g) { return loss(g, cfg, in, batch.targets, batch.mask, tables); }, store, opts);
        CHECK_MESSAGE(rep.passed, blocks::variant_name(v), ": ", rep.summary());
    }
}
