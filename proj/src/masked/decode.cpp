#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "hwm/masked/masked.hpp"
#include "hwm/numcore/rng.hpp"

namespace hwm::masked {

LogitFn model_logits(num::ParamStore<float>& store, const MaskedConfig& cfg) {
    auto tables = std::make_shared<blocks::MaskedTables<float>>(
        blocks::make_masked_tables<float>(cfg.blocks.head_dim(), cfg.geometry(1), cfg.blocks.rope_base));
    return [&store, cfg, tables](const MaskedInput<float>& in) {
        num::Graph<float> g(&store, false);
        return forward(g, cfg, in, *tables).value();
    };
}

namespace {

// Draws from softmax(logits / temperature); returns the id and its probability.
std::pair<int, double> sample_row(const float* logits, int vocab, double temperature, bool greedy, Rng& rng) {
    const float mx = *std::max_element(logits, logits + vocab);
    std::vector<double> p(static_cast<std::size_t>(vocab));
    double z = 0;
    for (int i = 0; i < vocab; ++i) {
        p[static_cast<std::size_t>(i)] = std::exp((logits[i] - mx) / temperature);
        z += p[static_cast<std::size_t>(i)];
    }
    if (greedy) {
        const auto best = static_cast<int>(std::max_element(logits, logits + vocab) - logits);
        return {best, p[static_cast<std::size_t>(best)] / z};
    }
    double u = rng.uniform() * z;
    for (int i = 0; i < vocab; ++i) {
        u -= p[static_cast<std::size_t>(i)];
        if (u < 0) {
            return {i, p[static_cast<std::size_t>(i)] / z};
        }
    }
    return {vocab - 1, p[static_cast<std::size_t>(vocab - 1)] / z};
}

}  // namespace

std::vector<world::TokenGrid> decode_iterative(const LogitFn& logits_fn, const MaskedConfig& cfg,
                                               const std::vector<world::Episode>& episodes, int steps,
                                               std::uint64_t seed, DecodeStats* stats) {
    if (steps < 1) {
        throw blocks::ConfigError("decode steps must be >= 1");
    }
    const auto b = static_cast<std::int64_t>(episodes.size());
    const std::int64_t s = cfg.sites(), z = cfg.action_dim;
    const std::int64_t np = cfg.past_frames * s, nf = cfg.future_frames * s, n = np + nf;
    const int mask = cfg.mask_id();

    MaskedInput<float> in;
    in.batch = b;
    in.tokens.assign(static_cast<std::size_t>(b * n), mask);
    in.past_actions = num::Tensor<float>({b, cfg.past_frames, z});
    in.future_actions = num::Tensor<float>({b, cfg.future_frames, z});
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& ep = episodes[static_cast<std::size_t>(i)];
        if (ep.past_tokens.frames != cfg.past_frames || ep.past_tokens.cells() != s ||
            ep.future_actions.frames != cfg.future_frames || ep.past_actions.z != z) {
            throw blocks::ConfigError("episode layout does not match the masked model config");
        }
        std::copy(ep.past_tokens.tokens.begin(), ep.past_tokens.tokens.end(), in.tokens.begin() + i * n);
        std::copy(ep.past_actions.values.begin(), ep.past_actions.values.end(),
                  in.past_actions.data() + i * cfg.past_frames * z);
        std::copy(ep.future_actions.values.begin(), ep.future_actions.values.end(),
                  in.future_actions.data() + i * cfg.future_frames * z);
    }

    Rng rng(seed);
    std::vector<double> conf(static_cast<std::size_t>(s));
    std::vector<std::int64_t> order(static_cast<std::size_t>(s));
    for (int frame = 0; frame < cfg.future_frames; ++frame) {
        for (int k = 1; k <= steps; ++k) {
            const auto logits = logits_fn(in);
            if (stats) {
                ++stats->passes;
            }
            if (!logits.all_finite()) {
                throw DecodeError("decode: non-finite logits at frame " + std::to_string(frame) + ", step " +
                                  std::to_string(k));
            }
            const bool last = k == steps;
            const auto n_remask = static_cast<std::int64_t>(std::llround(gamma_cosine(double(k) / steps) * s));
            for (std::int64_t i = 0; i < b; ++i) {
                const std::int64_t base = i * n + np + frame * s;
                for (std::int64_t c = 0; c < s; ++c) {
                    auto& tok = in.tokens[static_cast<std::size_t>(base + c)];
                    if (tok != mask) {
                        continue;
                    }
                    const float* row = logits.data() + ((i * nf) + frame * s + c) * cfg.vocab;
                    const auto [id, p] = sample_row(row, cfg.vocab, cfg.temperature, last, rng);
                    tok = id;
                    conf[static_cast<std::size_t>(c)] = p;
                }
                if (last || n_remask == 0) {
                    continue;
                }
                std::iota(order.begin(), order.end(), 0);
                if (cfg.confidence_remask) {
                    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t c) {
                        return conf[static_cast<std::size_t>(a)] < conf[static_cast<std::size_t>(c)];
                    });
                } else {
                    for (std::int64_t j = 0; j < n_remask; ++j) {
                        std::swap(order[static_cast<std::size_t>(j)],
                                  order[static_cast<std::size_t>(j + rng.below(s - j))]);
                    }
                }
                for (std::int64_t j = 0; j < n_remask; ++j) {
                    in.tokens[static_cast<std::size_t>(base + order[static_cast<std::size_t>(j)])] = mask;
                }
            }
        }
    }

    std::vector<world::TokenGrid> out;
    for (std::int64_t i = 0; i < b; ++i) {
        world::TokenGrid grid(cfg.future_frames, cfg.rows);
        for (std::int64_t j = 0; j < nf; ++j) {
            grid.tokens[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(in.tokens[static_cast<std::size_t>(i * n + np + j)]);
        }
        out.push_back(std::move(grid));
    }
    return out;
}

}  // namespace hwm::masked
