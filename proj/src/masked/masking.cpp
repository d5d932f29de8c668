#include <cmath>
#include <numbers>

#include "hwm/masked/masked.hpp"
#include "hwm/numcore/rng.hpp"

namespace hwm::masked {

double gamma_cosine(double r) {
    if (r <= 0) {
        return 1.0;
    }
    if (r >= 1) {
        return 0.0;
    }
    return std::cos(std::numbers::pi * r / 2);
}

blocks::MaskedGeometry MaskedConfig::geometry(std::int64_t batch) const {
    return {batch, past_frames, future_frames, rows, cols, past_frames, future_frames};
}

void validate(const MaskedConfig& cfg) {
    blocks::validate(cfg.blocks);
    if (cfg.blocks.time_modulation) {
        throw blocks::ConfigError("masked model has no timestep; time modulation must be off");
    }
    if (cfg.vocab < 2 || cfg.action_dim < 1 || cfg.rows < 1 || cfg.cols < 1 || cfg.past_frames < 1 ||
        cfg.future_frames < 1) {
        throw blocks::ConfigError("masked model extents must be positive (vocab >= 2)");
    }
    if (!(cfg.rho_max >= 0 && cfg.rho_max < 1)) {
        throw blocks::ConfigError("rho_max must lie in [0, 1)");
    }
    if (cfg.decode_steps < 1) {
        throw blocks::ConfigError("decode_steps must be >= 1");
    }
    if (!(cfg.temperature > 0)) {
        throw blocks::ConfigError("temperature must be positive");
    }
}

Corruption corrupt_tokens(const world::TokenGrid& grid, int vocab, double rho_max, std::uint64_t seed) {
    Rng rng(seed);
    Corruption out{grid, rho_max * rng.uniform(), 0};
    for (auto& tok : out.grid.tokens) {
        if (rng.uniform() >= out.rate) {
            continue;
        }
        if (tok >= 0 && tok < vocab) {
            auto v = static_cast<std::int32_t>(rng.below(vocab - 1));
            tok = v >= tok ? v + 1 : v;
        } else {
            tok = static_cast<std::int32_t>(rng.below(vocab));
        }
        ++out.replaced;
    }
    return out;
}

MaskState mask_future(const world::TokenGrid& future, int mask_id, std::uint64_t seed, std::optional<double> forced_r) {
    Rng rng(seed);
    MaskState st{future, std::vector<std::uint8_t>(future.tokens.size(), 0), {}, 0};
    const std::size_t cells = static_cast<std::size_t>(future.cells());
    for (int t = 0; t < future.frames; ++t) {
        const double r = forced_r ? *forced_r : rng.uniform();
        const double thr = gamma_cosine(r);
        st.r.push_back(r);
        for (std::size_t i = t * cells; i < (t + 1) * cells; ++i) {
            if (rng.uniform() < thr) {
                st.mask[i] = 1;
                st.work_tokens.tokens[i] = mask_id;
            }
        }
    }
    return st;
}

TrainingBatch make_batch(const std::vector<world::Episode>& episodes, const MaskedConfig& cfg, std::uint64_t seed) {
    const auto b = static_cast<std::int64_t>(episodes.size());
    const std::int64_t s = cfg.sites(), z = cfg.action_dim;
    TrainingBatch out;
    out.input.batch = b;
    out.input.past_actions = num::Tensor<float>({b, cfg.past_frames, z});
    out.input.future_actions = num::Tensor<float>({b, cfg.future_frames, z});
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& ep = episodes[static_cast<std::size_t>(i)];
        if (ep.past_tokens.frames != cfg.past_frames || ep.future_tokens.frames != cfg.future_frames ||
            ep.past_tokens.cells() != s || ep.past_actions.z != z) {
            throw blocks::ConfigError("episode layout does not match the masked model config");
        }
        const auto c = corrupt_tokens(ep.all_tokens(), cfg.vocab, cfg.rho_max, derive_seed(seed, "corrupt", i));
        const auto future = c.grid.frame_range(cfg.past_frames, cfg.future_frames);
        auto ms = mask_future(future, cfg.mask_id(), derive_seed(seed, "mask", i));
        for (int t = 0; t < cfg.past_frames * s; ++t) {
            out.input.tokens.push_back(c.grid.tokens[static_cast<std::size_t>(t)]);
        }
        for (const auto tok : ms.work_tokens.tokens) {
            out.input.tokens.push_back(tok);
        }
        for (const auto tok : ep.future_tokens.tokens) {
            out.targets.push_back(tok);
        }
        out.mask.insert(out.mask.end(), ms.mask.begin(), ms.mask.end());
        std::copy(ep.past_actions.values.begin(), ep.past_actions.values.end(),
                  out.input.past_actions.data() + i * cfg.past_frames * z);
        std::copy(ep.future_actions.values.begin(), ep.future_actions.values.end(),
                  out.input.future_actions.data() + i * cfg.future_frames * z);
    }
    return out;
}

}  // namespace hwm::masked
