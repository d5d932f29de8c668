#include <algorithm>
#include <chrono>

#include "hwm/eval/eval.hpp"
#include "hwm/numcore/memory.hpp"
#include "hwm/numcore/rng.hpp"

namespace hwm::eval {

std::vector<world::Episode> heldout_episodes(const world::WorldConfig& world, std::uint64_t seed, int n) {
    std::vector<world::Episode> eps;
    for (int i = 0; i < n; ++i) {
        eps.push_back(world::gen_episode(world::episode_seed(seed, "heldout", static_cast<std::uint64_t>(i)), world));
    }
    return eps;
}

Futures generate_futures(num::ParamStore<float>& store, const train::ModelSpec& spec, const world::WorldConfig& world,
                         const std::vector<world::Episode>& eps, int steps, double scale, std::uint64_t seed) {
    Futures out;
    if (spec.paradigm == train::Paradigm::Masked) {
        const int k = steps > 0 ? steps : spec.masked.decode_steps;
        out.tokens = masked::decode_iterative(masked::model_logits(store, spec.masked), spec.masked, eps, k, seed);
        if (world.channels > 0) {
            const auto codebook = world::make_codebook(world);
            for (const auto& t : out.tokens) {
                out.latents.push_back(world::embed_tokens(t, codebook, world.channels, 0.0, 0));
            }
        }
    } else {
        const int k = steps > 0 ? steps : spec.flow.sample_steps;
        out.latents = flow::sample_futures(store, spec.flow, eps, k, scale < 0 ? spec.flow.cfg_scale : scale, seed);
        const auto codebook = world::make_codebook(world);
        for (const auto& c : out.latents) {
            out.tokens.push_back(world::nearest_tokens(c, codebook));
        }
    }
    return out;
}

EvalReport score_futures(const Futures& fut, const std::vector<world::Episode>& episodes) {
    EvalReport r;
    std::vector<world::TokenGrid> truth_tokens;
    for (const auto& e : episodes) {
        truth_tokens.push_back(e.future_tokens);
    }
    r.token_accuracy = token_accuracy(fut.tokens, truth_tokens);
    if (!fut.latents.empty()) {
        std::vector<world::LatentClip> truth;
        for (const auto& e : episodes) {
            truth.push_back(e.future_latents);
        }
        const double peak = data_range(truth);
        if (peak > 0) {
            r.psnr_db = psnr(fut.latents, truth, peak);
        }
        r.frechet_proxy = frechet_gaussian_proxy(site_features(fut.latents), site_features(truth));
    }
    return r;
}

EvalReport evaluate(num::ParamStore<float>& store, const train::ModelSpec& spec, const world::WorldConfig& world,
                    const EvalOptions& opts) {
    if (opts.episodes < 2) {
        throw std::invalid_argument("evaluate: need at least two episodes");
    }
    const auto eps = heldout_episodes(world, opts.seed, opts.episodes);
    auto r = score_futures(
        generate_futures(store, spec, world, eps, opts.steps, opts.cfg_scale, derive_seed(opts.seed, "sample")), eps);
    r.label = train::paradigm_name(spec.paradigm) + "-" +
              blocks::variant_name(spec.paradigm == train::Paradigm::Masked ? spec.masked.blocks.variant
                                                                            : spec.flow.blocks.variant);
    r.params_billions = static_cast<double>(store.count()) * 1e-9;
    r.peak_param_bytes = 4 * store.count();
    return r;
}

BenchResult bench(num::ParamStore<float>& store, const train::ModelSpec& spec, const world::WorldConfig& world,
                  const BenchOptions& opts) {
    if (opts.batch < 1 || opts.repetitions < 1 || opts.warmup < 0) {
        throw std::invalid_argument("bench: batch and repetitions must be positive");
    }
    const auto eps = heldout_episodes(world, opts.seed, opts.batch);
    BenchResult res;
    res.params = store.count();
    res.param_bytes = 4 * res.params;
    for (int i = 0; i < opts.warmup + opts.repetitions; ++i) {
        num::memory::reset_peak();
        const auto t0 = std::chrono::steady_clock::now();
        generate_futures(store, spec, world, eps, opts.steps, -1,
                         derive_seed(opts.seed, "sample", static_cast<std::uint64_t>(i)));
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (i >= opts.warmup) {
            res.seconds.push_back(s);
            res.peak_bytes = std::max(res.peak_bytes, num::memory::peak_bytes());
        }
    }
    auto sorted = res.seconds;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    res.samples_per_second = opts.batch / median;
    return res;
}

}  // namespace hwm::eval
