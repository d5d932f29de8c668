#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hwm/numcore/params.hpp"
#include "hwm/train/train.hpp"
#include "hwm/world/world.hpp"

namespace hwm::eval {

constexpr double kPsnrCap = 100.0;

// 10 log10(peak^2 / MSE), capped at kPsnrCap.
double psnr(const std::vector<float>& pred, const std::vector<float>& truth, double peak);
double psnr(const std::vector<world::LatentClip>& pred, const std::vector<world::LatentClip>& truth, double peak);
// max - min over every value of the reference set.
double data_range(const std::vector<world::LatentClip>& reference);

double token_accuracy(const world::TokenGrid& pred, const world::TokenGrid& truth);
double token_accuracy(const std::vector<world::TokenGrid>& pred, const std::vector<world::TokenGrid>& truth);

// Frechet distance between Gaussians fitted to two sample sets (one row per
// sample). Covariances are shrunk toward their diagonal by `shrink`.
double frechet_gaussian_proxy(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                              double shrink = 0.1);
// One C-dimensional sample per latent site of every frame.
std::vector<std::vector<double>> site_features(const std::vector<world::LatentClip>& clips);

struct EvalReport {
    std::string label;
    std::optional<double> psnr_db;
    std::optional<double> token_accuracy;
    std::optional<double> frechet_proxy;
    std::optional<double> params_billions;
    std::optional<double> samples_per_second;
    std::optional<std::int64_t> peak_param_bytes;
    std::optional<std::int64_t> peak_memory_bytes;
};

// JSON object with null for skipped fields.
std::string to_json(const EvalReport& r);
std::string to_json(const std::vector<EvalReport>& rows);
// Aligned table with one column per report.
std::string format_table(const std::vector<EvalReport>& reports);

struct EvalOptions {
    int episodes = 64;
    std::uint64_t seed = 0;
    int steps = 0;             // 0: decode_steps / sample_steps of the model config
    double cfg_scale = -1;     // < 0: flow config value
};

// Held-out episodes of a root seed.
std::vector<world::Episode> heldout_episodes(const world::WorldConfig& world, std::uint64_t seed, int n);

struct Futures {
    std::vector<world::TokenGrid> tokens;
    std::vector<world::LatentClip> latents;  // empty when the world has no channels
};

// Masked models decode tokens (latents are their codebook rows); flow models
// sample latents (tokens are their nearest codebook rows).
Futures generate_futures(num::ParamStore<float>& store, const train::ModelSpec& spec, const world::WorldConfig& world,
                         const std::vector<world::Episode>& episodes, int steps, double cfg_scale, std::uint64_t seed);

// Token accuracy, PSNR and Frechet proxy of futures against the episodes.
EvalReport score_futures(const Futures& futures, const std::vector<world::Episode>& episodes);

// Generates futures for held-out episodes and scores them against the truth.
// Latent metrics are skipped when the world has no continuous channels.
EvalReport evaluate(num::ParamStore<float>& store, const train::ModelSpec& spec, const world::WorldConfig& world,
                    const EvalOptions& opts);

struct BenchOptions {
    int batch = 4;
    int repetitions = 5;
    int warmup = 1;
    int steps = 0;  // as in EvalOptions
    std::uint64_t seed = 0;
};

struct BenchResult {
    double samples_per_second = 0;  // median over repetitions
    std::vector<double> seconds;    // per repetition
    std::int64_t peak_bytes = 0;    // parameters + activations
    std::int64_t param_bytes = 0;   // 4 x count
    std::int64_t params = 0;
};

// Future-generation throughput of one batch; warmup runs are excluded.
BenchResult bench(num::ParamStore<float>& store, const train::ModelSpec& spec, const world::WorldConfig& world,
                  const BenchOptions& opts);

}  // namespace hwm::eval
