#pragma once

#include <cstdint>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/eval/eval.hpp"
#include "hwm/train/train.hpp"

namespace hwm::cli {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A run is described by one JSON document:
//   paradigm, variant, seed, out
//   world.{G, s, z, p, f, raw_per_latent, channels, jitter, codebook_seed}
//   model.{layers, h, heads, mlp_hidden, share_boundary, time_dim, rope_base,
//          rho_max, decode_steps, temperature, confidence_remask,
//          p_lw, p_t, freq_dim, sigma_min, cond_drop, cfg_scale, sample_steps}
//   train.{steps, batch_size, lr, schedule, warmup_steps, weight_decay, beta1,
//          beta2, eps, clip_norm, checkpoint_every, record_wall_time}
//   eval.{episodes, steps, cfg_scale, bench_batch, bench_repetitions, bench_warmup}
//   paper.{batch_size}  (recorded only)
// Every key has a default; unknown keys are rejected.
struct RunConfig {
    nlohmann::json doc;

    train::Paradigm paradigm() const;
    std::uint64_t seed() const;
    std::string out() const;
    world::WorldConfig world() const;
    train::ModelSpec model() const;
    train::TrainConfig train() const;
    eval::EvalOptions eval() const;
    eval::BenchOptions bench() const;
    std::string dump() const { return doc.dump(2); }
};

std::vector<std::string> preset_names();
// Toy-scale defaults of one of the eight presets; throws on unknown names.
RunConfig preset(const std::string& name);
// Model dimensions of the published configurations.
void apply_paper_dims(RunConfig& cfg);

// Merges `patch` into the config; every key must already exist with a
// compatible type.
void merge(RunConfig& cfg, const nlohmann::json& patch);
// "a.b=value"; the value is parsed as JSON and falls back to a string.
void apply_set(RunConfig& cfg, const std::string& assignment);
RunConfig load_config(const std::string& path, const RunConfig& base);

// Checks every field converts and validates.
void validate(const RunConfig& cfg);

}  // namespace hwm::cli
