#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/flow/flow.hpp"
#include "hwm/masked/masked.hpp"
#include "hwm/numcore/params.hpp"
#include "hwm/world/world.hpp"

namespace hwm::train {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Schedule { LinearWarmup, Cosine, Constant };
Schedule parse_schedule(const std::string& name);
std::string schedule_name(Schedule s);

struct TrainConfig {
    int steps = 2000;
    int batch_size = 32;
    double lr = 1e-3;
    Schedule schedule = Schedule::LinearWarmup;
    int warmup_steps = 100;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0: final checkpoint only
    bool record_wall_time = false;
};

void validate(const TrainConfig& cfg);

// Learning rate used at optimizer step `step` (0-based). Linear warmup from
// 0, then linear decay reaching 0 at `steps`; cosine decays from lr to 0
// without warmup; constant holds lr after warmup.
double lr_at(int step, const TrainConfig& cfg);

// Decoupled-weight-decay Adam over the unique storage slots of a store.
class AdamW {
public:
    AdamW(num::ParamStore<float>& store, const TrainConfig& cfg);

    // Applies one update with learning rate lr from the slot gradients.
    // Returns false and leaves weights untouched when a gradient is not finite.
    bool step(double lr);

    std::int64_t t() const noexcept { return t_; }
    std::int64_t skipped() const noexcept { return skipped_; }
    double last_grad_norm() const noexcept { return last_norm_; }
    std::vector<num::Tensor<float>>& m() noexcept { return m_; }
    std::vector<num::Tensor<float>>& v() noexcept { return v_; }
    void set_counters(std::int64_t t, std::int64_t skipped) {
        t_ = t;
        skipped_ = skipped;
    }

private:
    num::ParamStore<float>* store_;
    TrainConfig cfg_;
    std::vector<num::Tensor<float>> m_, v_;
    std::int64_t t_ = 0;
    std::int64_t skipped_ = 0;
    double last_norm_ = 0;
};

// Initialization rules matched in order against canonical slot names with
// shell-style wildcards.
struct InitRule {
    enum class Kind { Normal, Xavier, Zeros, Ones };
    std::string pattern;
    Kind kind = Kind::Normal;
    double std = 0.02;
};
using InitPolicy = std::vector<InitRule>;

InitPolicy masked_policy();
InitPolicy flow_policy();
// Xavier-uniform bound sqrt(6 / (fan_in + fan_out)) for a [fan_in, fan_out] weight.
double xavier_bound(const num::Shape& shape);
void init_weights(num::ParamStore<float>& store, const InitPolicy& policy, std::uint64_t seed);

enum class Paradigm { Masked, Flow };
Paradigm parse_paradigm(const std::string& name);
std::string paradigm_name(Paradigm p);

struct ModelSpec {
    Paradigm paradigm = Paradigm::Masked;
    masked::MaskedConfig masked;
    flow::FlowConfig flow;
};

void declare_model(num::ParamStore<float>& store, const ModelSpec& spec);
InitPolicy default_policy(Paradigm p);

// ---- checkpoints ----

struct CheckpointHeader {
    std::string config;  // UTF-8 JSON of the run
    std::uint64_t step = 0;
    std::uint64_t seed = 0;  // root seed; per-step streams derive from (seed, step)
    std::int64_t opt_t = 0;
    std::int64_t opt_skipped = 0;
};

struct Checkpoint {
    CheckpointHeader header;
    std::map<std::string, num::Tensor<float>> records;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header, const num::ParamStore<float>& store,
                     AdamW* opt = nullptr);
Checkpoint read_checkpoint(const std::string& path);
// Copies parameter (and optimizer, when given) records into allocated storage.
void restore(const Checkpoint& ckpt, num::ParamStore<float>& store, AdamW* opt = nullptr);

// ---- training loop ----

struct TrainOptions {
    std::string out_dir;      // empty: no files written
    std::string config_json;  // stored in checkpoints
    std::function<void(int step, double loss, double lr)> on_step;
    // Continue from a checkpoint of the same run: weights, moments and step
    // counter are restored and metrics are appended.
    const Checkpoint* resume = nullptr;
};

struct TrainResult {
    std::vector<double> losses;
    std::int64_t skipped = 0;
    std::string checkpoint_path;
    std::string log_path;
};

// Episodes of training step `step`: seeds episode_seed(seed, "train", step * B + j).
std::vector<world::Episode> train_episodes(const world::WorldConfig& world, std::uint64_t seed, int step, int batch);

// One loss evaluation with gradients accumulated into the store.
double loss_and_grad(num::ParamStore<float>& store, const ModelSpec& spec, const std::vector<world::Episode>& eps,
                     std::uint64_t seed);

TrainResult train_loop(num::ParamStore<float>& store, const TrainConfig& cfg, const ModelSpec& spec,
                       const world::WorldConfig& world, const TrainOptions& opts = {});

}  // namespace hwm::train
