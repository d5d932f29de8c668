#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>

#include "hwm/numcore/rng.hpp"
#include "hwm/train/train.hpp"

namespace hwm::train {

Paradigm parse_paradigm(const std::string& name) {
    if (name == "masked") {
        return Paradigm::Masked;
    }
    if (name == "flow") {
        return Paradigm::Flow;
    }
    throw ConfigError("unknown paradigm '" + name + "' (expected masked or flow)");
}

std::string paradigm_name(Paradigm p) { return p == Paradigm::Masked ? "masked" : "flow"; }

void declare_model(num::ParamStore<float>& store, const ModelSpec& spec) {
    if (spec.paradigm == Paradigm::Masked) {
        masked::declare_model(store, spec.masked);
    } else {
        flow::declare_model(store, spec.flow);
    }
}

InitPolicy default_policy(Paradigm p) { return p == Paradigm::Masked ? masked_policy() : flow_policy(); }

std::vector<world::Episode> train_episodes(const world::WorldConfig& world, std::uint64_t seed, int step, int batch) {
    std::vector<world::Episode> eps;
    eps.reserve(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        const auto idx = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch) + static_cast<std::uint64_t>(j);
        eps.push_back(world::gen_episode(world::episode_seed(seed, "train", idx), world));
    }
    return eps;
}

namespace {

struct Prepared {
    masked::TrainingBatch m;
    flow::FlowBatch f;
};

Prepared prepare(const ModelSpec& spec, const std::vector<world::Episode>& eps, std::uint64_t seed) {
    Prepared p;
    if (spec.paradigm == Paradigm::Masked) {
        p.m = masked::make_batch(eps, spec.masked, seed);
    } else {
        p.f = flow::make_batch(eps, spec.flow, seed);
    }
    return p;
}

std::uint64_t batch_seed(const ModelSpec& spec, std::uint64_t seed, int step) {
    return derive_seed(seed, spec.paradigm == Paradigm::Masked ? "mask" : "noise", static_cast<std::uint64_t>(step));
}

class LossRunner {
public:
    explicit LossRunner(const ModelSpec& spec) : spec_(spec) {
        if (spec.paradigm == Paradigm::Masked) {
            mt_ = blocks::make_masked_tables<float>(spec.masked.blocks.head_dim(), spec.masked.geometry(1),
                                                           spec.masked.blocks.rope_base);
        } else {
            ft_ = blocks::make_flow_tables<float>(spec.flow.blocks.head_dim(), spec.flow.layout(), spec.flow.blocks.rope_base);
        }
    }

    double operator()(num::ParamStore<float>& store, const Prepared& p) const {
        num::Graph<float> g(&store);
        num::Var<float> l;
        if (spec_.paradigm == Paradigm::Masked) {
            l = masked::loss(g, spec_.masked, p.m.input, p.m.targets, p.m.mask, mt_);
        } else {
            l = flow::loss(g, spec_.flow, p.f.input, p.f.target, ft_);
        }
        g.backward(l);
        return l.value()[0];
    }

private:
    ModelSpec spec_;
    blocks::MaskedTables<float> mt_;
    blocks::FlowTables<float> ft_;
};

}  // namespace

double loss_and_grad(num::ParamStore<float>& store, const ModelSpec& spec, const std::vector<world::Episode>& eps,
                     std::uint64_t seed) {
    return LossRunner(spec)(store, prepare(spec, eps, seed));
}

TrainResult train_loop(num::ParamStore<float>& store, const TrainConfig& cfg, const ModelSpec& spec,
                       const world::WorldConfig& world, const TrainOptions& opts) {
    validate(cfg);
    world::validate(world);
    if (!store.allocated()) {
        throw ConfigError("train_loop: parameters must be declared and initialized first");
    }
    AdamW opt(store, cfg);
    int start = 0;
    if (opts.resume) {
        if (opts.resume->header.step > static_cast<std::uint64_t>(cfg.steps)) {
            throw ConfigError("checkpoint step " + std::to_string(opts.resume->header.step) + " exceeds steps " +
                              std::to_string(cfg.steps));
        }
        restore(*opts.resume, store, &opt);
        start = static_cast<int>(opts.resume->header.step);
    }
    const LossRunner run(spec);
    TrainResult res;

    std::ofstream log;
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        res.log_path = (std::filesystem::path(opts.out_dir) / "metrics.tsv").string();
        res.checkpoint_path = (std::filesystem::path(opts.out_dir) / "checkpoint.hwmc").string();
        log.open(res.log_path, opts.resume ? std::ios::app : std::ios::trunc);
        if (!log) {
            throw TrainError("cannot write metrics log " + res.log_path);
        }
    }
    auto checkpoint = [&](int step) {
        if (!res.checkpoint_path.empty()) {
            save_checkpoint(res.checkpoint_path,
                            {opts.config_json, static_cast<std::uint64_t>(step), cfg.seed, 0, 0}, store, &opt);
        }
    };

    // Batches for the next two steps are generated while the current step runs.
    std::deque<std::future<Prepared>> ahead;
    int queued = start;
    auto enqueue = [&]() {
        const int step = queued++;
        ahead.push_back(std::async(std::launch::async, [&spec, &world, &cfg, step]() {
            return prepare(spec, train_episodes(world, cfg.seed, step, cfg.batch_size), batch_seed(spec, cfg.seed, step));
        }));
    };
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = start; i < cfg.steps; ++i) {
        while (queued < cfg.steps && queued <= i + 2) {
            enqueue();
        }
        const Prepared batch = ahead.front().get();
        ahead.pop_front();

        store.zero_grad();
        double loss = 0;
        try {
            loss = run(store, batch);
        } catch (const num::NumericError& e) {
            throw TrainError("step " + std::to_string(i) + ": " + e.what() + " (last checkpoint retained)");
        }
        if (!std::isfinite(loss)) {
            throw TrainError("step " + std::to_string(i) + ": non-finite loss (last checkpoint retained)");
        }
        const double lr = lr_at(i, cfg);
        opt.step(lr);
        res.losses.push_back(loss);

        if (log.is_open()) {
            long long wall = 0;
            if (cfg.record_wall_time) {
                wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
                           .count();
            }
            char line[128];
            std::snprintf(line, sizeof line, "%d\t%.9g\t%.9g\t%lld\n", i, loss, lr, wall);
            log << line;
            log.flush();
        }
        if (opts.on_step) {
            opts.on_step(i, loss, lr);
        }
        if (cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 && i + 1 < cfg.steps) {
            checkpoint(i + 1);
        }
    }
    checkpoint(cfg.steps);
    res.skipped = opt.skipped();
    return res;
}

}  // namespace hwm::train
