#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hwm/cli/cli.hpp"
#include "hwm/cli/run_config.hpp"
#include "hwm/numcore/rng.hpp"

namespace hwm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string preset = "masked-base";
    std::string config;
    std::vector<std::string> sets;
    std::int64_t seed = -1;
    std::string out;
    std::string checkpoint;
    bool json_out = false;
    bool paper_dims = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--preset", c.preset, "masked-{base,split,modshare,fullshare} or flow-{...}");
    cmd->add_option("--config", c.config, "JSON run configuration");
    cmd->add_option("--set", c.sets, "Override key=value (repeatable)")->take_all();
    cmd->add_option("--seed", c.seed, "Root seed");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_flag("--json", c.json_out, "Machine-readable output");
    cmd->add_flag("--paper-dims", c.paper_dims, "Use the published model dimensions");
}

RunConfig resolve(const Common& c, const CLI::App* cmd) {
    RunConfig cfg = preset(c.preset);
    if (!c.config.empty()) {
        cfg = load_config(c.config, cfg);
        // An explicit preset still selects family and variant.
        if (cmd->count("--preset")) {
            merge(cfg, {{"paradigm", preset(c.preset).doc["paradigm"]}, {"variant", preset(c.preset).doc["variant"]}});
        }
    }
    if (c.paper_dims) {
        apply_paper_dims(cfg);
    }
    for (const auto& s : c.sets) {
        apply_set(cfg, s);
    }
    if (c.seed >= 0) {
        merge(cfg, {{"seed", c.seed}});
    }
    if (!c.out.empty()) {
        merge(cfg, {{"out", c.out}});
    }
    validate(cfg);
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

num::ParamStore<float> fresh_model(const RunConfig& cfg) {
    num::ParamStore<float> store;
    const auto spec = cfg.model();
    train::declare_model(store, spec);
    train::init_weights(store, train::default_policy(spec.paradigm), cfg.seed());
    return store;
}

fs::path checkpoint_path(const Common& c, const RunConfig& cfg) {
    const fs::path p = c.checkpoint.empty() ? fs::path(cfg.out()) / "checkpoint.hwmc" : fs::path(c.checkpoint);
    if (!fs::exists(p)) {
        throw ConfigError("checkpoint not found: " + p.string());
    }
    return p;
}

// Weights from a checkpoint; without --config/--preset the run config stored
// in the checkpoint is used.
num::ParamStore<float> load_model(const Common& c, const CLI::App* cmd, RunConfig& cfg) {
    const auto path = checkpoint_path(c, cfg);
    const auto ck = train::read_checkpoint(path.string());
    if (c.config.empty() && !cmd->count("--preset") && !ck.header.config.empty()) {
        RunConfig stored{json::parse(ck.header.config)};
        RunConfig base = preset(stored.doc.at("paradigm").get<std::string>() + "-" +
                                blocks::variant_name(blocks::parse_variant(stored.doc.at("variant").get<std::string>())));
        merge(base, stored.doc);
        for (const auto& s : c.sets) {
            apply_set(base, s);
        }
        if (c.seed >= 0) {
            merge(base, {{"seed", c.seed}});
        }
        if (!c.out.empty()) {
            merge(base, {{"out", c.out}});
        }
        validate(base);
        cfg = base;
    }
    num::ParamStore<float> store;
    train::declare_model(store, cfg.model());
    train::restore(ck, store);
    return store;
}

int cmd_train(const Common& c, const CLI::App* cmd, bool resume) {
    const auto cfg = resolve(c, cmd);
    const fs::path out = cfg.out();
    fs::create_directories(out);
    write_text(out / "config.json", cfg.dump() + "\n");
    auto store = fresh_model(cfg);
    train::TrainOptions opts;
    opts.out_dir = out.string();
    opts.config_json = cfg.doc.dump();
    train::Checkpoint ck;
    if (resume) {
        ck = train::read_checkpoint(checkpoint_path(c, cfg).string());
        opts.resume = &ck;
    }
    const auto tc = cfg.train();
    const int every = std::max(1, tc.steps / 20);
    if (!c.json_out) {
        opts.on_step = [every, &tc](int step, double loss, double lr) {
            if ((step + 1) % every == 0 || step + 1 == tc.steps) {
                std::printf("step %6d  loss %.5f  lr %.3g\n", step + 1, loss, lr);
                std::fflush(stdout);
            }
        };
    }
    const auto res = train::train_loop(store, tc, cfg.model(), cfg.world(), opts);
    if (c.json_out) {
        std::cout << json{{"checkpoint", res.checkpoint_path},
                          {"metrics", res.log_path},
                          {"final_loss", res.losses.empty() ? json(nullptr) : json(res.losses.back())},
                          {"skipped_steps", res.skipped}}
                         .dump(2)
                  << "\n";
    } else {
        std::printf("checkpoint %s\nmetrics %s\n", res.checkpoint_path.c_str(), res.log_path.c_str());
    }
    return 0;
}

int cmd_sample(const Common& c, const CLI::App* cmd) {
    auto cfg = resolve(c, cmd);
    auto store = load_model(c, cmd, cfg);
    const auto w = cfg.world();
    const auto e = cfg.eval();
    const auto eps = eval::heldout_episodes(w, e.seed, e.episodes);
    const auto fut = eval::generate_futures(store, cfg.model(), w, eps, e.steps, e.cfg_scale, derive_seed(e.seed, "sample"));
    const fs::path out = cfg.out();
    fs::create_directories(out);
    auto predicted = eps;
    std::vector<world::TokenGrid> rows_pred, rows_true;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        predicted[i].future_tokens = fut.tokens[i];
        if (!fut.latents.empty()) {
            predicted[i].future_latents = fut.latents[i];
        }
        rows_pred.push_back(predicted[i].all_tokens());
        rows_true.push_back(eps[i].all_tokens());
    }
    world::write_episodes((out / "samples.hwm1").string(), predicted, w);
    world::write_token_png((out / "samples.png").string(), rows_pred, w.s);
    world::write_token_png((out / "truth.png").string(), rows_true, w.s);
    write_text(out / "sample_config.json", cfg.dump() + "\n");
    const double acc = eval::token_accuracy(fut.tokens, [&] {
        std::vector<world::TokenGrid> t;
        for (const auto& ep : eps) {
            t.push_back(ep.future_tokens);
        }
        return t;
    }());
    if (c.json_out) {
        std::cout << json{{"samples", (out / "samples.hwm1").string()},
                          {"png", (out / "samples.png").string()},
                          {"token_accuracy", acc}}
                         .dump(2)
                  << "\n";
    } else {
        std::printf("wrote %zu samples to %s (token accuracy %.4f)\n", eps.size(), (out / "samples.hwm1").c_str(), acc);
    }
    return 0;
}

int cmd_eval(const Common& c, const CLI::App* cmd, bool oracle) {
    auto cfg = resolve(c, cmd);
    eval::EvalReport r;
    const auto w = cfg.world();
    if (oracle) {
        const auto e = cfg.eval();
        const auto eps = eval::heldout_episodes(w, e.seed, e.episodes);
        eval::Futures fut;
        for (const auto& ep : eps) {
            fut.tokens.push_back(world::oracle_future(ep.past_tokens, ep.future_actions, ep.seed, w));
            if (w.channels > 0) {
                fut.latents.push_back(ep.future_latents);
            }
        }
        r = eval::score_futures(fut, eps);
        r.label = "oracle";
    } else {
        auto store = load_model(c, cmd, cfg);
        r = eval::evaluate(store, cfg.model(), w, cfg.eval());
    }
    const fs::path out = cfg.out();
    fs::create_directories(out);
    write_text(out / "eval.json", eval::to_json(r) + "\n");
    std::cout << (c.json_out ? eval::to_json(r) + "\n" : eval::format_table({r}));
    return 0;
}

int cmd_bench(const Common& c, const CLI::App* cmd, bool family) {
    const auto cfg = resolve(c, cmd);
    std::vector<RunConfig> runs;
    if (family) {
        for (const char* v : {"base", "split", "modshare", "fullshare"}) {
            RunConfig r = cfg;
            merge(r, {{"variant", v}});
            runs.push_back(r);
        }
    } else {
        runs.push_back(cfg);
    }
    std::vector<eval::EvalReport> rows;
    for (const auto& r : runs) {
        auto store = fresh_model(r);
        const auto b = eval::bench(store, r.model(), r.world(), r.bench());
        eval::EvalReport rep;
        rep.label = r.doc["paradigm"].get<std::string>() + "-" + r.doc["variant"].get<std::string>();
        rep.params_billions = static_cast<double>(b.params) * 1e-9;
        rep.peak_param_bytes = b.param_bytes;
        rep.peak_memory_bytes = b.peak_bytes;
        rep.samples_per_second = b.samples_per_second;
        rows.push_back(rep);
    }
    std::cout << (c.json_out ? eval::to_json(rows) + "\n" : eval::format_table(rows));
    return 0;
}

int cmd_params(const Common& c, const CLI::App* cmd) {
    std::vector<std::string> names;
    if (cmd->count("--preset")) {
        names.push_back(c.preset);
    } else {
        names = preset_names();
    }
    auto count = [&](const std::string& name, bool paper) {
        Common cc = c;
        cc.preset = name;
        cc.paper_dims = paper;
        const auto cfg = resolve(cc, cmd);
        num::ParamStore<float> store;
        train::declare_model(store, cfg.model());
        return store.count();
    };
    const bool paper_only = c.paper_dims;
    json rows = json::array();
    for (const auto& n : names) {
        json row{{"preset", n}, {"paper", count(n, true)}};
        if (!paper_only) {
            row["toy"] = count(n, false);
        }
        rows.push_back(row);
    }
    if (c.json_out) {
        std::cout << rows.dump(2) << "\n";
        return 0;
    }
    std::printf("%-18s %14s %14s\n", "preset", "toy", "paper (B)");
    for (const auto& r : rows) {
        const std::string toy = r.contains("toy") ? std::to_string(r["toy"].get<std::int64_t>()) : "-";
        std::printf("%-18s %14s %14.4f\n", r["preset"].get<std::string>().c_str(), toy.c_str(),
                    static_cast<double>(r["paper"].get<std::int64_t>()) * 1e-9);
    }
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Hybrid world model toolkit"};
    app.require_subcommand(1);
    Common c;
    bool resume = false, oracle = false, family = false;

    auto* train = app.add_subcommand("train", "Train a model and write checkpoint + metrics");
    add_common(train, c);
    train->add_option("--checkpoint", c.checkpoint, "Resume from this checkpoint");
    train->add_flag("--resume", resume, "Resume from --checkpoint or <out>/checkpoint.hwmc");

    auto* sample = app.add_subcommand("sample", "Generate futures for held-out episodes");
    add_common(sample, c);
    sample->add_option("--checkpoint", c.checkpoint, "Checkpoint (default <out>/checkpoint.hwmc)");

    auto* ev = app.add_subcommand("eval", "Score a trained model on held-out episodes");
    add_common(ev, c);
    ev->add_option("--checkpoint", c.checkpoint, "Checkpoint (default <out>/checkpoint.hwmc)");
    ev->add_flag("--oracle", oracle, "Score the exact world dynamics instead of a model");

    auto* bench = app.add_subcommand("bench", "Measure generation throughput and memory");
    add_common(bench, c);
    bench->add_flag("--family", family, "Bench all four block variants of the family");

    auto* params = app.add_subcommand("params", "Parameter counts of the presets");
    add_common(params, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        if (*train) {
            if (!c.checkpoint.empty()) {
                resume = true;
            }
            return cmd_train(c, train, resume);
        }
        if (*sample) {
            return cmd_sample(c, sample);
        }
        if (*ev) {
            return cmd_eval(c, ev, oracle);
        }
        if (*bench) {
            return cmd_bench(c, bench, family);
        }
        if (*params) {
            return cmd_params(c, params);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

}  // namespace hwm::cli
