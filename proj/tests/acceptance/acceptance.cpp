// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hwm/cli/cli.hpp"
#include "hwm/cli/run_config.hpp"
#include "hwm/eval/eval.hpp"
#include "hwm/numcore/grad_check.hpp"
#include "hwm/numcore/ops.hpp"
#include "hwm/numcore/rng.hpp"
#include "unit/check_util.hpp"

using namespace hwm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::int64_t count_params(const cli::RunConfig& cfg) {
    num::ParamStore<float> store;
    train::declare_model(store, cfg.model());
    return store.count();
}

std::map<std::string, double> paper_counts() {
    std::map<std::string, double> out;
    for (const auto& name : cli::preset_names()) {
        auto cfg = cli::preset(name);
        cli::apply_paper_dims(cfg);
        out[name] = static_cast<double>(count_params(cfg)) * 1e-9;
    }
    return out;
}

// 1. Published parameter counts within 10% and their orderings.
Outcome param_counts() {
    const auto c = paper_counts();
    const std::vector<std::pair<std::string, double>> table = {
        {"flow-base", 1.36},   {"flow-split", 0.944}, {"flow-modshare", 0.886},
        {"flow-fullshare", 0.648}, {"masked-base", 0.321}, {"masked-fullshare", 0.195}};
    Outcome o{true, ""};
    for (const auto& [name, ref] : table) {
        const double rel = std::abs(c.at(name) - ref) / ref;
        o.pass = o.pass && rel <= 0.10;
        o.detail += name + " " + fmt("%.4fB", c.at(name)) + fmt(" (%+.1f%%) ", 100 * (c.at(name) - ref) / ref);
    }
    for (const std::string fam : {"flow", "masked"}) {
        const bool order = c.at(fam + "-fullshare") < c.at(fam + "-modshare") &&
                           c.at(fam + "-modshare") < c.at(fam + "-base") && c.at(fam + "-split") < c.at(fam + "-base");
        o.pass = o.pass && order;
        o.detail += fam + (order ? " order ok " : " ORDER BROKEN ");
    }
    return o;
}

// 2. Full sharing reduction brackets.
Outcome reduction() {
    const auto c = paper_counts();
    const double flow = 1 - c.at("flow-fullshare") / c.at("flow-base");
    const double masked = 1 - c.at("masked-fullshare") / c.at("masked-base");
    return {flow >= 0.45 && flow <= 0.57 && masked >= 0.33 && masked <= 0.45,
            "flow " + fmt("%.1f%%", 100 * flow) + " in [45,57], masked " + fmt("%.1f%%", 100 * masked) + " in [33,45]"};
}

const std::vector<blocks::Variant> kVariants = {blocks::Variant::Base, blocks::Variant::Split,
                                                blocks::Variant::ModalityShare, blocks::Variant::FullShare};

world::WorldConfig small_world(int channels) {
    world::WorldConfig w;
    w.G = 4;
    w.s = 8;
    w.z = 3;
    w.channels = channels;
    return w;
}

masked::MaskedConfig small_masked(blocks::Variant v) {
    masked::MaskedConfig cfg;
    cfg.blocks = {v, 3, 16, 2, 32, 2, false, 0};
    cfg.vocab = 8;
    cfg.action_dim = 3;
    cfg.rows = cfg.cols = 4;
    return cfg;
}

flow::FlowConfig small_flow(blocks::Variant v) {
    flow::FlowConfig cfg;
    cfg.blocks = {v, 3, 16, 2, 32, 2, true, 12};
    cfg.channels = 4;
    cfg.action_dim = 3;
    cfg.grid = 4;
    cfg.p_lw = 2;
    cfg.freq_dim = 8;
    cfg.cond_drop = 0.5;
    return cfg;
}

std::vector<world::Episode> small_episodes(int n, int channels, std::uint64_t root) {
    std::vector<world::Episode> eps;
    for (int i = 0; i < n; ++i) {
        eps.push_back(world::gen_episode(world::episode_seed(root, "train", static_cast<std::uint64_t>(i)),
                                         small_world(channels)));
    }
    return eps;
}

// 3. 64-bit gradient checks of every variant in both paradigms.
Outcome gradients() {
    num::GradCheckOptions opts;
    opts.tol = 1e-4;
    opts.max_entries_per_param = 6;
    Outcome o{true, ""};
    double worst = 0;
    for (const auto v : kVariants) {
        const auto cfg = small_masked(v);
        const auto batch = masked::make_batch(small_episodes(2, 0, 5), cfg, 4);
        masked::MaskedInput<double> in{batch.input.batch, batch.input.tokens, batch.input.past_actions.cast<double>(),
                                       batch.input.future_actions.cast<double>()};
        std::vector<std::uint8_t> all(batch.mask.size(), 1);
        num::ParamStore<double> store;
        masked::declare_model(store, cfg);
        store.allocate();
        hwm::testing::fill_normal(store, 8, 0.4);
        const auto tables = blocks::make_masked_tables<double>(cfg.blocks.head_dim(), cfg.geometry(2));
        const auto rep = num::grad_check(
            [&](num::Graph<double>& g) { return masked::loss(g, cfg, in, batch.targets, all, tables); }, store, opts);
        worst = std::max(worst, rep.max_rel_err);
        o.pass = o.pass && rep.passed;
        if (!rep.passed) {
            o.detail += "masked-" + blocks::variant_name(v) + ": " + rep.summary() + " ";
        }
    }
    for (const auto v : kVariants) {
        const auto cfg = small_flow(v);
        const auto b = flow::make_batch(small_episodes(2, 4, 6), cfg, 11);
        flow::FlowInput<double> in{b.input.batch,
                                   b.input.past.cast<double>(),
                                   b.input.xt.cast<double>(),
                                   b.input.past_actions.cast<double>(),
                                   b.input.future_actions.cast<double>(),
                                   b.input.t,
                                   {1, 0}};
        const auto target = b.target.cast<double>();
        num::ParamStore<double> store;
        flow::declare_model(store, cfg);
        store.allocate();
        hwm::testing::fill_normal(store, 12, 0.4);
        const auto tables = blocks::make_flow_tables<double>(cfg.blocks.head_dim(), cfg.layout());
        const auto rep = num::grad_check(
            [&](num::Graph<double>& g) { return flow::loss(g, cfg, in, target, tables); }, store, opts);
        worst = std::max(worst, rep.max_rel_err);
        o.pass = o.pass && rep.passed;
        if (!rep.passed) {
            o.detail += "flow-" + blocks::variant_name(v) + ": " + rep.summary() + " ";
        }
    }
    o.detail += "8 models, worst rel err " + fmt("%.2e", worst) + " (tol 1e-4)";
    return o;
}

// 4. Flow-matching path, Euler and guidance invariants.
Outcome flow_invariants() {
    Rng rng(41);
    double worst_dt = 0;
    for (int i = 0; i < 1000; ++i) {
        const double x0 = rng.normal(), x1 = rng.normal(), sigma = rng.uniform(0, 0.1), t = rng.uniform(0.01, 0.99);
        const double h = 1e-4;
        const double numeric =
            (flow::interpolate(x0, x1, t + h, sigma).first - flow::interpolate(x0, x1, t - h, sigma).first) / (2 * h);
        worst_dt = std::max(worst_dt, std::abs(numeric - flow::interpolate(x0, x1, t, sigma).second));
    }

    const double sigma = 1e-4;
    const auto x0 = hwm::testing::random_tensor<double>({3, 4, 16}, 1);
    const auto x1 = hwm::testing::random_tensor<double>({3, 4, 16}, 2);
    const auto path = flow::interpolate(x0, x1, {0.2, 0.5, 0.9}, sigma);
    // One Euler step of size 1 from x0 with the path velocity.
    double worst_euler = 0;
    for (std::int64_t i = 0; i < x0.numel(); ++i) {
        worst_euler = std::max(worst_euler, std::abs((x0[i] + path.vt[i]) - (x1[i] + sigma * x0[i])));
    }
    const auto x0f = x0.cast<float>();
    const auto vtf = path.vt.cast<float>();
    const flow::VelocityFn oracle = [&](const num::Tensor<float>&, double, bool) { return vtf; };
    const auto stepped = flow::euler_sample(oracle, x0f, 1, 3.0);
    bool euler_float = true;
    for (std::int64_t i = 0; i < x0f.numel(); ++i) {
        euler_float = euler_float && stepped[i] == static_cast<float>(static_cast<double>(x0f[i]) + vtf[i]);
    }

    const auto uc = hwm::testing::random_tensor<float>({2, 4, 16}, 3);
    const auto uu = hwm::testing::random_tensor<float>({2, 4, 16}, 4);
    const auto one = flow::cfg_combine(uc, uu, 1.0);
    bool cfg_exact = std::equal(one.data(), one.data() + one.numel(), uc.data());
    // Through a model: guided sampling at scale 1 equals conditional-only sampling.
    auto cfg = small_flow(blocks::Variant::Base);
    num::ParamStore<float> store;
    flow::declare_model(store, cfg);
    train::init_weights(store, train::flow_policy(), 5);
    for (int s = 0; s < store.slot_count(); ++s) {
        Rng r(static_cast<std::uint64_t>(100 + s));
        for (auto& v : store.slot(s).value.values()) {
            v += static_cast<float>(0.05 * r.normal());
        }
    }
    const auto cond = flow::conditioning(small_episodes(2, 4, 9), cfg);
    const auto vel = flow::model_velocity(store, cfg, cond);
    const auto start = hwm::testing::random_tensor<float>({2, cfg.future_tokens(), cfg.patch_dim()}, 6);
    const auto guided = flow::euler_sample(vel, start, 4, 1.0);
    const flow::VelocityFn cond_only = [&](const num::Tensor<float>& x, double t, bool) { return vel(x, t, false); };
    const auto plain = flow::euler_sample(cond_only, start, 4, 1.0);
    cfg_exact = cfg_exact && std::equal(guided.data(), guided.data() + guided.numel(), plain.data());

    return {worst_dt <= 1e-8 && worst_euler <= 1e-12 && euler_float && cfg_exact,
            "max |dxt/dt - vt| " + fmt("%.1e", worst_dt) + ", Euler landing err " + fmt("%.1e", worst_euler) +
                (euler_float ? ", float step exact" : ", float step MISMATCH") +
                (cfg_exact ? ", scale-1 guidance bit-exact" : ", scale-1 guidance DIFFERS")};
}

// 5. Masked decoding, loss locality, schedule and corruption invariants.
Outcome masked_invariants() {
    Outcome o{true, ""};
    // Decoding with an untrained model leaves no MASK ids.
    auto cfg = small_masked(blocks::Variant::Base);
    num::ParamStore<float> store;
    masked::declare_model(store, cfg);
    train::init_weights(store, train::masked_policy(), 3);
    std::vector<world::Episode> eps;
    for (int i = 0; i < 8; ++i) {
        eps.push_back(world::gen_episode(world::episode_seed(2, "heldout", static_cast<std::uint64_t>(i)), small_world(0)));
    }
    std::int64_t left = 0;
    for (const int k : {1, 2, 3}) {
        const auto out = masked::decode_iterative(masked::model_logits(store, cfg), cfg, eps, k, 5);
        for (const auto& g : out) {
            left += std::count(g.tokens.begin(), g.tokens.end(), cfg.mask_id());
        }
    }
    o.pass = left == 0;
    o.detail += "MASK left " + std::to_string(left);

    // Logit gradients vanish at unmasked future positions.
    const auto batch = masked::make_batch(eps, cfg, 7);
    num::ParamStore<double> dstore;
    masked::declare_model(dstore, cfg);
    dstore.allocate();
    hwm::testing::fill_normal(dstore, 3, 0.3);
    masked::MaskedInput<double> in{batch.input.batch, batch.input.tokens, batch.input.past_actions.cast<double>(),
                                   batch.input.future_actions.cast<double>()};
    const auto tables = blocks::make_masked_tables<double>(cfg.blocks.head_dim(), cfg.geometry(in.batch));
    num::Graph<double> g(&dstore);
    const auto logits = masked::forward(g, cfg, in, tables);
    const std::int64_t rows = logits.dim(0) * logits.dim(1);
    const auto flat = num::reshape(logits, {rows, cfg.vocab});
    g.backward(num::masked_cross_entropy(flat, batch.targets, batch.mask));
    const auto& gr = g.grad(flat);
    double unmasked_abs = 0, masked_abs = 0;
    std::int64_t n_unmasked = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
        double a = 0;
        for (int j = 0; j < cfg.vocab; ++j) {
            a += std::abs(gr[r * cfg.vocab + j]);
        }
        (batch.mask[static_cast<std::size_t>(r)] ? masked_abs : unmasked_abs) += a;
        n_unmasked += batch.mask[static_cast<std::size_t>(r)] ? 0 : 1;
    }
    const bool local = unmasked_abs == 0.0 && masked_abs > 0 && n_unmasked > 0;
    o.pass = o.pass && local;
    o.detail += ", unmasked-row grad " + fmt("%g", unmasked_abs) + " over " + std::to_string(n_unmasked) + " rows";

    const bool ends = masked::gamma_cosine(0.0) == 1.0 && std::abs(masked::gamma_cosine(1.0)) < 1e-15;
    o.pass = o.pass && ends;
    o.detail += ends ? ", gamma(0)=1 gamma(1)=0" : ", gamma endpoints WRONG";

    // Corruption fraction against the drawn rate over 1e5 tokens per draw.
    world::TokenGrid grid(1, 316);
    Rng rng(8);
    for (auto& t : grid.tokens) {
        t = static_cast<std::int32_t>(rng.below(64));
    }
    double worst = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto c = masked::corrupt_tokens(grid, 64, 0.2, s);
        std::int64_t diff = 0;
        for (std::size_t i = 0; i < grid.tokens.size(); ++i) {
            diff += c.grid.tokens[i] != grid.tokens[i];
        }
        worst = std::max(worst, std::abs(static_cast<double>(diff) / static_cast<double>(grid.tokens.size()) - c.rate));
    }
    o.pass = o.pass && worst <= 0.02;
    o.detail += ", corruption |frac - rate| " + fmt("%.4f", worst) + " over " + std::to_string(grid.tokens.size()) +
                " tokens";
    return o;
}

// 6. Masked-base preset learns the toy world.
Outcome masked_learning() {
    const auto cfg = cli::preset("masked-base");
    const auto spec = cfg.model();
    const auto tc = cfg.train();
    num::ParamStore<float> store;
    train::declare_model(store, spec);
    train::init_weights(store, train::default_policy(spec.paradigm), cfg.seed());
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = train::train_loop(store, tc, spec, cfg.world());
    auto eo = cfg.eval();
    eo.steps = 2;
    const auto rep = eval::evaluate(store, spec, cfg.world(), eo);
    const double secs = seconds_since(t0);
    const double acc = rep.token_accuracy.value_or(0);
    double tail = 0;
    const std::size_t n = std::min<std::size_t>(100, res.losses.size());
    for (std::size_t i = res.losses.size() - n; i < res.losses.size(); ++i) {
        tail += res.losses[i] / static_cast<double>(n);
    }
    return {acc >= 0.95 && tc.steps <= 2000 && secs <= 1800,
            std::to_string(tc.steps) + " steps, held-out accuracy " + fmt("%.4f", acc) + " (K=2, need >= 0.95), " +
                "final CE " + fmt("%.3f", tail) + ", " + fmt("%.0f s", secs) + " (limit 1800)"};
}

// 7. Flow-base preset learns the toy world.
Outcome flow_learning() {
    const auto cfg = cli::preset("flow-base");
    const auto spec = cfg.model();
    const auto tc = cfg.train();
    const auto w = cfg.world();
    num::ParamStore<float> store;
    train::declare_model(store, spec);
    train::init_weights(store, train::default_policy(spec.paradigm), cfg.seed());
    const auto t0 = std::chrono::steady_clock::now();
    train::train_loop(store, tc, spec, w);

    // Validation velocity MSE with conditioning kept, against predicting zero.
    auto fc = spec.flow;
    fc.cond_drop = 0;
    const auto eps = eval::heldout_episodes(w, derive_seed(cfg.seed(), "validation"), 128);
    const auto tables = blocks::make_flow_tables<float>(fc.blocks.head_dim(), fc.layout());
    double mse = 0, zero = 0;
    for (int i = 0; i < 8; ++i) {
        const std::vector<world::Episode> part(eps.begin() + 16 * i, eps.begin() + 16 * (i + 1));
        const auto b = flow::make_batch(part, fc, derive_seed(cfg.seed(), "validation", static_cast<std::uint64_t>(i)));
        num::Graph<float> g(&store, false);
        mse += flow::loss(g, fc, b.input, b.target, tables).value()[0] / 8;
        double z = 0;
        for (const float v : b.target.values()) {
            z += static_cast<double>(v) * v;
        }
        zero += z / static_cast<double>(b.target.numel()) / 8;
    }
    auto eo = cfg.eval();
    const auto rep = eval::evaluate(store, spec, w, eo);
    const double secs = seconds_since(t0);
    const double ratio = mse / zero;
    const double acc = rep.token_accuracy.value_or(0);
    return {ratio <= 0.25 && acc >= 0.80 && tc.steps <= 5000 && secs <= 3600,
            std::to_string(tc.steps) + " steps, velocity MSE " + fmt("%.4f", mse) + " = " + fmt("%.1f%%", 100 * ratio) +
                " of predict-zero (need <= 25%), Euler-" + std::to_string(spec.flow.sample_steps) + " accuracy " +
                fmt("%.4f", acc) + " (need >= 0.80), " + fmt("%.0f s", secs) + " (limit 3600)"};
}

// 8. Full sharing is the smallest and fastest variant of each family.
Outcome efficiency() {
    Outcome o{true, ""};
    for (const std::string fam : {"masked", "flow"}) {
        std::map<std::string, eval::BenchResult> r;
        for (const std::string v : {"base", "split", "modshare", "fullshare"}) {
            const auto cfg = cli::preset(fam + "-" + v);
            const auto spec = cfg.model();
            num::ParamStore<float> store;
            train::declare_model(store, spec);
            train::init_weights(store, train::default_policy(spec.paradigm), cfg.seed());
            auto bo = cfg.bench();
            bo.repetitions = std::max(bo.repetitions, 7);
            r[v] = eval::bench(store, spec, cfg.world(), bo);
        }
        const auto& full = r.at("fullshare");
        bool smallest = true, fastest = true;
        for (const auto& [v, b] : r) {
            if (v != "fullshare") {
                smallest = smallest && full.param_bytes < b.param_bytes;
                fastest = fastest && full.samples_per_second > b.samples_per_second;
            }
        }
        o.pass = o.pass && smallest && fastest;
        o.detail += fam + ":";
        for (const std::string v : {"base", "split", "modshare", "fullshare"}) {
            o.detail += " " + v + " " + std::to_string(r.at(v).param_bytes / 1024) + "KiB " +
                        fmt("%.1f/s", r.at(v).samples_per_second);
        }
        o.detail += std::string(smallest ? "" : " NOT SMALLEST") + (fastest ? "" : " NOT FASTEST") + "; ";
    }
    return o;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::ifstream in(e.path(), std::ios::binary);
        out[e.path().filename().string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return out;
}

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "hwm");
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

// 9. Repeated training commands write identical bytes.
Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "hwm_acceptance_determinism";
    fs::remove_all(root);
    Outcome o{true, ""};
    for (const std::string p : {"masked-fullshare", "flow-split"}) {
        std::map<std::string, std::string> first;
        for (int run = 0; run < 2; ++run) {
            const auto dir = root / p;
            fs::remove_all(dir);
            const int rc = run_cli({"train", "--preset", p, "--seed", "17", "--out", dir.string(), "--set",
                                    "train.steps=12", "--set", "train.batch_size=4", "--set", "train.warmup_steps=2", "--set",
                                    "train.checkpoint_every=5"});
            auto bytes = rc == 0 ? dir_bytes(dir) : std::map<std::string, std::string>{};
            if (run == 0) {
                first = std::move(bytes);
                continue;
            }
            const bool same = rc == 0 && !first.empty() && bytes == first && first.count("metrics.tsv") &&
                              first.count("checkpoint.hwmc");
            o.pass = o.pass && same;
            o.detail += p + (same ? " identical" : " DIFFERS") + " (" + std::to_string(first.size()) + " files) ";
        }
    }
    fs::remove_all(root);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"parameter-count reconciliation", param_counts},
        {"sharing reduction bracket", reduction},
        {"gradient correctness", gradients},
        {"flow-matching invariants", flow_invariants},
        {"masked pipeline invariants", masked_invariants},
        {"toy learning, masked", masked_learning},
        {"toy learning, flow", flow_learning},
        {"efficiency ordering", efficiency},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(std::atoi(argv[i]));
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("[%s] %d. %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
