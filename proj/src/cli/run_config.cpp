#include <fstream>
#include <sstream>

#include "hwm/cli/run_config.hpp"

namespace hwm::cli {

using nlohmann::json;

namespace {

json base_doc(train::Paradigm p, blocks::Variant v) {
    const bool m = p == train::Paradigm::Masked;
    json d;
    d["paradigm"] = train::paradigm_name(p);
    d["variant"] = blocks::variant_name(v);
    d["seed"] = 0;
    d["out"] = "runs/" + train::paradigm_name(p) + "-" + blocks::variant_name(v);
    d["world"] = {{"G", 8},        {"s", 64},       {"z", 4},       {"p", 2},
                  {"f", 1},        {"raw_per_latent", 8},           {"channels", 16},
                  {"jitter", 0.01}, {"codebook_seed", 1234}};
    d["model"] = {{"layers", 4},
                  {"h", 128},
                  {"heads", m ? 4 : 8},
                  {"mlp_hidden", 512},
                  {"share_boundary", 2},
                  {"time_dim", m ? 0 : 128},
                  {"rope_base", 100.0},
                  {"rho_max", 0.2},
                  {"decode_steps", 2},
                  {"temperature", 1.0},
                  {"confidence_remask", false},
                  {"p_lw", 2},
                  {"p_t", 1},
                  {"freq_dim", 256},
                  {"sigma_min", 1e-4},
                  {"cond_drop", 0.1},
                  {"cfg_scale", 3.0},
                  {"sample_steps", 50}};
    d["train"] = {{"steps", m ? 2000 : 5000},
                  {"batch_size", m ? 8 : 16},
                  {"lr", m ? 1e-3 : 1e-3},
                  {"schedule", m ? "linear" : "cosine"},
                  {"warmup_steps", m ? 100 : 0},
                  {"weight_decay", 0.01},
                  {"beta1", 0.9},
                  {"beta2", 0.999},
                  {"eps", 1e-8},
                  {"clip_norm", 1.0},
                  {"checkpoint_every", 0},
                  {"record_wall_time", false}};
    d["eval"] = {{"episodes", 64},   {"steps", 0},           {"cfg_scale", -1.0},
                 {"bench_batch", 4}, {"bench_repetitions", 5}, {"bench_warmup", 1}};
    // Published optimization settings, recorded for reference.
    d["paper"] = {{"batch_size", m ? 16 : 128},
                  {"lr", m ? 3e-5 : 1e-4},
                  {"schedule", m ? "linear" : "cosine"},
                  {"warmup_steps", m ? 100 : 0}};
    return d;
}

bool compatible(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        return !(a.is_number_integer() && b.is_number_float());
    }
    return a.type() == b.type();
}

void merge_into(json& dst, const json& patch, const std::string& path) {
    if (!patch.is_object()) {
        throw ConfigError("config patch at '" + path + "' must be an object");
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!dst.contains(it.key())) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        json& slot = dst[it.key()];
        if (slot.is_object()) {
            merge_into(slot, it.value(), key);
        } else if (!compatible(slot, it.value())) {
            throw ConfigError("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                              it.value().dump());
        } else if (slot.is_number_float()) {
            slot = it.value().get<double>();
        } else {
            slot = it.value();
        }
    }
}

template <class T>
T get(const json& d, const char* section, const char* key) {
    try {
        return d.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + section + "." + key + "': " + e.what());
    }
}

blocks::Variant variant_of(const json& d) {
    try {
        return blocks::parse_variant(d.at("variant").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key 'variant': ") + e.what());
    }
}

}  // namespace

train::Paradigm RunConfig::paradigm() const {
    try {
        return train::parse_paradigm(doc.at("paradigm").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key 'paradigm': ") + e.what());
    }
}

std::uint64_t RunConfig::seed() const { return doc.at("seed").get<std::uint64_t>(); }

std::string RunConfig::out() const { return doc.at("out").get<std::string>(); }

world::WorldConfig RunConfig::world() const {
    world::WorldConfig w;
    w.G = get<int>(doc, "world", "G");
    w.s = get<int>(doc, "world", "s");
    w.z = get<int>(doc, "world", "z");
    w.p = get<int>(doc, "world", "p");
    w.f = get<int>(doc, "world", "f");
    w.raw_per_latent = get<int>(doc, "world", "raw_per_latent");
    w.channels = get<int>(doc, "world", "channels");
    w.jitter = get<double>(doc, "world", "jitter");
    w.codebook_seed = get<std::uint64_t>(doc, "world", "codebook_seed");
    return w;
}

train::ModelSpec RunConfig::model() const {
    const auto w = world();
    train::ModelSpec spec;
    spec.paradigm = paradigm();
    blocks::BlockConfig b;
    b.variant = variant_of(doc);
    b.layers = get<int>(doc, "model", "layers");
    b.h = get<int>(doc, "model", "h");
    b.heads = get<int>(doc, "model", "heads");
    b.mlp_hidden = get<int>(doc, "model", "mlp_hidden");
    b.share_boundary = get<int>(doc, "model", "share_boundary");
    b.time_dim = get<int>(doc, "model", "time_dim");
    b.rope_base = get<double>(doc, "model", "rope_base");
    if (spec.paradigm == train::Paradigm::Masked) {
        auto& m = spec.masked;
        b.time_modulation = false;
        m.blocks = b;
        m.vocab = w.s;
        m.action_dim = w.z;
        m.rows = m.cols = w.G;
        m.past_frames = w.p;
        m.future_frames = w.f;
        m.rho_max = get<double>(doc, "model", "rho_max");
        m.decode_steps = get<int>(doc, "model", "decode_steps");
        m.temperature = get<double>(doc, "model", "temperature");
        m.confidence_remask = get<bool>(doc, "model", "confidence_remask");
    } else {
        auto& f = spec.flow;
        b.time_modulation = true;
        f.blocks = b;
        f.channels = w.channels;
        f.action_dim = w.z;
        f.grid = w.G;
        f.past_frames = w.p;
        f.future_frames = w.f;
        f.p_lw = get<int>(doc, "model", "p_lw");
        f.p_t = get<int>(doc, "model", "p_t");
        f.freq_dim = get<int>(doc, "model", "freq_dim");
        f.sigma_min = get<double>(doc, "model", "sigma_min");
        f.cond_drop = get<double>(doc, "model", "cond_drop");
        f.cfg_scale = get<double>(doc, "model", "cfg_scale");
        f.sample_steps = get<int>(doc, "model", "sample_steps");
    }
    return spec;
}

train::TrainConfig RunConfig::train() const {
    train::TrainConfig t;
    t.steps = get<int>(doc, "train", "steps");
    t.batch_size = get<int>(doc, "train", "batch_size");
    t.lr = get<double>(doc, "train", "lr");
    t.schedule = train::parse_schedule(get<std::string>(doc, "train", "schedule"));
    t.warmup_steps = get<int>(doc, "train", "warmup_steps");
    t.weight_decay = get<double>(doc, "train", "weight_decay");
    t.beta1 = get<double>(doc, "train", "beta1");
    t.beta2 = get<double>(doc, "train", "beta2");
    t.eps = get<double>(doc, "train", "eps");
    t.clip_norm = get<double>(doc, "train", "clip_norm");
    t.seed = seed();
    t.checkpoint_every = get<int>(doc, "train", "checkpoint_every");
    t.record_wall_time = get<bool>(doc, "train", "record_wall_time");
    return t;
}

eval::EvalOptions RunConfig::eval() const {
    eval::EvalOptions e;
    e.episodes = get<int>(doc, "eval", "episodes");
    e.steps = get<int>(doc, "eval", "steps");
    e.cfg_scale = get<double>(doc, "eval", "cfg_scale");
    e.seed = seed();
    return e;
}

eval::BenchOptions RunConfig::bench() const {
    eval::BenchOptions b;
    b.batch = get<int>(doc, "eval", "bench_batch");
    b.repetitions = get<int>(doc, "eval", "bench_repetitions");
    b.warmup = get<int>(doc, "eval", "bench_warmup");
    b.steps = get<int>(doc, "eval", "steps");
    b.seed = seed();
    return b;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const char* p : {"masked", "flow"}) {
        for (const char* v : {"base", "split", "modshare", "fullshare"}) {
            out.push_back(std::string(p) + "-" + v);
        }
    }
    return out;
}

RunConfig preset(const std::string& name) {
    const auto dash = name.find('-');
    if (dash == std::string::npos) {
        throw ConfigError("unknown preset '" + name + "'");
    }
    const std::string p = name.substr(0, dash), v = name.substr(dash + 1);
    for (const auto& known : preset_names()) {
        if (known == name) {
            return RunConfig{base_doc(train::parse_paradigm(p), blocks::parse_variant(v))};
        }
    }
    throw ConfigError("unknown preset '" + name + "'");
}

void apply_paper_dims(RunConfig& cfg) {
    if (cfg.paradigm() == train::Paradigm::Masked) {
        merge(cfg, {{"world", {{"s", 64000}, {"z", 25}}},
                    {"model", {{"layers", 24}, {"h", 512}, {"heads", 8}, {"mlp_hidden", 2048}, {"share_boundary", 4},
                               {"rope_base", 10000.0}}}});
    } else {
        merge(cfg, {{"world", {{"G", 16}, {"z", 25}, {"channels", 16}}},
                    {"model",
                     {{"layers", 17},
                      {"h", 1172},
                      {"heads", 4},
                      {"mlp_hidden", 4688},
                      {"share_boundary", 4},
                      {"time_dim", 640},
                      {"rope_base", 10000.0},
                      {"p_lw", 2},
                      {"p_t", 1}}}});
    }
}

void merge(RunConfig& cfg, const json& patch) { merge_into(cfg.doc, patch, ""); }

void apply_set(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    // Build the nested patch a.b.c -> {"a": {"b": {"c": value}}}.
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) {
        if (part.empty()) {
            throw ConfigError("malformed config key '" + key + "'");
        }
        parts.push_back(part);
    }
    json patch = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        patch = json{{*it, patch}};
    }
    merge(cfg, patch);
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read config " + path);
    }
    const json patch = json::parse(is, nullptr, false);
    if (patch.is_discarded()) {
        throw ConfigError(path + " is not valid JSON");
    }
    RunConfig cfg = base;
    // A config may switch family or variant; start from that preset first.
    if (patch.contains("paradigm") || patch.contains("variant")) {
        const std::string p = patch.value("paradigm", base.doc.at("paradigm").get<std::string>());
        const std::string v = patch.value("variant", base.doc.at("variant").get<std::string>());
        cfg = preset(p + "-" + blocks::variant_name(blocks::parse_variant(v)));
    }
    merge(cfg, patch);
    return cfg;
}

void validate(const RunConfig& cfg) {
    try {
        const auto w = cfg.world();
        world::validate(w);
        const auto spec = cfg.model();
        if (spec.paradigm == train::Paradigm::Masked) {
            masked::validate(spec.masked);
        } else {
            flow::validate(spec.flow);
        }
        train::validate(cfg.train());
        (void)cfg.out();
        (void)cfg.seed();
        if (cfg.eval().episodes < 2 || cfg.bench().batch < 1 || cfg.bench().repetitions < 1) {
            throw ConfigError("eval.episodes must be >= 2 and bench sizes positive");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace hwm::cli
