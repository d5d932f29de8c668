#include "hwm/blocks/config.hpp"

#include <algorithm>

namespace hwm::blocks {

Variant parse_variant(const std::string& name) {
    if (name == "base") {
        return Variant::Base;
    }
    if (name == "split") {
        return Variant::Split;
    }
    if (name == "modshare" || name == "modality") {
        return Variant::ModalityShare;
    }
    if (name == "fullshare" || name == "full") {
        return Variant::FullShare;
    }
    throw ConfigError("unknown block variant '" + name + "' (expected base, split, modshare, fullshare)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Base:
            return "base";
        case Variant::Split:
            return "split";
        case Variant::ModalityShare:
            return "modshare";
        case Variant::FullShare:
            return "fullshare";
    }
    return "?";
}

void validate(const BlockConfig& cfg) {
    if (cfg.layers < 1 || cfg.h < 1 || cfg.heads < 1 || cfg.mlp_hidden < 1) {
        throw ConfigError("block dims must be positive");
    }
    if (cfg.h % cfg.heads != 0) {
        throw ConfigError("h=" + std::to_string(cfg.h) + " is not divisible by heads=" + std::to_string(cfg.heads));
    }
    if (cfg.share_boundary < 0 || cfg.share_boundary > cfg.layers) {
        throw ConfigError("share_boundary must lie in [0, layers]");
    }
    if (cfg.time_modulation && cfg.time_dim < 1) {
        throw ConfigError("time_dim must be positive when time modulation is enabled");
    }
    if (!(cfg.rope_base > 1.0)) {
        throw ConfigError("rope_base must exceed 1");
    }
}

int canonical_stream(const BlockConfig& cfg, int layer, int stream) {
    if (layer < cfg.share_boundary) {
        return stream;
    }
    switch (cfg.variant) {
        case Variant::FullShare:
            return VP;
        case Variant::ModalityShare:
            return stream == VF ? VP : stream == AF ? AP : stream;
        default:
            return stream;
    }
}

std::string stream_prefix(int layer, int stream) {
    return "blocks." + std::to_string(layer) + "." + kStreamNames[static_cast<std::size_t>(stream)];
}

std::map<std::string, std::string> make_sharing_plan(const BlockConfig& cfg) {
    std::map<std::string, std::string> plan;
    for (int l = 0; l < cfg.layers; ++l) {
        for (int s = 0; s < 4; ++s) {
            const int c = canonical_stream(cfg, l, s);
            if (c != s) {
                plan.emplace(stream_prefix(l, s), stream_prefix(l, c));
            }
        }
    }
    return plan;
}

std::vector<std::vector<int>> stream_groups(const BlockConfig& cfg, int layer, const std::vector<int>& streams) {
    std::vector<std::vector<int>> groups;
    std::vector<int> owners;
    std::vector<int> sorted = streams;
    std::sort(sorted.begin(), sorted.end());
    for (const int s : sorted) {
        const int c = canonical_stream(cfg, layer, s);
        const auto it = std::find(owners.begin(), owners.end(), c);
        if (it == owners.end()) {
            owners.push_back(c);
            groups.push_back({s});
        } else {
            groups[static_cast<std::size_t>(it - owners.begin())].push_back(s);
        }
    }
    return groups;
}

template <class T>
void declare_stream(num::ParamStore<T>& store, const BlockConfig& cfg, int layer, int stream,
                    const std::vector<ParamDecl>& decls) {
    const int owner = canonical_stream(cfg, layer, stream);
    const std::string prefix = stream_prefix(layer, stream);
    const std::string owner_prefix = stream_prefix(layer, owner);
    for (const auto& d : decls) {
        if (owner == stream) {
            store.declare(prefix + "." + d.suffix, d.shape, d.decay);
        } else {
            store.alias(prefix + "." + d.suffix, owner_prefix + "." + d.suffix);
        }
    }
}

template void declare_stream(num::ParamStore<float>&, const BlockConfig&, int, int, const std::vector<ParamDecl>&);
template void declare_stream(num::ParamStore<double>&, const BlockConfig&, int, int, const std::vector<ParamDecl>&);

void add_linear(std::vector<ParamDecl>& out, const std::string& name, std::int64_t in, std::int64_t outd, bool decay) {
    out.push_back({name + ".w", {in, outd}, decay});
    out.push_back({name + ".b", {outd}, false});
}

void add_norm(std::vector<ParamDecl>& out, const std::string& name, std::int64_t h) {
    out.push_back({name + ".g", {h}, false});
    out.push_back({name + ".b", {h}, false});
}

}  // namespace hwm::blocks
