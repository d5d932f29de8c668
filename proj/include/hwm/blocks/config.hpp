#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/numcore/params.hpp"

namespace hwm::blocks {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Variant { Base, Split, ModalityShare, FullShare };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

// Token streams in canonical order.
enum Stream : int { VP = 0, VF = 1, AP = 2, AF = 3 };
inline constexpr std::array<const char*, 4> kStreamNames = {"v_p", "v_f", "a_p", "a_f"};

struct BlockConfig {
    Variant variant = Variant::Base;
    int layers = 4;
    int h = 128;
    int heads = 8;
    int mlp_hidden = 512;
    int share_boundary = 4;
    bool time_modulation = false;
    int time_dim = 128;  // width of the timestep embedding feeding modulation maps
    double rope_base = 10000.0;

    int head_dim() const { return h / heads; }
};

void validate(const BlockConfig& cfg);

// Alias map from stream-level parameter prefixes ("blocks.5.v_f") to their
// canonical owner ("blocks.5.v_p"). Empty for Base and Split.
std::map<std::string, std::string> make_sharing_plan(const BlockConfig& cfg);

// Stream whose parameters the given stream uses in `layer`.
int canonical_stream(const BlockConfig& cfg, int layer, int stream);

// Streams from `streams` grouped by shared parameter set, each group in
// canonical order and groups ordered by their first stream.
std::vector<std::vector<int>> stream_groups(const BlockConfig& cfg, int layer, const std::vector<int>& streams);

std::string stream_prefix(int layer, int stream);

struct ParamDecl {
    std::string suffix;
    num::Shape shape;
    bool decay = true;
};

// Declares `decls` under the stream prefix of (layer, stream), or aliases
// them to the canonical stream's parameters when the plan shares them.
template <class T>
void declare_stream(num::ParamStore<T>& store, const BlockConfig& cfg, int layer, int stream,
                    const std::vector<ParamDecl>& decls);

// Linear layer declarations: <name>.w [in, out] and <name>.b [out].
void add_linear(std::vector<ParamDecl>& out, const std::string& name, std::int64_t in, std::int64_t outd,
                bool decay = true);
void add_norm(std::vector<ParamDecl>& out, const std::string& name, std::int64_t h);

}  // namespace hwm::blocks
