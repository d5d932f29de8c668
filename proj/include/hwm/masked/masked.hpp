#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hwm/blocks/blocks.hpp"
#include "hwm/world/world.hpp"

namespace hwm::masked {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Cosine masking schedule: fraction of tokens masked at draw r.
double gamma_cosine(double r);

struct MaskedConfig {
    blocks::BlockConfig blocks;
    int vocab = 64;  // s; the MASK id is `vocab`
    int action_dim = 4;
    int rows = 8;
    int cols = 8;
    int past_frames = 2;
    int future_frames = 1;
    double rho_max = 0.2;
    int decode_steps = 2;
    double temperature = 1.0;
    bool confidence_remask = false;

    int mask_id() const { return vocab; }
    std::int64_t sites() const { return static_cast<std::int64_t>(rows) * cols; }
    blocks::MaskedGeometry geometry(std::int64_t batch) const;
};

void validate(const MaskedConfig& cfg);

// Random replacement at a rate drawn from U(0, rho_max). Replacements are
// uniform over [0, vocab) minus the token's own value.
struct Corruption {
    world::TokenGrid grid;
    double rate = 0;
    std::int64_t replaced = 0;
};
Corruption corrupt_tokens(const world::TokenGrid& grid, int vocab, double rho_max, std::uint64_t seed);

struct MaskState {
    world::TokenGrid work_tokens;
    std::vector<std::uint8_t> mask;  // aligned with work_tokens.tokens
    std::vector<double> r;           // per-frame schedule draw
    double corruption_rate = 0;
};
// Per frame: r ~ U(0,1) (or forced_r), each token masked iff U(0,1) < gamma(r).
MaskState mask_future(const world::TokenGrid& future, int mask_id, std::uint64_t seed,
                      std::optional<double> forced_r = std::nullopt);

// One forward batch. Tokens are [B, frames * sites] over past then future
// frames; ids in [0, vocab] where vocab is MASK.
template <class T>
struct MaskedInput {
    std::int64_t batch = 0;
    std::vector<std::int64_t> tokens;
    num::Tensor<T> past_actions;    // [B, past_frames, z]
    num::Tensor<T> future_actions;  // [B, future_frames, z]
};

template <class T>
void declare_model(num::ParamStore<T>& store, const MaskedConfig& cfg);

// Logits [B, future_frames * sites, vocab].
template <class T>
num::Var<T> forward(num::Graph<T>& g, const MaskedConfig& cfg, const MaskedInput<T>& in,
                    const blocks::MaskedTables<T>& tables, blocks::AttentionProbe<T>* probe = nullptr);

// Training example: corrupted past, corrupted-then-masked future, original
// future tokens as targets.
struct TrainingBatch {
    MaskedInput<float> input;
    std::vector<std::int64_t> targets;  // [B * future_frames * sites]
    std::vector<std::uint8_t> mask;
};
TrainingBatch make_batch(const std::vector<world::Episode>& episodes, const MaskedConfig& cfg, std::uint64_t seed);

template <class T>
num::Var<T> loss(num::Graph<T>& g, const MaskedConfig& cfg, const MaskedInput<T>& in,
                 const std::vector<std::int64_t>& targets, const std::vector<std::uint8_t>& mask,
                 const blocks::MaskedTables<T>& tables, bool* empty = nullptr);

// Logit source for decoding: returns [B, future_frames * sites, vocab].
using LogitFn = std::function<num::Tensor<float>(const MaskedInput<float>&)>;
LogitFn model_logits(num::ParamStore<float>& store, const MaskedConfig& cfg);

struct DecodeStats {
    int passes = 0;
};

// Frame-by-frame K-step parallel decoding of the future frames of every
// episode. Returns one future TokenGrid per episode.
std::vector<world::TokenGrid> decode_iterative(const LogitFn& logits, const MaskedConfig& cfg,
                                               const std::vector<world::Episode>& episodes, int steps,
                                               std::uint64_t seed, DecodeStats* stats = nullptr);

}  // namespace hwm::masked
