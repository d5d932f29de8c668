#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwm::world {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct WorldConfig {
    int G = 8;             // latent grid side
    int s = 64;            // vocabulary size (MASK id is s)
    int z = 4;             // action dimension
    int p = 2;             // past latent frames
    int f = 1;             // future latent frames
    int raw_per_latent = 8;  // raw actions averaged into one latent-frame action
    int channels = 16;     // continuous latent channels C
    double jitter = 0.01;  // Gaussian jitter added by embed_tokens
    std::uint64_t codebook_seed = 1234;

    int frames() const { return p + f; }
    int mask_id() const { return s; }
};

void validate(const WorldConfig& cfg);

// Integer token ids on a frames x G x G grid.
struct TokenGrid {
    int frames = 0;
    int G = 0;
    std::vector<std::int32_t> tokens;

    TokenGrid() = default;
    TokenGrid(int frames, int G, std::int32_t fill = 0);
    std::int32_t& at(int t, int y, int x) { return tokens[index(t, y, x)]; }
    std::int32_t at(int t, int y, int x) const { return tokens[index(t, y, x)]; }
    std::size_t index(int t, int y, int x) const {
        return (static_cast<std::size_t>(t) * static_cast<std::size_t>(G) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(G) +
               static_cast<std::size_t>(x);
    }
    int cells() const { return G * G; }
    TokenGrid frame_range(int start, int count) const;
    bool operator==(const TokenGrid&) const = default;
};

// Per-latent-frame action vectors, frames x z, components in [-1, 1].
struct ActionSequence {
    int frames = 0;
    int z = 0;
    std::vector<float> values;

    ActionSequence() = default;
    ActionSequence(int frames, int z) : frames(frames), z(z), values(static_cast<std::size_t>(frames * z), 0.f) {}
    float& at(int t, int i) { return values[static_cast<std::size_t>(t * z + i)]; }
    float at(int t, int i) const { return values[static_cast<std::size_t>(t * z + i)]; }
    ActionSequence frame_range(int start, int count) const;
    bool operator==(const ActionSequence&) const = default;
};

// Continuous latents, frames x C x G x G.
struct LatentClip {
    int frames = 0;
    int C = 0;
    int G = 0;
    std::vector<float> values;

    LatentClip() = default;
    LatentClip(int frames, int C, int G)
        : frames(frames), C(C), G(G), values(static_cast<std::size_t>(frames * C * G * G), 0.f) {}
    float& at(int t, int c, int y, int x) { return values[index(t, c, y, x)]; }
    float at(int t, int c, int y, int x) const { return values[index(t, c, y, x)]; }
    std::size_t index(int t, int c, int y, int x) const {
        return ((static_cast<std::size_t>(t) * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)) *
                    static_cast<std::size_t>(G) +
                static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(G) +
               static_cast<std::size_t>(x);
    }
    LatentClip frame_range(int start, int count) const;
    bool operator==(const LatentClip&) const = default;
};

struct Episode {
    std::uint64_t seed = 0;
    TokenGrid past_tokens;
    TokenGrid future_tokens;
    ActionSequence past_actions;
    ActionSequence future_actions;
    LatentClip past_latents;    // filled when cfg.channels > 0
    LatentClip future_latents;

    TokenGrid all_tokens() const;
    ActionSequence all_actions() const;
};

// Sprite helpers exposed for tests and the oracle.
int sprite_level(const float* action, int z);
int move_of(float component);
std::int32_t background_token(int x, int y, std::uint64_t seed, const WorldConfig& cfg);

// Averages raw actions (frames*raw_per_latent x z) into latent-frame actions.
ActionSequence align_actions(const std::vector<float>& raw, int raw_frames, const WorldConfig& cfg);

// Renders all frames for the given actions: the sprite starts at a position
// fixed by the seed and moves by the first two action components from frame 1.
TokenGrid render_tokens(std::uint64_t seed, const ActionSequence& actions, const WorldConfig& cfg);

Episode gen_episode(std::uint64_t seed, const WorldConfig& cfg);

// Exact future given the past grid, the future actions and the world seed
// that fixes the background.
TokenGrid oracle_future(const TokenGrid& past, const ActionSequence& future_actions, std::uint64_t seed,
                        const WorldConfig& cfg);

// Fixed codebook [s x C] with equal-norm rows and min pairwise distance >= 1.
std::vector<float> make_codebook(const WorldConfig& cfg);
LatentClip embed_tokens(const TokenGrid& grid, const std::vector<float>& codebook, int C, double jitter,
                        std::uint64_t seed);
TokenGrid nearest_tokens(const LatentClip& clip, const std::vector<float>& codebook);

// Seeds of the i-th episode of a named stream (e.g. "train", "heldout").
std::uint64_t episode_seed(std::uint64_t root, const std::string& stream, std::uint64_t index);

// Little-endian "HWM1" episode files.
void write_episodes(const std::string& path, const std::vector<Episode>& episodes, const WorldConfig& cfg);
std::vector<Episode> read_episodes(const std::string& path, WorldConfig* cfg_out = nullptr);

// Debug colormap: one row per episode, frames left to right.
void write_token_png(const std::string& path, const std::vector<TokenGrid>& rows, int s, int cell_px = 8);

}  // namespace hwm::world
