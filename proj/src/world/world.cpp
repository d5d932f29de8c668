#include "hwm/world/world.hpp"

#include <algorithm>
#include <cmath>

#include "hwm/numcore/rng.hpp"

namespace hwm::world {

void validate(const WorldConfig& cfg) {
    if (cfg.G < 4) {
        throw ConfigError("world.G must be >= 4, got " + std::to_string(cfg.G));
    }
    if (cfg.s < 8) {
        throw ConfigError("world.s must be >= 8, got " + std::to_string(cfg.s));
    }
    if (cfg.z < 2) {
        throw ConfigError("world.z must be >= 2 (two components drive motion), got " + std::to_string(cfg.z));
    }
    if (cfg.p < 1 || cfg.f < 1) {
        throw ConfigError("world.p and world.f must be >= 1");
    }
    if (cfg.raw_per_latent < 1) {
        throw ConfigError("world.raw_per_latent must be >= 1");
    }
    if (cfg.channels < 0 || cfg.jitter < 0) {
        throw ConfigError("world.channels and world.jitter must be non-negative");
    }
}

TokenGrid::TokenGrid(int frames, int G, std::int32_t fill)
    : frames(frames), G(G), tokens(static_cast<std::size_t>(frames) * static_cast<std::size_t>(G * G), fill) {}

TokenGrid TokenGrid::frame_range(int start, int count) const {
    TokenGrid out(count, G);
    const auto per = static_cast<std::ptrdiff_t>(G * G);
    std::copy_n(tokens.begin() + start * per, count * per, out.tokens.begin());
    return out;
}

ActionSequence ActionSequence::frame_range(int start, int count) const {
    ActionSequence out(count, z);
    std::copy_n(values.begin() + start * z, count * z, out.values.begin());
    return out;
}

LatentClip LatentClip::frame_range(int start, int count) const {
    LatentClip out(count, C, G);
    const auto per = static_cast<std::ptrdiff_t>(C * G * G);
    std::copy_n(values.begin() + start * per, count * per, out.values.begin());
    return out;
}

TokenGrid Episode::all_tokens() const {
    TokenGrid out(past_tokens.frames + future_tokens.frames, past_tokens.G);
    std::copy(past_tokens.tokens.begin(), past_tokens.tokens.end(), out.tokens.begin());
    std::copy(future_tokens.tokens.begin(), future_tokens.tokens.end(),
              out.tokens.begin() + static_cast<std::ptrdiff_t>(past_tokens.tokens.size()));
    return out;
}

ActionSequence Episode::all_actions() const {
    ActionSequence out(past_actions.frames + future_actions.frames, past_actions.z);
    std::copy(past_actions.values.begin(), past_actions.values.end(), out.values.begin());
    std::copy(future_actions.values.begin(), future_actions.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(past_actions.values.size()));
    return out;
}

int sprite_level(const float* action, int z) {
    double sq = 0;
    for (int i = 0; i < z; ++i) {
        sq += static_cast<double>(action[i]) * action[i];
    }
    const double frac = std::sqrt(sq) / std::sqrt(static_cast<double>(z));
    return std::min(3, static_cast<int>(std::floor(frac * 4.0)));
}

int move_of(float component) {
    if (component >= 0.5f) {
        return 1;
    }
    if (component <= -0.5f) {
        return -1;
    }
    return 0;
}

std::int32_t background_token(int x, int y, std::uint64_t seed, const WorldConfig& cfg) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(y * cfg.G + x) + 0x51ED27ULL));
    return static_cast<std::int32_t>(h % static_cast<std::uint64_t>(cfg.s / 2));
}

ActionSequence align_actions(const std::vector<float>& raw, int raw_frames, const WorldConfig& cfg) {
    if (raw_frames % cfg.raw_per_latent != 0 || raw.size() != static_cast<std::size_t>(raw_frames * cfg.z)) {
        throw ConfigError("raw action count is not a whole number of latent frames");
    }
    const int frames = raw_frames / cfg.raw_per_latent;
    ActionSequence out(frames, cfg.z);
    for (int t = 0; t < frames; ++t) {
        for (int i = 0; i < cfg.z; ++i) {
            double acc = 0;
            for (int r = 0; r < cfg.raw_per_latent; ++r) {
                acc += raw[static_cast<std::size_t>((t * cfg.raw_per_latent + r) * cfg.z + i)];
            }
            out.at(t, i) = static_cast<float>(acc / cfg.raw_per_latent);
        }
    }
    return out;
}

namespace {

void paint_frame(TokenGrid& grid, int t, int sx, int sy, std::int32_t sprite, std::uint64_t seed,
                 const WorldConfig& cfg) {
    for (int y = 0; y < cfg.G; ++y) {
        for (int x = 0; x < cfg.G; ++x) {
            grid.at(t, y, x) = background_token(x, y, seed, cfg);
        }
    }
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            grid.at(t, (sy + dy) % cfg.G, (sx + dx) % cfg.G) = sprite;
        }
    }
}

int wrap(int v, int G) {
    return ((v % G) + G) % G;
}

}  // namespace

TokenGrid render_tokens(std::uint64_t seed, const ActionSequence& actions, const WorldConfig& cfg) {
    validate(cfg);
    if (actions.z != cfg.z) {
        throw ConfigError("render_tokens: action dimension does not match world.z");
    }
    Rng rng(derive_seed(seed, "sprite"));
    int sx = static_cast<int>(rng.below(cfg.G));
    int sy = static_cast<int>(rng.below(cfg.G));
    TokenGrid grid(actions.frames, cfg.G);
    for (int t = 0; t < actions.frames; ++t) {
        const float* a = actions.values.data() + t * cfg.z;
        if (t > 0) {
            sx = wrap(sx + move_of(a[0]), cfg.G);
            sy = wrap(sy + move_of(a[1]), cfg.G);
        }
        paint_frame(grid, t, sx, sy, cfg.s / 2 + sprite_level(a, cfg.z), seed, cfg);
    }
    return grid;
}

Episode gen_episode(std::uint64_t seed, const WorldConfig& cfg) {
    validate(cfg);
    Rng rng(derive_seed(seed, "episode"));
    const int T = cfg.frames();
    const int raw_frames = T * cfg.raw_per_latent;
    std::vector<float> raw(static_cast<std::size_t>(raw_frames * cfg.z));
    for (int t = 0; t < T; ++t) {
        std::vector<double> intent(static_cast<std::size_t>(cfg.z));
        for (auto& v : intent) {
            v = rng.uniform(-1.0, 1.0);
        }
        for (int r = 0; r < cfg.raw_per_latent; ++r) {
            for (int i = 0; i < cfg.z; ++i) {
                const double v = intent[static_cast<std::size_t>(i)] + 0.1 * rng.normal();
                raw[static_cast<std::size_t>((t * cfg.raw_per_latent + r) * cfg.z + i)] =
                    static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
        }
    }
    const ActionSequence actions = align_actions(raw, raw_frames, cfg);
    const TokenGrid grid = render_tokens(seed, actions, cfg);

    Episode ep;
    ep.seed = seed;
    ep.past_tokens = grid.frame_range(0, cfg.p);
    ep.future_tokens = grid.frame_range(cfg.p, cfg.f);
    ep.past_actions = actions.frame_range(0, cfg.p);
    ep.future_actions = actions.frame_range(cfg.p, cfg.f);
    if (cfg.channels > 0) {
        const auto codebook = make_codebook(cfg);
        const LatentClip all = embed_tokens(grid, codebook, cfg.channels, cfg.jitter, derive_seed(seed, "jitter"));
        ep.past_latents = all.frame_range(0, cfg.p);
        ep.future_latents = all.frame_range(cfg.p, cfg.f);
    }
    return ep;
}

TokenGrid oracle_future(const TokenGrid& past, const ActionSequence& future_actions, std::uint64_t seed,
                        const WorldConfig& cfg) {
    if (past.frames < 1 || past.G != cfg.G || future_actions.z != cfg.z) {
        throw ConfigError("oracle_future: past grid or actions do not match the world config");
    }
    const int last = past.frames - 1;
    const int half = cfg.s / 2;
    int sx = -1, sy = -1;
    for (int y = 0; y < cfg.G && sx < 0; ++y) {
        for (int x = 0; x < cfg.G; ++x) {
            if (past.at(last, y, x) >= half && past.at(last, y, (x + 1) % cfg.G) >= half &&
                past.at(last, (y + 1) % cfg.G, x) >= half && past.at(last, (y + 1) % cfg.G, (x + 1) % cfg.G) >= half) {
                sx = x;
                sy = y;
                break;
            }
        }
    }
    if (sx < 0) {
        throw ConfigError("oracle_future: no sprite in the last past frame");
    }
    TokenGrid out(future_actions.frames, cfg.G);
    for (int t = 0; t < future_actions.frames; ++t) {
        const float* a = future_actions.values.data() + t * cfg.z;
        sx = wrap(sx + move_of(a[0]), cfg.G);
        sy = wrap(sy + move_of(a[1]), cfg.G);
        paint_frame(out, t, sx, sy, half + sprite_level(a, cfg.z), seed, cfg);
    }
    return out;
}

std::vector<float> make_codebook(const WorldConfig& cfg) {
    const int s = cfg.s, C = cfg.channels;
    if (C < 1) {
        throw ConfigError("codebook needs world.channels >= 1");
    }
    Rng rng(derive_seed(cfg.codebook_seed, "codebook"));
    const double norm = std::sqrt(static_cast<double>(C));
    std::vector<float> book(static_cast<std::size_t>(s * C));
    std::vector<double> row(static_cast<std::size_t>(C));
    for (int r = 0; r < s; ++r) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000) {
                throw ConfigError("codebook: cannot place " + std::to_string(s) + " rows at distance >= 1 in " +
                                  std::to_string(C) + " channels");
            }
            double sq = 0;
            for (auto& v : row) {
                v = rng.normal();
                sq += v * v;
            }
            const double k = norm / std::sqrt(sq);
            bool ok = true;
            for (int q = 0; q < r && ok; ++q) {
                double d2 = 0;
                for (int c = 0; c < C; ++c) {
                    const double d = row[static_cast<std::size_t>(c)] * k - book[static_cast<std::size_t>(q * C + c)];
                    d2 += d * d;
                }
                ok = d2 >= 1.0;
            }
            if (ok) {
                for (int c = 0; c < C; ++c) {
                    book[static_cast<std::size_t>(r * C + c)] = static_cast<float>(row[static_cast<std::size_t>(c)] * k);
                }
                break;
            }
        }
    }
    return book;
}

LatentClip embed_tokens(const TokenGrid& grid, const std::vector<float>& codebook, int C, double jitter,
                        std::uint64_t seed) {
    if (C < 1 || codebook.size() % static_cast<std::size_t>(C) != 0) {
        throw ConfigError("embed_tokens: codebook size is not a multiple of the channel count");
    }
    const auto s = static_cast<std::int32_t>(codebook.size() / static_cast<std::size_t>(C));
    LatentClip out(grid.frames, C, grid.G);
    Rng rng(seed);
    for (int t = 0; t < grid.frames; ++t) {
        for (int y = 0; y < grid.G; ++y) {
            for (int x = 0; x < grid.G; ++x) {
                const std::int32_t tok = grid.at(t, y, x);
                if (tok < 0 || tok >= s) {
                    throw std::out_of_range("embed_tokens: token " + std::to_string(tok) + " outside codebook of " +
                                            std::to_string(s));
                }
                for (int c = 0; c < C; ++c) {
                    double v = codebook[static_cast<std::size_t>(tok * C + c)];
                    if (jitter > 0) {
                        v += jitter * rng.normal();
                    }
                    out.at(t, c, y, x) = static_cast<float>(v);
                }
            }
        }
    }
    return out;
}

TokenGrid nearest_tokens(const LatentClip& clip, const std::vector<float>& codebook) {
    const int C = clip.C;
    const int s = static_cast<int>(codebook.size() / static_cast<std::size_t>(C));
    TokenGrid out(clip.frames, clip.G);
    for (int t = 0; t < clip.frames; ++t) {
        for (int y = 0; y < clip.G; ++y) {
            for (int x = 0; x < clip.G; ++x) {
                int best = 0;
                double best_d = 0;
                for (int r = 0; r < s; ++r) {
                    double d = 0;
                    for (int c = 0; c < C; ++c) {
                        const double e = clip.at(t, c, y, x) - codebook[static_cast<std::size_t>(r * C + c)];
                        d += e * e;
                    }
                    if (r == 0 || d < best_d) {
                        best = r;
                        best_d = d;
                    }
                }
                out.at(t, y, x) = best;
            }
        }
    }
    return out;
}

std::uint64_t episode_seed(std::uint64_t root, const std::string& stream, std::uint64_t index) {
    return derive_seed(root, "world/" + stream, index);
}

}  // namespace hwm::world
