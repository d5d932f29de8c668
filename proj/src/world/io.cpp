#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "hwm/numcore/binio.hpp"
#include "hwm/numcore/rng.hpp"
#include "hwm/world/world.hpp"

namespace hwm::world {

using binio::get_f32;
using binio::get_le;
using binio::put_f32;
using binio::put_le;

void write_episodes(const std::string& path, const std::vector<Episode>& episodes, const WorldConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    const bool latents = cfg.channels > 0 && !episodes.empty() && !episodes[0].past_latents.values.empty();
    binio::put_magic(os, "HWM1");
    for (const int v : {cfg.G, cfg.s, cfg.z, cfg.p, cfg.f, latents ? cfg.channels : 0}) {
        put_le<std::int32_t>(os, v);
    }
    put_le<std::int32_t>(os, static_cast<std::int32_t>(episodes.size()));
    for (const auto& ep : episodes) {
        put_le<std::uint64_t>(os, ep.seed);
        for (const auto* grid : {&ep.past_tokens, &ep.future_tokens}) {
            if (grid->G != cfg.G) {
                throw binio::FormatError("episode grid does not match the file header");
            }
            for (const auto t : grid->tokens) {
                put_le<std::int32_t>(os, t);
            }
        }
        for (const auto* acts : {&ep.past_actions, &ep.future_actions}) {
            for (const float v : acts->values) {
                put_f32(os, v);
            }
        }
        if (latents) {
            for (const auto* clip : {&ep.past_latents, &ep.future_latents}) {
                for (const float v : clip->values) {
                    put_f32(os, v);
                }
            }
        }
    }
    if (!os) {
        throw std::runtime_error("write failed: " + path);
    }
}

std::vector<Episode> read_episodes(const std::string& path, WorldConfig* cfg_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path);
    }
    binio::expect_magic(is, "HWM1", path);
    WorldConfig cfg;
    cfg.G = get_le<std::int32_t>(is);
    cfg.s = get_le<std::int32_t>(is);
    cfg.z = get_le<std::int32_t>(is);
    cfg.p = get_le<std::int32_t>(is);
    cfg.f = get_le<std::int32_t>(is);
    cfg.channels = get_le<std::int32_t>(is);
    const auto count = get_le<std::int32_t>(is);
    if (cfg.G <= 0 || cfg.z <= 0 || cfg.p <= 0 || cfg.f <= 0 || cfg.channels < 0 || count < 0) {
        throw binio::FormatError(path + ": invalid header");
    }
    std::vector<Episode> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int e = 0; e < count; ++e) {
        Episode ep;
        ep.seed = get_le<std::uint64_t>(is);
        ep.past_tokens = TokenGrid(cfg.p, cfg.G);
        ep.future_tokens = TokenGrid(cfg.f, cfg.G);
        for (auto* grid : {&ep.past_tokens, &ep.future_tokens}) {
            for (auto& t : grid->tokens) {
                t = get_le<std::int32_t>(is);
            }
        }
        ep.past_actions = ActionSequence(cfg.p, cfg.z);
        ep.future_actions = ActionSequence(cfg.f, cfg.z);
        for (auto* acts : {&ep.past_actions, &ep.future_actions}) {
            for (auto& v : acts->values) {
                v = get_f32(is);
            }
        }
        if (cfg.channels > 0) {
            ep.past_latents = LatentClip(cfg.p, cfg.channels, cfg.G);
            ep.future_latents = LatentClip(cfg.f, cfg.channels, cfg.G);
            for (auto* clip : {&ep.past_latents, &ep.future_latents}) {
                for (auto& v : clip->values) {
                    v = get_f32(is);
                }
            }
        }
        out.push_back(std::move(ep));
    }
    if (cfg_out) {
        *cfg_out = cfg;
    }
    return out;
}

namespace {

void token_color(std::int32_t tok, int s, unsigned char rgb[3]) {
    if (tok >= s || tok < 0) {
        rgb[0] = rgb[1] = rgb[2] = 0;
        return;
    }
    const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(tok) + 17);
    if (tok >= s / 2) {
        // Sprite levels: saturated warm colors.
        rgb[0] = 255;
        rgb[1] = static_cast<unsigned char>(60 + 50 * (tok - s / 2));
        rgb[2] = 40;
        return;
    }
    for (int c = 0; c < 3; ++c) {
        rgb[c] = static_cast<unsigned char>(70 + ((h >> (8 * c)) & 0x7F));
    }
}

struct PngFile {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngFile() {
        if (png) {
            png_destroy_write_struct(&png, info ? &info : nullptr);
        }
        if (fp) {
            std::fclose(fp);
        }
    }
};

}  // namespace

void write_token_png(const std::string& path, const std::vector<TokenGrid>& rows, int s, int cell_px) {
    if (rows.empty()) {
        throw std::invalid_argument("write_token_png: nothing to draw");
    }
    const int gap = 2;
    int max_frames = 0;
    for (const auto& r : rows) {
        max_frames = std::max(max_frames, r.frames);
    }
    const int G = rows[0].G;
    const int tile = G * cell_px;
    const int width = max_frames * tile + (max_frames + 1) * gap;
    const int height = static_cast<int>(rows.size()) * tile + (static_cast<int>(rows.size()) + 1) * gap;
    std::vector<unsigned char> img(static_cast<std::size_t>(width * height * 3), 255);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& grid = rows[r];
        for (int t = 0; t < grid.frames; ++t) {
            const int ox = gap + t * (tile + gap);
            const int oy = gap + static_cast<int>(r) * (tile + gap);
            for (int y = 0; y < grid.G; ++y) {
                for (int x = 0; x < grid.G; ++x) {
                    unsigned char rgb[3];
                    token_color(grid.at(t, y, x), s, rgb);
                    for (int py = 0; py < cell_px; ++py) {
                        for (int px = 0; px < cell_px; ++px) {
                            const auto idx = static_cast<std::size_t>(((oy + y * cell_px + py) * width +
                                                                       (ox + x * cell_px + px)) * 3);
                            std::copy_n(rgb, 3, img.begin() + static_cast<std::ptrdiff_t>(idx));
                        }
                    }
                }
            }
        }
    }
    PngFile f;
    f.fp = std::fopen(path.c_str(), "wb");
    if (!f.fp) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    f.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    f.info = f.png ? png_create_info_struct(f.png) : nullptr;
    if (!f.info) {
        throw std::runtime_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(f.png))) {
        throw std::runtime_error("libpng failed writing " + path);
    }
    png_init_io(f.png, f.fp);
    png_set_IHDR(f.png, f.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(f.png, f.info);
    for (int y = 0; y < height; ++y) {
        png_write_row(f.png, img.data() + static_cast<std::size_t>(y * width * 3));
    }
    png_write_end(f.png, nullptr);
}

}  // namespace hwm::world
