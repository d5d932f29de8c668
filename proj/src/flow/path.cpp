#include <cmath>

#include "hwm/flow/flow.hpp"

namespace hwm::flow {

namespace {

void check_patch(std::int64_t frames, std::int64_t grid, int p_lw, int p_t) {
    if (p_lw < 1 || p_t < 1 || grid % p_lw != 0 || frames % p_t != 0) {
        throw num::DimensionError("patchify: grid " + std::to_string(grid) + " / frames " + std::to_string(frames) +
                                  " not divisible by patch " + std::to_string(p_lw) + "x" + std::to_string(p_t));
    }
}

// Calls fn(latent_offset, token_offset) for every element of one batch item.
template <class Fn>
void for_each_patch(std::int64_t frames, std::int64_t c, std::int64_t grid, int p_lw, int p_t, Fn&& fn) {
    const std::int64_t gp = grid / p_lw;
    const std::int64_t pd = std::int64_t{p_t} * p_lw * p_lw * c;
    for (std::int64_t tp = 0; tp < frames / p_t; ++tp) {
        for (std::int64_t py = 0; py < gp; ++py) {
            for (std::int64_t px = 0; px < gp; ++px) {
                const std::int64_t tok = ((tp * gp + py) * gp + px) * pd;
                std::int64_t f = 0;
                for (std::int64_t dt = 0; dt < p_t; ++dt) {
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        for (std::int64_t dy = 0; dy < p_lw; ++dy) {
                            for (std::int64_t dx = 0; dx < p_lw; ++dx, ++f) {
                                const std::int64_t lat =
                                    (((tp * p_t + dt) * c + ch) * grid + py * p_lw + dy) * grid + px * p_lw + dx;
                                fn(lat, tok + f);
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <class T>
num::Tensor<T> patchify(const num::Tensor<T>& latents, int p_lw, int p_t) {
    if (latents.rank() != 5 || latents.dim(3) != latents.dim(4)) {
        throw num::DimensionError("patchify: expected [B, T, C, G, G], got " + num::shape_str(latents.shape()));
    }
    const std::int64_t b = latents.dim(0), t = latents.dim(1), c = latents.dim(2), g = latents.dim(3);
    check_patch(t, g, p_lw, p_t);
    const std::int64_t per = t * c * g * g;
    const std::int64_t n = (t / p_t) * (g / p_lw) * (g / p_lw);
    num::Tensor<T> out({b, n, std::int64_t{p_t} * p_lw * p_lw * c});
    for (std::int64_t i = 0; i < b; ++i) {
        const T* src = latents.data() + i * per;
        T* dst = out.data() + i * per;
        for_each_patch(t, c, g, p_lw, p_t, [&](std::int64_t lat, std::int64_t tok) { dst[tok] = src[lat]; });
    }
    return out;
}

template <class T>
num::Tensor<T> unpatchify(const num::Tensor<T>& tokens, int frames, int channels, int grid, int p_lw, int p_t) {
    check_patch(frames, grid, p_lw, p_t);
    const std::int64_t per = std::int64_t{frames} * channels * grid * grid;
    if (tokens.rank() != 3 || tokens.dim(1) * tokens.dim(2) != per ||
        tokens.dim(2) != std::int64_t{p_t} * p_lw * p_lw * channels) {
        throw num::DimensionError("unpatchify: token shape " + num::shape_str(tokens.shape()) +
                                  " does not match the latent layout");
    }
    const std::int64_t b = tokens.dim(0);
    num::Tensor<T> out({b, frames, channels, grid, grid});
    for (std::int64_t i = 0; i < b; ++i) {
        const T* src = tokens.data() + i * per;
        T* dst = out.data() + i * per;
        for_each_patch(frames, channels, grid, p_lw, p_t, [&](std::int64_t lat, std::int64_t tok) { dst[lat] = src[tok]; });
    }
    return out;
}

template <class T>
Interpolant<T> interpolate(const num::Tensor<T>& x0, const num::Tensor<T>& x1, const std::vector<double>& t,
                           double sigma_min) {
    if (x0.shape() != x1.shape() || x0.rank() < 1 || x0.dim(0) != static_cast<std::int64_t>(t.size())) {
        throw num::DimensionError("interpolate: x0 " + num::shape_str(x0.shape()) + ", x1 " +
                                  num::shape_str(x1.shape()) + ", " + std::to_string(t.size()) + " times");
    }
    Interpolant<T> out{num::Tensor<T>(x0.shape()), num::Tensor<T>(x0.shape())};
    const std::int64_t per = x0.numel() / x0.dim(0);
    for (std::int64_t i = 0; i < x0.dim(0); ++i) {
        const double ti = t[static_cast<std::size_t>(i)];
        for (std::int64_t j = i * per; j < (i + 1) * per; ++j) {
            const auto [xt, vt] = interpolate(static_cast<double>(x0[j]), static_cast<double>(x1[j]), ti, sigma_min);
            out.xt[j] = static_cast<T>(xt);
            out.vt[j] = static_cast<T>(vt);
        }
    }
    return out;
}

std::pair<double, double> interpolate(double x0, double x1, double t, double sigma_min) {
    return {t * x1 + (1.0 - (1.0 - sigma_min) * t) * x0, x1 - (1.0 - sigma_min) * x0};
}

template <class T>
num::Tensor<T> cfg_combine(const num::Tensor<T>& u_cond, const num::Tensor<T>& u_uncond, double scale) {
    if (u_cond.shape() != u_uncond.shape()) {
        throw num::DimensionError("cfg_combine: shapes " + num::shape_str(u_cond.shape()) + " and " +
                                  num::shape_str(u_uncond.shape()));
    }
    if (scale == 1.0) {
        return u_cond;
    }
    num::Tensor<T> out(u_cond.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        out[i] = static_cast<T>(u_uncond[i] + scale * (u_cond[i] - u_uncond[i]));
    }
    return out;
}

template <class T>
num::Tensor<T> timestep_embedding(const std::vector<double>& t, int dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw num::DimensionError("timestep_embedding: dim must be even");
    }
    const int half = dim / 2;
    num::Tensor<T> out({static_cast<std::int64_t>(t.size()), dim});
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (int k = 0; k < half; ++k) {
            const double arg = 1000.0 * t[i] * std::exp(-std::log(10000.0) * k / half);
            out[static_cast<std::int64_t>(i) * dim + k] = static_cast<T>(std::cos(arg));
            out[static_cast<std::int64_t>(i) * dim + half + k] = static_cast<T>(std::sin(arg));
        }
    }
    return out;
}

num::Tensor<float> euler_sample(const VelocityFn& velocity, num::Tensor<float> x, int steps, double scale) {
    if (steps < 1) {
        throw SampleError("euler_sample: steps must be >= 1");
    }
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const auto u_cond = velocity(x, t, false);
        const auto u = scale == 1.0 ? u_cond : cfg_combine(u_cond, velocity(x, t, true), scale);
        if (u.shape() != x.shape()) {
            throw SampleError("euler_sample: velocity shape " + num::shape_str(u.shape()) + " != state " +
                              num::shape_str(x.shape()));
        }
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            x[i] = static_cast<float>(x[i] + dt * u[i]);
        }
        if (!x.all_finite()) {
            throw SampleError("euler_sample: non-finite state at step " + std::to_string(k));
        }
    }
    return x;
}

#define HWM_INSTANTIATE_PATH(T)                                                                                  \
    template num::Tensor<T> patchify(const num::Tensor<T>&, int, int);                                          \
    template num::Tensor<T> unpatchify(const num::Tensor<T>&, int, int, int, int, int);                         \
    template Interpolant<T> interpolate(const num::Tensor<T>&, const num::Tensor<T>&, const std::vector<double>&, \
                                        double);                                                                 \
    template num::Tensor<T> cfg_combine(const num::Tensor<T>&, const num::Tensor<T>&, double);                  \
    template num::Tensor<T> timestep_embedding<T>(const std::vector<double>&, int);

HWM_INSTANTIATE_PATH(float)
HWM_INSTANTIATE_PATH(double)

}  // namespace hwm::flow
