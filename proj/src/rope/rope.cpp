#include "hwm/rope/rope.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace hwm::rope {

void validate(const RopeSpec& spec) {
    if (spec.dims.empty() || spec.dims.size() > 3) {
        throw ConfigError("rope: 1 to 3 axes required");
    }
    for (const int d : spec.dims) {
        if (d < 2 || d % 2 != 0) {
            throw ConfigError("rope: per-axis dimension " + std::to_string(d) + " must be even and >= 2");
        }
    }
    if (std::accumulate(spec.dims.begin(), spec.dims.end(), 0) != spec.head_dim) {
        throw ConfigError("rope: per-axis dimensions do not sum to head_dim " + std::to_string(spec.head_dim));
    }
    if (!(spec.base > 1.0)) {
        throw ConfigError("rope: base must exceed 1");
    }
}

RopeSpec spec_1d(int head_dim, double base) {
    RopeSpec s{head_dim, {head_dim}, base};
    validate(s);
    return s;
}

RopeSpec spec_2d(int head_dim, double base) {
    if (head_dim % 4 != 0) {
        throw ConfigError("rope 2D: head_dim " + std::to_string(head_dim) + " must be divisible by 4");
    }
    RopeSpec s{head_dim, {head_dim / 2, head_dim / 2}, base};
    validate(s);
    return s;
}

RopeSpec spec_3d(int head_dim, double base) {
    const int t = 2 * (head_dim / 4);
    const int y = 2 * (head_dim / 8);
    RopeSpec s{head_dim, {t, y, head_dim - t - y}, base};
    validate(s);
    return s;
}

Positions Positions::shifted(const std::vector<std::int64_t>& delta) const {
    if (static_cast<int>(delta.size()) != axes) {
        throw LayoutError("shift has wrong number of axes");
    }
    Positions out = *this;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] += delta[i % static_cast<std::size_t>(axes)];
    }
    return out;
}

template <class T>
Tables<T> make_tables(const RopeSpec& spec, const Positions& pos) {
    validate(spec);
    if (pos.axes != spec.axes()) {
        throw LayoutError("rope: positions have " + std::to_string(pos.axes) + " axes, spec has " +
                          std::to_string(spec.axes()));
    }
    const std::int64_t n = pos.count();
    const std::int64_t half = spec.head_dim / 2;
    Tables<T> t{num::Tensor<T>({n, half}), num::Tensor<T>({n, half})};
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t col = 0;
        for (int a = 0; a < spec.axes(); ++a) {
            const int d = spec.dims[static_cast<std::size_t>(a)];
            for (int k = 0; k < d / 2; ++k) {
                const double freq = std::pow(spec.base, -2.0 * k / d);
                const double angle = static_cast<double>(pos.at(i, a)) * freq;
                t.cos[i * half + col] = static_cast<T>(std::cos(angle));
                t.sin[i * half + col] = static_cast<T>(std::sin(angle));
                ++col;
            }
        }
    }
    return t;
}

template <class T>
Tables<T> concat_tables(const std::vector<const Tables<T>*>& parts) {
    if (parts.empty()) {
        throw LayoutError("concat_tables: no parts");
    }
    const std::int64_t half = parts[0]->cos.dim(1);
    std::int64_t n = 0;
    for (const auto* p : parts) {
        if (p->cos.dim(1) != half) {
            throw LayoutError("concat_tables: head dimensions differ");
        }
        n += p->cos.dim(0);
    }
    Tables<T> out{num::Tensor<T>({n, half}), num::Tensor<T>({n, half})};
    std::int64_t off = 0;
    for (const auto* p : parts) {
        std::copy_n(p->cos.data(), p->cos.numel(), out.cos.data() + off);
        std::copy_n(p->sin.data(), p->sin.numel(), out.sin.data() + off);
        off += p->cos.numel();
    }
    return out;
}

template <class T>
num::Var<T> rope_apply(num::Var<T> x, const Tables<T>& tables) {
    return num::rotate_pairs(x, tables.cos, tables.sin);
}

Positions grid_positions(int rows, int cols) {
    Positions p{2, {}};
    p.values.reserve(static_cast<std::size_t>(rows * cols * 2));
    for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) {
            p.values.push_back(y);
            p.values.push_back(x);
        }
    }
    return p;
}

Positions time_positions(std::int64_t t0, std::int64_t count) {
    Positions p{1, {}};
    for (std::int64_t i = 0; i < count; ++i) {
        p.values.push_back(t0 + i);
    }
    return p;
}

StreamPositions build_positions(const StreamLayout& layout) {
    const int t0 = layout.future_t0 < 0 ? layout.past_frames : layout.future_t0;
    if (layout.past_frames < 0 || layout.future_frames < 0 || layout.rows < 1 || layout.cols < 1) {
        throw LayoutError("layout extents must be positive");
    }
    if (t0 < layout.past_frames) {
        throw LayoutError("future frames start at t=" + std::to_string(t0) + ", overlapping past frames [0, " +
                          std::to_string(layout.past_frames) + ")");
    }
    if (layout.past_actions > layout.past_frames || layout.future_actions > layout.future_frames) {
        throw LayoutError("more action tokens than latent frames in a stream");
    }
    auto video = [&](int start, int frames) {
        Positions p{3, {}};
        for (int t = 0; t < frames; ++t) {
            for (int y = 0; y < layout.rows; ++y) {
                for (int x = 0; x < layout.cols; ++x) {
                    p.values.insert(p.values.end(), {start + t, y, x});
                }
            }
        }
        return p;
    };
    StreamPositions out;
    out.v_p = video(0, layout.past_frames);
    out.v_f = video(t0, layout.future_frames);
    out.a_p = time_positions(layout.past_frames - layout.past_actions, layout.past_actions);
    out.a_f = time_positions(t0, layout.future_actions);
    return out;
}

template Tables<float> make_tables(const RopeSpec&, const Positions&);
template Tables<double> make_tables(const RopeSpec&, const Positions&);
template Tables<float> concat_tables(const std::vector<const Tables<float>*>&);
template Tables<double> concat_tables(const std::vector<const Tables<double>*>&);
template num::Var<float> rope_apply(num::Var<float>, const Tables<float>&);
template num::Var<double> rope_apply(num::Var<double>, const Tables<double>&);

}  // namespace hwm::rope
