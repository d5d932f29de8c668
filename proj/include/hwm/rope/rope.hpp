#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hwm/numcore/ops.hpp"

namespace hwm::rope {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class LayoutError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RopeSpec {
    int head_dim = 0;
    std::vector<int> dims;  // per-axis rotary width, sums to head_dim
    double base = 10000.0;

    int axes() const { return static_cast<int>(dims.size()); }
};

void validate(const RopeSpec& spec);

RopeSpec spec_1d(int head_dim, double base = 10000.0);
// (y, x) halves.
RopeSpec spec_2d(int head_dim, double base = 10000.0);
// (t, y, x) = (1/2, 1/4, 1/4) of head_dim, each rounded down to even, with the
// remainder given to x.
RopeSpec spec_3d(int head_dim, double base = 10000.0);

// Positions are row-major n x axes.
struct Positions {
    int axes = 0;
    std::vector<std::int64_t> values;

    std::int64_t count() const { return axes ? static_cast<std::int64_t>(values.size()) / axes : 0; }
    std::int64_t at(std::int64_t i, int axis) const { return values[static_cast<std::size_t>(i * axes + axis)]; }
    Positions shifted(const std::vector<std::int64_t>& delta) const;
};

// cos/sin tables [n, head_dim/2] for rotate_pairs.
template <class T>
struct Tables {
    num::Tensor<T> cos;
    num::Tensor<T> sin;
};

template <class T>
Tables<T> make_tables(const RopeSpec& spec, const Positions& pos);

// Concatenates tables of consecutive token segments (same head_dim).
template <class T>
Tables<T> concat_tables(const std::vector<const Tables<T>*>& parts);

// x [..., n, heads*head_dim]; every head is rotated with the same table.
template <class T>
num::Var<T> rope_apply(num::Var<T> x, const Tables<T>& tables);

// Token-grid layout of the four streams along a shared time axis: past video
// frames occupy t in [0, past_frames), future frames start at future_t0.
struct StreamLayout {
    int past_frames = 2;
    int future_frames = 1;
    int rows = 8;
    int cols = 8;
    int past_actions = 2;
    int future_actions = 1;
    int future_t0 = -1;  // defaults to past_frames
};

struct StreamPositions {
    Positions v_p;  // (t, y, x)
    Positions v_f;
    Positions a_p;  // (t)
    Positions a_f;
};

StreamPositions build_positions(const StreamLayout& layout);

// Spatial (y, x) positions of one rows x cols frame.
Positions grid_positions(int rows, int cols);
// 1D positions t0, t0+1, ...
Positions time_positions(std::int64_t t0, std::int64_t count);

}  // namespace hwm::rope
