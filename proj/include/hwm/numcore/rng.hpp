#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hwm {

// Seeded generator with distribution code kept in-house so streams are
// identical across standard libraries (std:: distributions are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::int64_t below(std::int64_t n);
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent seed for a named sub-stream of a root seed,
// e.g. derive_seed(root, "world", step).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace hwm
