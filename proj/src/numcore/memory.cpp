#include "hwm/numcore/memory.hpp"

namespace hwm::num::memory {

namespace {
std::atomic<std::int64_t> g_current{0};
std::atomic<std::int64_t> g_peak{0};
}  // namespace

std::int64_t current_bytes() noexcept { return g_current.load(std::memory_order_relaxed); }

std::int64_t peak_bytes() noexcept { return g_peak.load(std::memory_order_relaxed); }

void reset_peak() noexcept { g_peak.store(g_current.load(std::memory_order_relaxed), std::memory_order_relaxed); }

void note_alloc(std::size_t bytes) noexcept {
    const auto now = g_current.fetch_add(static_cast<std::int64_t>(bytes), std::memory_order_relaxed) +
                     static_cast<std::int64_t>(bytes);
    auto peak = g_peak.load(std::memory_order_relaxed);
    while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
}

void note_free(std::size_t bytes) noexcept {
    g_current.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
}

}  // namespace hwm::num::memory
