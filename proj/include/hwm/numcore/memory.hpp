#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>

namespace hwm::num {

// Process-wide accounting of bytes held by tensor buffers. Used by the
// benchmark harness to report peak parameter + activation residency.
namespace memory {

std::int64_t current_bytes() noexcept;
std::int64_t peak_bytes() noexcept;
// Resets the peak to the current residency.
void reset_peak() noexcept;

void note_alloc(std::size_t bytes) noexcept;
void note_free(std::size_t bytes) noexcept;

}  // namespace memory

template <class T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() noexcept = default;
    template <class U>
    TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        auto* p = static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64}));
        memory::note_alloc(n * sizeof(T));
        return p;
    }

    void deallocate(T* p, std::size_t n) noexcept {
        memory::note_free(n * sizeof(T));
        ::operator delete(p, std::align_val_t{64});
    }

    template <class U>
    bool operator==(const TrackingAllocator<U>&) const noexcept {
        return true;
    }
};

}  // namespace hwm::num
