#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hwm/numcore/tensor.hpp"

namespace hwm::num {

// Named parameter declarations with aliasing. Declaring is separate from
// allocating so that paper-scale models can be enumerated and counted
// without materializing gigabytes of weights.
//
// Every name maps to a storage slot; aliased names share a slot, so writes
// through any alias are visible through all of them and the slot is counted
// once.
template <class T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Shape shape;
        int slot = -1;
        // Canonical owner name when this entry is an alias.
        std::optional<std::string> shared_with;
    };

    struct Slot {
        std::string name;  // canonical name
        Shape shape;
        bool decay = true;
        Tensor<T> value;
        Tensor<T> grad;
    };

    // Declares a new canonical parameter. Names must be unique.
    int declare(std::string name, Shape shape, bool decay = true);
    // Adds `name` as an alias of `target` (which may itself be an alias).
    void alias(std::string name, std::string_view target);

    bool contains(std::string_view name) const;
    int slot_of(std::string_view name) const;
    const Entry& entry(std::string_view name) const;
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    int slot_count() const noexcept { return static_cast<int>(slots_.size()); }
    Slot& slot(int i) { return slots_.at(static_cast<std::size_t>(i)); }
    const Slot& slot(int i) const { return slots_.at(static_cast<std::size_t>(i)); }

    // Unique stored values (aliases counted once).
    std::int64_t count() const;

    void allocate();
    bool allocated() const noexcept { return allocated_; }

    Tensor<T>& value(std::string_view name);
    const Tensor<T>& value(std::string_view name) const;
    Tensor<T>& grad(std::string_view name);
    void zero_grad();

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& s : slots_) {
            out.declare(s.name, s.shape, s.decay);
        }
        for (const auto& e : entries_) {
            if (e.shared_with) {
                out.alias(e.name, *e.shared_with);
            }
        }
        if (allocated_) {
            out.allocate();
            for (int i = 0; i < slot_count(); ++i) {
                out.slot(i).value = slots_[static_cast<std::size_t>(i)].value.template cast<U>();
            }
        }
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::vector<Slot> slots_;
    std::unordered_map<std::string, int> by_name_;
    bool allocated_ = false;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace hwm::num
