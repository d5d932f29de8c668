#include "hwm/numcore/params.hpp"

namespace hwm::num {

template <class T>
int ParamStore<T>::declare(std::string name, Shape shape, bool decay) {
    if (by_name_.count(name)) {
        throw std::invalid_argument("duplicate parameter name: " + name);
    }
    if (allocated_) {
        throw std::logic_error("cannot declare parameters after allocation: " + name);
    }
    const int slot = static_cast<int>(slots_.size());
    slots_.push_back(Slot{name, shape, decay, {}, {}});
    by_name_.emplace(name, static_cast<int>(entries_.size()));
    entries_.push_back(Entry{std::move(name), std::move(shape), slot, std::nullopt});
    return slot;
}

template <class T>
void ParamStore<T>::alias(std::string name, std::string_view target) {
    if (by_name_.count(name)) {
        throw std::invalid_argument("duplicate parameter name: " + name);
    }
    const Entry& t = entry(target);
    const std::string canonical = slots_[static_cast<std::size_t>(t.slot)].name;
    by_name_.emplace(name, static_cast<int>(entries_.size()));
    entries_.push_back(Entry{std::move(name), t.shape, t.slot, canonical});
}

template <class T>
bool ParamStore<T>::contains(std::string_view name) const {
    return by_name_.count(std::string(name)) != 0;
}

template <class T>
const typename ParamStore<T>::Entry& ParamStore<T>::entry(std::string_view name) const {
    const auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) {
        throw std::out_of_range("unknown parameter: " + std::string(name));
    }
    return entries_[static_cast<std::size_t>(it->second)];
}

template <class T>
int ParamStore<T>::slot_of(std::string_view name) const {
    return entry(name).slot;
}

template <class T>
std::int64_t ParamStore<T>::count() const {
    std::int64_t n = 0;
    for (const auto& s : slots_) {
        n += shape_numel(s.shape);
    }
    return n;
}

template <class T>
void ParamStore<T>::allocate() {
    for (auto& s : slots_) {
        s.value = Tensor<T>(s.shape);
        s.grad = Tensor<T>(s.shape);
    }
    allocated_ = true;
}

template <class T>
Tensor<T>& ParamStore<T>::value(std::string_view name) {
    return slots_[static_cast<std::size_t>(slot_of(name))].value;
}

template <class T>
const Tensor<T>& ParamStore<T>::value(std::string_view name) const {
    return slots_[static_cast<std::size_t>(slot_of(name))].value;
}

template <class T>
Tensor<T>& ParamStore<T>::grad(std::string_view name) {
    return slots_[static_cast<std::size_t>(slot_of(name))].grad;
}

template <class T>
void ParamStore<T>::zero_grad() {
    for (auto& s : slots_) {
        s.grad.fill(T{0});
    }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace hwm::num
