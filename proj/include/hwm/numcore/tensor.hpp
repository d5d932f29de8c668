#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/numcore/memory.hpp"

namespace hwm::num {

using Shape = std::vector<std::int64_t>;

// Raised for inconsistent extents: kernel operands, reshapes, file payloads.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when a kernel produces NaN or Inf. The message names the kernel.
class NumericError : public std::runtime_error {
public:
    NumericError(std::string kernel, const std::string& what)
        : std::runtime_error(what), kernel_(std::move(kernel)) {}
    const std::string& kernel() const noexcept { return kernel_; }

private:
    std::string kernel_;
};

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. Value semantics: copies are deep.
template <class T>
class Tensor {
public:
    using value_type = T;
    using Buffer = std::vector<T, TrackingAllocator<T>>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::initializer_list<T> values);
    Tensor(Shape shape, std::span<const T> values);

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }
    // Negative axes count from the back.
    std::int64_t dim(int axis) const;
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return {data_.data(), data_.size()}; }
    std::span<const T> values() const noexcept { return {data_.data(), data_.size()}; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    T at(std::initializer_list<std::int64_t> index) const;
    T& at(std::initializer_list<std::int64_t> index);

    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(T value);
    bool all_finite() const noexcept;

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) {
            out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        }
        return out;
    }

private:
    std::int64_t flat_index(std::initializer_list<std::int64_t> index) const;

    Shape shape_;
    Buffer data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hwm::num
