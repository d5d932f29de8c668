#include "hwm/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hwm::num {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) {
            throw DimensionError("negative extent in shape " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ']';
    return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

template <class T>
Tensor<T>::Tensor(Shape shape, std::initializer_list<T> values) : shape_(std::move(shape)), data_(values) {
    if (shape_numel(shape_) != numel()) {
        throw DimensionError("tensor shape " + shape_str(shape_) + " does not hold " + std::to_string(values.size()) +
                             " values");
    }
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::span<const T> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (shape_numel(shape_) != numel()) {
        throw DimensionError("tensor shape " + shape_str(shape_) + " does not hold " + std::to_string(values.size()) +
                             " values");
    }
}

template <class T>
std::int64_t Tensor<T>::dim(int axis) const {
    const int r = rank();
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[static_cast<std::size_t>(a)];
}

template <class T>
std::int64_t Tensor<T>::flat_index(std::initializer_list<std::int64_t> index) const {
    if (static_cast<int>(index.size()) != rank()) {
        throw DimensionError("index rank mismatch for shape " + shape_str(shape_));
    }
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= shape_[axis]) {
            throw DimensionError("index out of range for shape " + shape_str(shape_));
        }
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return flat;
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
    return data_[static_cast<std::size_t>(flat_index(index))];
}

template <class T>
T& Tensor<T>::at(std::initializer_list<std::int64_t> index) {
    return data_[static_cast<std::size_t>(flat_index(index))];
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
    if (shape_numel(shape) != numel()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

template <class T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <class T>
bool Tensor<T>::all_finite() const noexcept {
    for (const T v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace hwm::num
