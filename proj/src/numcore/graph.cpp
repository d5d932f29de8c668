#include "hwm/numcore/graph.hpp"

namespace hwm::num {

template <class T>
Var<T> Graph<T>::append(Node node) {
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
    if (!value.all_finite()) {
        throw NumericError("constant", "non-finite value in graph input");
    }
    Node n;
    n.kernel = "constant";
    n.value = std::move(value);
    return append(std::move(n));
}

template <class T>
Var<T> Graph<T>::variable(Tensor<T> value) {
    if (!value.all_finite()) {
        throw NumericError("variable", "non-finite value in graph input");
    }
    Node n;
    n.kernel = "variable";
    n.value = std::move(value);
    n.needs_grad = record_;
    return append(std::move(n));
}

template <class T>
Var<T> Graph<T>::param(const std::string& name) {
    if (params_ == nullptr) {
        throw std::logic_error("graph has no parameter store: " + name);
    }
    const int slot = params_->slot_of(name);
    if (const auto it = param_nodes_.find(slot); it != param_nodes_.end()) {
        return Var<T>{this, it->second};
    }
    Node n;
    n.kernel = "param";
    n.external = &params_->slot(slot).value;
    n.needs_grad = record_;
    n.param_slot = slot;
    const Var<T> v = append(std::move(n));
    param_nodes_.emplace(slot, v.id);
    return v;
}

template <class T>
Var<T> Graph<T>::push(const char* kernel, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
    if (!value.all_finite()) {
        throw NumericError(kernel, std::string("non-finite output from kernel '") + kernel + "'");
    }
    Node n;
    n.kernel = kernel;
    n.value = std::move(value);
    if (record_) {
        for (const auto& in : inputs) {
            if (in.g != this) {
                throw std::logic_error(std::string("kernel '") + kernel + "' mixes graphs");
            }
            n.needs_grad = n.needs_grad || needs_grad(in.id);
        }
        if (n.needs_grad) {
            n.backward = std::move(backward);
        }
    }
    return append(std::move(n));
}

template <class T>
Var<T> Graph<T>::push(const char* kernel, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    return push(kernel, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <class T>
const Tensor<T>& Graph<T>::value(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.external ? *n.external : n.value;
}

template <class T>
Tensor<T>& Graph<T>::grad_buffer(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.grad.numel() != value(id).numel() || n.grad.shape() != value(id).shape()) {
        n.grad = Tensor<T>(value(id).shape());
    }
    return n.grad;
}

template <class T>
const Tensor<T>& Graph<T>::grad(Var<T> v) const {
    return nodes_.at(static_cast<std::size_t>(v.id)).grad;
}

template <class T>
void Graph<T>::backward(Var<T> root) {
    if (!record_) {
        throw std::logic_error("backward on a graph built without recording");
    }
    if (value(root.id).numel() != 1) {
        throw DimensionError("backward root must be a scalar, got " + shape_str(value(root.id).shape()));
    }
    grad_buffer(root.id).fill(T{1});
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.grad.empty()) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, n.grad);
        }
        if (n.param_slot >= 0) {
            auto& dst = params_->slot(n.param_slot).grad;
            if (dst.shape() != n.grad.shape()) {
                dst = Tensor<T>(n.grad.shape());
            }
            T* d = dst.data();
            const T* s = n.grad.data();
            for (std::int64_t i = 0; i < dst.numel(); ++i) {
                d[i] += s[i];
            }
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace hwm::num
