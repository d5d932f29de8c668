#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hwm/numcore/params.hpp"
#include "hwm/numcore/tensor.hpp"

namespace hwm::num {

template <class T>
class Graph;

// Handle to a node on a Graph tape.
template <class T>
struct Var {
    Graph<T>* g = nullptr;
    int id = -1;

    const Tensor<T>& value() const { return g->value(id); }
    const Shape& shape() const { return g->value(id).shape(); }
    std::int64_t dim(int axis) const { return g->value(id).dim(axis); }
    int rank() const { return g->value(id).rank(); }
    bool valid() const noexcept { return g != nullptr && id >= 0; }
};

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// them in reverse. Parameter nodes read storage from a ParamStore without
// copying and flush their gradients into the store's slots after backward.
template <class T>
class Graph {
public:
    using value_type = T;
    using BackwardFn = std::function<void(Graph&, const Tensor<T>& gout)>;

    explicit Graph(ParamStore<T>* params = nullptr, bool record = true) : params_(params), record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }
    ParamStore<T>* params() const noexcept { return params_; }

    Var<T> constant(Tensor<T> value);
    // A leaf whose gradient is retained and readable via grad().
    Var<T> variable(Tensor<T> value);
    // Leaf bound to a named parameter. All aliases of one storage slot map to
    // the same node, so uses through different aliases accumulate together.
    Var<T> param(const std::string& name);

    // Appends a kernel output. `inputs` decide whether the node needs a
    // gradient; the backward closure is dropped when none do.
    Var<T> push(const char* kernel, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);
    Var<T> push(const char* kernel, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward);

    const Tensor<T>& value(int id) const;
    bool needs_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }
    // Gradient buffer of a node, allocated as zeros on first access.
    Tensor<T>& grad_buffer(int id);
    const Tensor<T>& grad(Var<T> v) const;
    const std::string& kernel(int id) const { return nodes_.at(static_cast<std::size_t>(id)).kernel; }

    // Seeds d(root)/d(root) = 1 for a scalar root and propagates. Parameter
    // gradients are added into the ParamStore.
    void backward(Var<T> root);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        std::string kernel;
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        BackwardFn backward;
        bool needs_grad = false;
        int param_slot = -1;
    };

    Var<T> append(Node node);

    ParamStore<T>* params_;
    bool record_;
    std::deque<Node> nodes_;
    std::unordered_map<int, int> param_nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace hwm::num
