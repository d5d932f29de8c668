#include "hwm/blocks/blocks.hpp"

namespace hwm::blocks {

template <class T>
num::Var<T> linear_p(num::Graph<T>& g, const std::string& name, num::Var<T> x) {
    return num::linear(x, g.param(name + ".w"), g.param(name + ".b"));
}

template <class T>
num::Var<T> mlp_p(num::Graph<T>& g, const std::string& prefix, num::Var<T> x) {
    return linear_p(g, prefix + ".fc2", num::gelu(linear_p(g, prefix + ".fc1", x)));
}

template <class T>
num::Var<T> norm_p(num::Graph<T>& g, const std::string& prefix, num::Var<T> x) {
    return num::layer_norm(x, g.param(prefix + ".g"), g.param(prefix + ".b"));
}

#define HWM_INSTANTIATE_LAYERS(T)                                                          \
    template num::Var<T> linear_p(num::Graph<T>&, const std::string&, num::Var<T>);        \
    template num::Var<T> mlp_p(num::Graph<T>&, const std::string&, num::Var<T>);           \
    template num::Var<T> norm_p(num::Graph<T>&, const std::string&, num::Var<T>);

HWM_INSTANTIATE_LAYERS(float)
HWM_INSTANTIATE_LAYERS(double)

}  // namespace hwm::blocks
