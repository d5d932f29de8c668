#include <fnmatch.h>

#include <cmath>

#include "hwm/numcore/rng.hpp"
#include "hwm/train/train.hpp"

namespace hwm::train {

using Kind = InitRule::Kind;

InitPolicy masked_policy() {
    return {
        {"*norm*.g", Kind::Ones},       {"*norm*.b", Kind::Zeros},       {"*.b", Kind::Zeros},
        {"mask_token", Kind::Xavier},   {"head.w", Kind::Xavier},        {"*", Kind::Normal, 0.02},
    };
}

InitPolicy flow_policy() {
    return {
        {"*.b", Kind::Zeros},
        {"final.linear.w", Kind::Xavier},
        {"*", Kind::Normal, 0.02},
    };
}

double xavier_bound(const num::Shape& shape) {
    const double fan_in = shape.empty() ? 1.0 : static_cast<double>(shape[0]);
    const double fan_out = shape.size() < 2 ? fan_in : static_cast<double>(shape[1]);
    return std::sqrt(6.0 / (fan_in + fan_out));
}

void init_weights(num::ParamStore<float>& store, const InitPolicy& policy, std::uint64_t seed) {
    if (!store.allocated()) {
        store.allocate();
    }
    for (int i = 0; i < store.slot_count(); ++i) {
        auto& slot = store.slot(i);
        const InitRule* rule = nullptr;
        for (const auto& r : policy) {
            if (fnmatch(r.pattern.c_str(), slot.name.c_str(), 0) == 0) {
                rule = &r;
                break;
            }
        }
        if (!rule) {
            throw ConfigError("init policy has no rule for parameter '" + slot.name + "'");
        }
        Rng rng(derive_seed(seed, "init/" + slot.name));
        const double bound = xavier_bound(slot.shape);
        for (auto& v : slot.value.values()) {
            switch (rule->kind) {
                case Kind::Normal:
                    v = static_cast<float>(rule->std * rng.normal());
                    break;
                case Kind::Xavier:
                    v = static_cast<float>(rng.uniform(-bound, bound));
                    break;
                case Kind::Zeros:
                    v = 0.f;
                    break;
                case Kind::Ones:
                    v = 1.f;
                    break;
            }
        }
    }
}

}  // namespace hwm::train
