#include <algorithm>
#include <cmath>
#include <numbers>

#include "hwm/train/train.hpp"

namespace hwm::train {

Schedule parse_schedule(const std::string& name) {
    if (name == "linear") {
        return Schedule::LinearWarmup;
    }
    if (name == "cosine") {
        return Schedule::Cosine;
    }
    if (name == "constant") {
        return Schedule::Constant;
    }
    throw ConfigError("unknown schedule '" + name + "' (expected linear, cosine, constant)");
}

std::string schedule_name(Schedule s) {
    switch (s) {
        case Schedule::LinearWarmup:
            return "linear";
        case Schedule::Cosine:
            return "cosine";
        case Schedule::Constant:
            return "constant";
    }
    return "?";
}

void validate(const TrainConfig& cfg) {
    if (cfg.steps < 1 || cfg.batch_size < 1) {
        throw ConfigError("steps and batch_size must be positive");
    }
    if (!(cfg.lr >= 0)) {
        throw ConfigError("lr must be non-negative");
    }
    if (cfg.warmup_steps < 0 || (cfg.warmup_steps > 0 && cfg.warmup_steps >= cfg.steps)) {
        throw ConfigError("warmup_steps must be below steps");
    }
    if (!(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1 && cfg.eps > 0)) {
        throw ConfigError("invalid AdamW moments");
    }
    if (cfg.weight_decay < 0 || cfg.checkpoint_every < 0) {
        throw ConfigError("weight_decay and checkpoint_every must be non-negative");
    }
}

double lr_at(int step, const TrainConfig& cfg) {
    const double s = std::clamp(step, 0, cfg.steps);
    const int warm = cfg.schedule == Schedule::Cosine ? 0 : cfg.warmup_steps;
    if (s < warm) {
        return cfg.lr * s / warm;
    }
    switch (cfg.schedule) {
        case Schedule::LinearWarmup:
            return cfg.lr * (cfg.steps - s) / (cfg.steps - warm);
        case Schedule::Cosine:
            return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * s / cfg.steps));
        case Schedule::Constant:
            return cfg.lr;
    }
    return cfg.lr;
}

AdamW::AdamW(num::ParamStore<float>& store, const TrainConfig& cfg) : store_(&store), cfg_(cfg) {
    if (!store.allocated()) {
        throw ConfigError("AdamW: parameter store is not allocated");
    }
    for (int i = 0; i < store.slot_count(); ++i) {
        m_.emplace_back(store.slot(i).shape, 0.f);
        v_.emplace_back(store.slot(i).shape, 0.f);
    }
}

bool AdamW::step(double lr) {
    double sq = 0;
    for (int i = 0; i < store_->slot_count(); ++i) {
        const auto& g = store_->slot(i).grad;
        for (std::int64_t j = 0; j < g.numel(); ++j) {
            sq += static_cast<double>(g[j]) * g[j];
        }
    }
    last_norm_ = std::sqrt(sq);
    if (!std::isfinite(last_norm_)) {
        ++skipped_;
        return false;
    }
    const double clip = cfg_.clip_norm > 0 && last_norm_ > cfg_.clip_norm ? cfg_.clip_norm / last_norm_ : 1.0;
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (int i = 0; i < store_->slot_count(); ++i) {
        auto& slot = store_->slot(i);
        const double decay = slot.decay ? lr * cfg_.weight_decay : 0.0;
        float* p = slot.value.data();
        const float* g = slot.grad.data();
        float* m = m_[static_cast<std::size_t>(i)].data();
        float* v = v_[static_cast<std::size_t>(i)].data();
        for (std::int64_t j = 0; j < slot.value.numel(); ++j) {
            const double gj = g[j] * clip;
            m[j] = static_cast<float>(b1 * m[j] + (1 - b1) * gj);
            v[j] = static_cast<float>(b2 * v[j] + (1 - b2) * gj * gj);
            const double mh = m[j] / c1, vh = v[j] / c2;
            p[j] = static_cast<float>(p[j] * (1.0 - decay) - lr * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
    return true;
}

}  // namespace hwm::train
