#include "hwm/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hwm::num {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "passed" : "FAILED") << ": max rel err " << max_rel_err << " over " << entries_checked
       << " entries";
    if (!worst_param.empty()) {
        os << "; worst " << worst_param << "[" << worst_index << "] analytic " << worst_analytic << " numeric "
           << worst_numeric;
    }
    return os.str();
}

GradCheckError::GradCheckError(const GradCheckReport& r)
    : std::runtime_error("gradient check failed at " + r.worst_param + ": " + r.summary()), report(r) {}

GradCheckReport grad_check(const std::function<Var<double>(Graph<double>&)>& f, ParamStore<double>& params,
                           const GradCheckOptions& opts) {
    if (!params.allocated()) {
        throw std::logic_error("grad_check needs allocated parameters");
    }
    std::vector<int> slots;
    if (opts.names.empty()) {
        for (int s = 0; s < params.slot_count(); ++s) {
            slots.push_back(s);
        }
    } else {
        for (const auto& n : opts.names) {
            const int s = params.slot_of(n);
            if (std::find(slots.begin(), slots.end(), s) == slots.end()) {
                slots.push_back(s);
            }
        }
    }

    params.zero_grad();
    {
        Graph<double> g(&params);
        g.backward(f(g));
    }

    auto eval = [&]() {
        Graph<double> g(&params, false);
        return f(g).value()[0];
    };

    GradCheckReport rep;
    for (const int s : slots) {
        auto& slot = params.slot(s);
        const std::int64_t n = slot.value.numel();
        std::int64_t probes = n;
        if (opts.max_entries_per_param > 0) {
            probes = std::min(n, opts.max_entries_per_param);
        }
        for (std::int64_t p = 0; p < probes; ++p) {
            const std::int64_t i = probes == n ? p : (p * n) / probes;
            const double orig = slot.value[i];
            slot.value[i] = orig + opts.eps;
            const double up = eval();
            slot.value[i] = orig - opts.eps;
            const double down = eval();
            slot.value[i] = orig;
            const double numeric = (up - down) / (2.0 * opts.eps);
            const double analytic = slot.grad.empty() ? 0.0 : slot.grad[i];
            const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
            ++rep.entries_checked;
            if (rel > rep.max_rel_err || rep.worst_param.empty()) {
                rep.max_rel_err = std::max(rel, rep.max_rel_err);
                rep.worst_param = slot.name;
                rep.worst_index = i;
                rep.worst_analytic = analytic;
                rep.worst_numeric = numeric;
            }
        }
    }
    rep.passed = rep.max_rel_err <= opts.tol;
    return rep;
}

void require_grad_check(const std::function<Var<double>(Graph<double>&)>& f, ParamStore<double>& params,
                        const GradCheckOptions& opts) {
    const GradCheckReport r = grad_check(f, params, opts);
    if (!r.passed) {
        throw GradCheckError(r);
    }
}

}  // namespace hwm::num
