#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/numcore/graph.hpp"

namespace hwm::num {

struct GradCheckReport {
    bool passed = true;
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::int64_t entries_checked = 0;

    std::string summary() const;
};

class GradCheckError : public std::runtime_error {
public:
    explicit GradCheckError(const GradCheckReport& r);
    GradCheckReport report;
};

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-6;
    // Entries per parameter slot to probe; <= 0 probes all. Probed entries
    // are spread evenly across the slot.
    std::int64_t max_entries_per_param = 0;
    // Restrict to these parameter names; empty checks every storage slot.
    std::vector<std::string> names;
};

// Compares analytic parameter gradients of a scalar-valued computation
// against central differences. Relative error is
// |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(const std::function<Var<double>(Graph<double>&)>& f, ParamStore<double>& params,
                           const GradCheckOptions& opts = {});

// Like grad_check but throws GradCheckError naming the worst parameter.
void require_grad_check(const std::function<Var<double>(Graph<double>&)>& f, ParamStore<double>& params,
                        const GradCheckOptions& opts = {});

}  // namespace hwm::num
