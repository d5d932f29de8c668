#include <cstdio>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "hwm/eval/eval.hpp"

namespace hwm::eval {

namespace {

template <class V>
nlohmann::json opt(const std::optional<V>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json as_json(const EvalReport& r) {
    return {{"label", r.label},
            {"psnr_db", opt(r.psnr_db)},
            {"token_accuracy", opt(r.token_accuracy)},
            {"frechet_proxy", opt(r.frechet_proxy)},
            {"params_billions", opt(r.params_billions)},
            {"samples_per_second", opt(r.samples_per_second)},
            {"peak_param_bytes", opt(r.peak_param_bytes)},
            {"peak_memory_bytes", opt(r.peak_memory_bytes)}};
}

std::string num(double v, const char* fmt) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace

std::string to_json(const EvalReport& r) { return as_json(r).dump(2); }

std::string to_json(const std::vector<EvalReport>& rows) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back(as_json(r));
    }
    return arr.dump(2);
}

std::string format_table(const std::vector<EvalReport>& reports) {
    using Cell = std::function<std::string(const EvalReport&)>;
    auto real = [](auto field, const char* fmt, double scale = 1.0) -> Cell {
        return [=](const EvalReport& r) {
            const auto& v = r.*field;
            return v ? num(static_cast<double>(*v) * scale, fmt) : std::string("skipped");
        };
    };
    const std::vector<std::pair<std::string, Cell>> rows = {
        {"Model Size (Billion)", real(&EvalReport::params_billions, "%.4f")},
        {"Parameter Memory (GB)", real(&EvalReport::peak_param_bytes, "%.4f", 1e-9)},
        {"Peak Memory (GB)", real(&EvalReport::peak_memory_bytes, "%.4f", 1e-9)},
        {"Samples per second", real(&EvalReport::samples_per_second, "%.3f")},
        {"Frechet proxy", real(&EvalReport::frechet_proxy, "%.4f")},
        {"PSNR (dB)", real(&EvalReport::psnr_db, "%.2f")},
        {"Token accuracy", real(&EvalReport::token_accuracy, "%.4f")},
    };
    std::vector<std::vector<std::string>> grid;
    grid.push_back({""});
    for (const auto& r : reports) {
        grid[0].push_back(r.label);
    }
    for (const auto& [name, cell] : rows) {
        std::vector<std::string> line{name};
        for (const auto& r : reports) {
            line.push_back(cell(r));
        }
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> width(grid[0].size(), 0);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            width[c] = std::max(width[c], line[c].size());
        }
    }
    std::ostringstream os;
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            const auto pad = std::string(width[c] - line[c].size(), ' ');
            os << (c == 0 ? line[c] + pad : "  " + pad + line[c]);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace hwm::eval
