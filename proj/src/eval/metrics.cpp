#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "hwm/eval/eval.hpp"
#include "hwm/numcore/tensor.hpp"

namespace hwm::eval {

using num::DimensionError;

double psnr(const std::vector<float>& pred, const std::vector<float>& truth, double peak) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw DimensionError("psnr: sizes " + std::to_string(pred.size()) + " and " + std::to_string(truth.size()) +
                             " differ or are empty");
    }
    if (!(peak > 0)) {
        throw std::invalid_argument("psnr: peak must be positive");
    }
    double se = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - truth[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(pred.size());
    if (mse == 0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const std::vector<world::LatentClip>& pred, const std::vector<world::LatentClip>& truth, double peak) {
    if (pred.size() != truth.size()) {
        throw DimensionError("psnr: clip counts differ");
    }
    std::vector<float> a, b;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].frames != truth[i].frames || pred[i].C != truth[i].C || pred[i].G != truth[i].G) {
            throw DimensionError("psnr: clip " + std::to_string(i) + " shapes differ");
        }
        a.insert(a.end(), pred[i].values.begin(), pred[i].values.end());
        b.insert(b.end(), truth[i].values.begin(), truth[i].values.end());
    }
    return psnr(a, b, peak);
}

double data_range(const std::vector<world::LatentClip>& reference) {
    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (const auto& c : reference) {
        for (const float v : c.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    return hi > lo ? static_cast<double>(hi) - lo : 0.0;
}

double token_accuracy(const world::TokenGrid& pred, const world::TokenGrid& truth) {
    return token_accuracy(std::vector<world::TokenGrid>{pred}, std::vector<world::TokenGrid>{truth});
}

double token_accuracy(const std::vector<world::TokenGrid>& pred, const std::vector<world::TokenGrid>& truth) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw DimensionError("token_accuracy: grid counts differ or are empty");
    }
    std::int64_t same = 0, total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].frames != truth[i].frames || pred[i].G != truth[i].G) {
            throw DimensionError("token_accuracy: grid " + std::to_string(i) + " shapes differ");
        }
        for (std::size_t j = 0; j < pred[i].tokens.size(); ++j) {
            same += pred[i].tokens[j] == truth[i].tokens[j];
        }
        total += static_cast<std::int64_t>(pred[i].tokens.size());
    }
    return total ? static_cast<double>(same) / static_cast<double>(total) : 0.0;
}

namespace {

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

Gaussian fit(const std::vector<std::vector<double>>& x, double shrink) {
    if (x.size() < 2) {
        throw DimensionError("frechet_gaussian_proxy: need at least two samples per set");
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto d = static_cast<Eigen::Index>(x[0].size());
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(x[static_cast<std::size_t>(i)].size()) != d) {
            throw DimensionError("frechet_gaussian_proxy: ragged samples");
        }
        m.row(i) = Eigen::Map<const Eigen::RowVectorXd>(x[static_cast<std::size_t>(i)].data(), d);
    }
    Gaussian g;
    g.mean = m.colwise().mean().transpose();
    m.rowwise() -= g.mean.transpose();
    g.cov = (m.transpose() * m) / static_cast<double>(n - 1);
    const Eigen::VectorXd diag = g.cov.diagonal();
    g.cov *= 1.0 - shrink;
    g.cov.diagonal() += shrink * diag;
    return g;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_gaussian_proxy(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                              double shrink) {
    if (shrink < 0 || shrink > 1) {
        throw std::invalid_argument("frechet_gaussian_proxy: shrink must lie in [0, 1]");
    }
    const Gaussian ga = fit(a, shrink), gb = fit(b, shrink);
    if (ga.mean.size() != gb.mean.size()) {
        throw DimensionError("frechet_gaussian_proxy: sample dimensions differ");
    }
    // tr((A B)^1/2) = tr((A^1/2 B A^1/2)^1/2) for symmetric PSD A, B.
    const Eigen::MatrixXd ra = psd_sqrt(ga.cov);
    const Eigen::MatrixXd mid = ra * gb.cov * ra;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mid + mid.transpose()), Eigen::EigenvaluesOnly);
    const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (ga.mean - gb.mean).squaredNorm() + ga.cov.trace() + gb.cov.trace() - 2.0 * cross;
    return std::max(0.0, d);
}

std::vector<std::vector<double>> site_features(const std::vector<world::LatentClip>& clips) {
    std::vector<std::vector<double>> out;
    for (const auto& c : clips) {
        for (int t = 0; t < c.frames; ++t) {
            for (int y = 0; y < c.G; ++y) {
                for (int x = 0; x < c.G; ++x) {
                    std::vector<double> v(static_cast<std::size_t>(c.C));
                    for (int ch = 0; ch < c.C; ++ch) {
                        v[static_cast<std::size_t>(ch)] = c.at(t, ch, y, x);
                    }
                    out.push_back(std::move(v));
                }
            }
        }
    }
    return out;
}

}  // namespace hwm::eval
