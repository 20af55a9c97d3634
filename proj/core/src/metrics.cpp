#include "dnadiff/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dnadiff/tensor.hpp"

namespace dnadiff {

GaussianSummary fit_gaussian(const Eigen::MatrixXd& samples) {
    const int64_t n = samples.rows();
    const int64_t d = samples.cols();
    if (n < 2) throw ValueError("fit_gaussian: need at least 2 samples, got " + std::to_string(n));
    GaussianSummary g;
    g.count = n;
    g.mean = samples.colwise().mean();
    Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
    g.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    g.cov = ((g.cov + g.cov.transpose()) / 2.0).eval();
    if (!g.mean.allFinite() || !g.cov.allFinite())
        throw ValueError("fit_gaussian: non-finite summary from " + std::to_string(n) + "x" + std::to_string(d) +
                         " input");
    return g;
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols()) throw ShapeError("matrix_sqrt_psd: matrix is not square");
    Eigen::MatrixXd sym = (m + m.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw ValueError("matrix_sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (int64_t i = 0; i < ev.size(); ++i) {
        if (ev[i] < -tol)
            throw ValueError("matrix_sqrt_psd: eigenvalue " + std::to_string(ev[i]) + " below -" +
                             std::to_string(tol) + " (matrix is not PSD)");
        if (ev[i] < 0) ev[i] = 0;
        ev[i] = std::sqrt(ev[i]);
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
    if (a.mean.size() != b.mean.size())
        throw ShapeError("frechet_distance: dimension mismatch " + std::to_string(a.mean.size()) + " vs " +
                         std::to_string(b.mean.size()));
    double mean_term = (a.mean - b.mean).squaredNorm();
    Eigen::MatrixXd sa_half = matrix_sqrt_psd(a.cov);
    Eigen::MatrixXd inner = sa_half * b.cov * sa_half;
    Eigen::MatrixXd cross = matrix_sqrt_psd(inner);
    double d2 = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    return d2 < 0 ? 0.0 : d2;
}

ProfileHitReport sei_hits(const Eigen::MatrixXd& predictions, double threshold, int64_t top_k) {
    const int64_t n = predictions.rows(), p = predictions.cols();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < p; ++j) {
            double v = predictions(i, j);
            if (!(v >= 0.0 && v <= 1.0))
                throw ValueError("sei_hits: prediction (" + std::to_string(i) + ", " + std::to_string(j) + ") = " +
                                 std::to_string(v) + " lies outside [0, 1]");
        }
    ProfileHitReport rep;
    rep.threshold = threshold;
    rep.sequences = n;
    rep.counts.assign(p, 0);
    for (int64_t j = 0; j < p; ++j)
        for (int64_t i = 0; i < n; ++i)
            if (predictions(i, j) > threshold) rep.counts[j]++;
    std::vector<std::pair<int64_t, int64_t>> ranked;
    for (int64_t j = 0; j < p; ++j) ranked.emplace_back(j, rep.counts[j]);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    if (top_k > 0 && static_cast<int64_t>(ranked.size()) > top_k) ranked.resize(top_k);
    rep.top = std::move(ranked);
    return rep;
}

double embedding_distribution_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

}  // namespace dnadiff
