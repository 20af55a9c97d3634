#pragma once

// Distribution-level sample quality metrics: Gaussian summaries, Fréchet
// distance, and profile hit counting over externally produced prediction
// matrices.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace dnadiff {

struct GaussianSummary {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric, eigenvalues >= -1e-6 (clamped later)
    int64_t count = 0;
};

// Rows are samples. Requires N >= 2; covariance is the unbiased (N-1)
// estimator, symmetrized by averaging with its transpose.
GaussianSummary fit_gaussian(const Eigen::MatrixXd& samples);

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-1e-6, 0) are clamped to 0; anything more negative is rejected.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m, double tol = 1e-6);

// d^2 = |mu_a - mu_b|^2 + Tr(Sa + Sb - 2*sqrt(Sa^1/2 Sb Sa^1/2)); tiny
// negative totals clamp to 0.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

struct ProfileHitReport {
    std::vector<int64_t> counts;                            // per profile column
    double threshold = 0.9;
    std::vector<std::pair<int64_t, int64_t>> top;           // (profile index, count), descending
    int64_t sequences = 0;
};

// Counts, per profile column, the rows whose prediction strictly exceeds the
// threshold. Entries must lie in [0, 1].
ProfileHitReport sei_hits(const Eigen::MatrixXd& predictions, double threshold = 0.9, int64_t top_k = 10);

// fit_gaussian on both embedding matrices, then frechet_distance.
double embedding_distribution_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace dnadiff
