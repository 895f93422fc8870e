#pragma once

#include <vector>

#include <Eigen/Dense>

#include "flexnoise/kernels.hpp"

namespace flexnoise {

inline constexpr double kDefaultTruncation = 1e-9;

/// Symmetric positive-definite matrix in envelope (skyline) storage: row i keeps the
/// columns first(i)..i of its lower triangle. Entries with |value| below the truncation
/// threshold are stored as exact zeros, and the envelope is trimmed to the last kept
/// entry. The Cholesky factor shares the envelope and is computed at construction.
class SparseCovariance {
public:
    /// `rows[i]` holds columns first[i]..i of row i.
    SparseCovariance(std::vector<Eigen::Index> first, std::vector<std::vector<double>> rows,
                     double threshold = kDefaultTruncation);

    static SparseCovariance from_dense(const Eigen::MatrixXd& dense,
                                       double threshold = kDefaultTruncation);
    static SparseCovariance from_diagonal(const Eigen::VectorXd& variances);

    Eigen::Index size() const { return static_cast<Eigen::Index>(first_.size()); }
    double threshold() const { return threshold_; }
    /// Diagonal jitter that was needed for the factorization (0 when none).
    double jitter() const { return jitter_; }

    /// Stored value (0 outside the envelope). Does not include jitter.
    double operator()(Eigen::Index i, Eigen::Index j) const;
    Eigen::MatrixXd to_dense() const;
    Eigen::Index nonzeros() const;
    Eigen::Index bandwidth() const;
    Eigen::Index first(Eigen::Index i) const { return first_[static_cast<std::size_t>(i)]; }

    double log_det() const { return log_det_; }
    /// Solves L z = r with the cached factor.
    Eigen::VectorXd solve_lower(const Eigen::VectorXd& r) const;
    /// r^T Sigma^{-1} r.
    double quad_form(const Eigen::VectorXd& r) const;
    /// Cholesky factor as a dense lower-triangular matrix (testing and diagnostics).
    Eigen::MatrixXd factor_dense() const;

private:
    void factorize();
    bool try_factorize(double jitter, double& smallest_pivot);

    std::vector<Eigen::Index> first_;
    std::vector<std::size_t> offset_;
    std::vector<double> values_;
    std::vector<double> factor_;
    double threshold_;
    double jitter_ = 0.0;
    double log_det_ = 0.0;
    Eigen::Index last_failed_row_ = 0;
};

Eigen::Index bandwidth(const SparseCovariance& cov);

SparseCovariance build_covariance(const StationaryKernelSpec& kernel, const Eigen::VectorXd& times,
                                  double threshold = kDefaultTruncation);

/// Non-stationary Laplacian from per-time-point sigma and length scale.
SparseCovariance build_covariance(const Eigen::VectorXd& sigma, const Eigen::VectorXd& length,
                                  const Eigen::VectorXd& times,
                                  double threshold = kDefaultTruncation);

/// Non-stationary Laplacian, parameters interpolated from the state's grid.
SparseCovariance build_covariance(const NonStationaryState& state, const Eigen::VectorXd& times,
                                  double threshold = kDefaultTruncation);

/// Untruncated dense matrices (reference path).
Eigen::MatrixXd dense_covariance(const StationaryKernelSpec& kernel, const Eigen::VectorXd& times);
Eigen::MatrixXd dense_covariance(const Eigen::VectorXd& sigma, const Eigen::VectorXd& length,
                                 const Eigen::VectorXd& times);
Eigen::MatrixXd dense_covariance(const NonStationaryState& state, const Eigen::VectorXd& times);

} // namespace flexnoise
