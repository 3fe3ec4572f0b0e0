#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "dpsse/common.hpp"

namespace dpsse {

/// Cached solver for the normal equations (H^T H + R) y = rhs with an
/// optional diagonal regularizer R. Falls back to the minimum-norm
/// least-squares solution when the normal matrix is rank deficient.
class NormalSolver {
  public:
    NormalSolver(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& reg_diag = {});

    bool rank_deficient() const { return rank_deficient_; }
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    /// Least-squares solve for z: x = argmin ||z - Hx|| (+ reg term if set).
    Eigen::VectorXd solve_ls(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z) const;

  private:
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;  // fallback
    bool rank_deficient_ = false;
};

struct WlsSolution {
    Eigen::VectorXd x;
    bool rank_deficient = false;
};

/// Minimizer of 0.5 ||z - Hx||^2 (minimum-norm solution when rank deficient).
WlsSolution solve_wls(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z);

inline constexpr double kCriticalEps = 1e-8;  // P(i,i) at or below this flags a critical row

struct ResidualAnalysis {
    Eigen::VectorXd r;       // z - H x_hat
    Eigen::VectorXd p_diag;  // residual sensitivity matrix diagonal
    std::vector<bool> critical;
    double r_norm_max = 0.0;  // max over non-critical rows of |r|/sqrt(P_ii)
    int argmax_row = -1;
};

/// Throws UnobservableError when H is rank deficient.
ResidualAnalysis residual_analysis(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z);

enum class Chi2Verdict { Clean, Suspect };

/// chi-square detection test on ||r||^2 with M - N degrees of freedom,
/// quantile via the Wilson-Hilferty approximation.
Chi2Verdict chi2_test(const ResidualAnalysis& analysis, int m, int n, double confidence);

double chi2_quantile(double p, int dof);
double normal_quantile(double p);

/// Soft-threshold shrinkage: x+l below -l, 0 inside [-l, l], x-l above l.
inline double soft_threshold(double x, double lambda) {
    if (x > lambda) return x - lambda;
    if (x < -lambda) return x + lambda;
    return 0.0;
}

struct RobustEstimate {
    Eigen::VectorXd x;
    Eigen::VectorXd o;            // length M, nonzero exactly on identified rows
    int iterations = 0;
    std::vector<int> identified;  // rows, ascending
    bool rank_flag = false;       // a solve hit rank deficiency along the way
};

/// Iterated largest-normalized-residual estimator: WLS, delete the row with
/// the largest normalized residual while it exceeds `threshold`, repeat.
RobustEstimate lnrt_estimate(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, double threshold);

/// Joint state / bad-data estimator: alternate the bad-data-compensated WLS
/// with entry-wise soft thresholding of the residual until the state moves
/// less than `tol`.
RobustEstimate huber_estimate(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, double lambda,
                              double tol = 1e-4, int max_iter = 500);

/// WLS on the rows whose bad_mask entry is false.
WlsSolution genie_lse(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z,
                      const std::vector<bool>& bad_mask);

/// Exhaustive cardinality-constrained search: over all row subsets of size
/// at most tau0 (tau0 <= 2), minimize the WLS residual with those rows
/// removed. Returns the minimizing subset, ascending.
std::vector<int> l0_identify(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, int tau0);

}  // namespace dpsse
