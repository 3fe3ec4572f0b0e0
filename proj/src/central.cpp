#include "dpsse/central.hpp"

#include <algorithm>
#include <cmath>

namespace dpsse {

namespace {

Eigen::SparseMatrix<double> drop_rows(const Eigen::SparseMatrix<double>& H, const std::vector<bool>& keep) {
    int kept = static_cast<int>(std::count(keep.begin(), keep.end(), true));
    std::vector<int> new_row(H.rows(), -1);
    int r = 0;
    for (int i = 0; i < H.rows(); ++i) {
        if (keep[i]) new_row[i] = r++;
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(H);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < H.rows(); ++i) {
        if (new_row[i] < 0) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, i); it; ++it) {
            trips.emplace_back(new_row[i], static_cast<int>(it.col()), it.value());
        }
    }
    Eigen::SparseMatrix<double> out(kept, H.cols());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& z, const std::vector<bool>& keep) {
    Eigen::VectorXd out(std::count(keep.begin(), keep.end(), true));
    int r = 0;
    for (int i = 0; i < z.size(); ++i) {
        if (keep[i]) out(r++) = z(i);
    }
    return out;
}

}  // namespace

NormalSolver::NormalSolver(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& reg_diag) {
    Eigen::SparseMatrix<double> normal = Eigen::SparseMatrix<double>(H.transpose()) * H;
    if (reg_diag.size() > 0) {
        Eigen::SparseMatrix<double> reg(H.cols(), H.cols());
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < reg_diag.size(); ++i) {
            if (reg_diag(i) != 0.0) trips.emplace_back(i, i, reg_diag(i));
        }
        reg.setFromTriplets(trips.begin(), trips.end());
        normal += reg;
    }
    ldlt_.compute(normal);
    double max_diag = 0.0;
    for (int i = 0; i < normal.rows(); ++i) max_diag = std::max(max_diag, std::abs(normal.coeff(i, i)));
    if (ldlt_.info() != Eigen::Success || max_diag == 0.0) {
        rank_deficient_ = true;
    } else {
        Eigen::VectorXd d = ldlt_.vectorD();
        if (d.size() == 0 || d.minCoeff() <= 1e-12 * max_diag) rank_deficient_ = true;
    }
    if (rank_deficient_) {
        Eigen::MatrixXd dense(normal);
        cod_.compute(dense);
    }
}

Eigen::VectorXd NormalSolver::solve(const Eigen::VectorXd& rhs) const {
    if (!rank_deficient_) return ldlt_.solve(rhs);
    return cod_.solve(rhs);  // minimum-norm solution of the normal equations
}

Eigen::VectorXd NormalSolver::solve_ls(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z) const {
    if (!rank_deficient_) return ldlt_.solve(H.transpose() * z);
    // minimum-norm least squares via the dense orthogonal decomposition of H
    Eigen::MatrixXd dense(H);
    return dense.completeOrthogonalDecomposition().solve(z);
}

WlsSolution solve_wls(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z) {
    NormalSolver solver(H);
    return {solver.solve_ls(H, z), solver.rank_deficient()};
}

namespace {

ResidualAnalysis analyze(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, const NormalSolver& solver,
                         Eigen::VectorXd* x_out) {
    if (solver.rank_deficient()) throw UnobservableError("residual analysis requires full column rank");
    Eigen::VectorXd x = solver.solve(H.transpose() * z);
    if (x_out) *x_out = x;

    ResidualAnalysis out;
    out.r = z - H * x;
    out.p_diag.resize(H.rows());
    out.critical.assign(H.rows(), false);
    Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(H);
    for (int i = 0; i < H.rows(); ++i) {
        Eigen::VectorXd h = Eigen::VectorXd::Zero(H.cols());
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, i); it; ++it) {
            h(it.col()) = it.value();
        }
        double pii = 1.0 - h.dot(solver.solve(h));
        out.p_diag(i) = pii;
        if (pii <= kCriticalEps) {
            out.critical[i] = true;
            continue;
        }
        double rn = std::abs(out.r(i)) / std::sqrt(pii);
        if (rn > out.r_norm_max) {
            out.r_norm_max = rn;
            out.argmax_row = i;
        }
    }
    return out;
}

}  // namespace

ResidualAnalysis residual_analysis(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z) {
    NormalSolver solver(H);
    return analyze(H, z, solver, nullptr);
}

double normal_quantile(double p) {
    // Acklam's rational approximation, |relative error| < 1.15e-9
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    if (p <= 0.0 || p >= 1.0) throw ContractError("normal quantile requires 0 < p < 1");
    double q, r;
    if (p < 0.02425) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - 0.02425) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double chi2_quantile(double p, int dof) {
    if (dof <= 0) throw ContractError("chi2 quantile requires positive degrees of freedom");
    // Wilson-Hilferty: chi2_p(k) ~ k (1 - 2/(9k) + z_p sqrt(2/(9k)))^3
    double k = dof;
    double t = 1.0 - 2.0 / (9.0 * k) + normal_quantile(p) * std::sqrt(2.0 / (9.0 * k));
    return k * t * t * t;
}

Chi2Verdict chi2_test(const ResidualAnalysis& analysis, int m, int n, double confidence) {
    if (m <= n) throw ContractError("chi2 test needs M > N degrees of freedom");
    double threshold = chi2_quantile(confidence, m - n);
    return analysis.r.squaredNorm() > threshold ? Chi2Verdict::Suspect : Chi2Verdict::Clean;
}

RobustEstimate lnrt_estimate(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, double threshold) {
    const int m = static_cast<int>(H.rows());
    std::vector<bool> keep(m, true);
    RobustEstimate out;
    out.o = Eigen::VectorXd::Zero(m);

    while (true) {
        Eigen::SparseMatrix<double> Hk = drop_rows(H, keep);
        Eigen::VectorXd zk = select_rows(z, keep);
        NormalSolver solver(Hk);
        ResidualAnalysis analysis;
        try {
            analysis = analyze(Hk, zk, solver, &out.x);
        } catch (const UnobservableError&) {
            if (out.iterations == 0) throw;  // initial system already unobservable
            out.rank_flag = true;
            break;
        }
        ++out.iterations;
        if (analysis.argmax_row < 0 || analysis.r_norm_max <= threshold) break;
        // map the reduced-row index back to the global row and delete it
        int global = -1, seen = -1;
        for (int i = 0; i < m; ++i) {
            if (keep[i] && ++seen == analysis.argmax_row) {
                global = i;
                break;
            }
        }
        keep[global] = false;
        out.identified.push_back(global);
    }
    std::sort(out.identified.begin(), out.identified.end());
    for (int i : out.identified) out.o(i) = z(i) - H.row(i).dot(out.x);
    return out;
}

RobustEstimate huber_estimate(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, double lambda,
                              double tol, int max_iter) {
    if (lambda < 0.0) throw ContractError("lambda must be nonnegative");
    NormalSolver solver(H);
    RobustEstimate out;
    out.rank_flag = solver.rank_deficient();
    Eigen::VectorXd o = Eigen::VectorXd::Zero(H.rows());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(H.cols());
    for (int t = 0; t < max_iter; ++t) {
        Eigen::VectorXd x_next = solver.rank_deficient() ? solver.solve_ls(H, z - o)
                                                         : solver.solve(H.transpose() * (z - o));
        Eigen::VectorXd resid = z - H * x_next;
        for (int i = 0; i < o.size(); ++i) o(i) = soft_threshold(resid(i), lambda);
        ++out.iterations;
        if (t > 0 && (x_next - x).norm() < tol) {
            x = x_next;
            break;
        }
        x = x_next;
    }
    out.x = x;
    out.o = o;
    for (int i = 0; i < o.size(); ++i) {
        if (o(i) != 0.0) out.identified.push_back(i);
    }
    return out;
}

WlsSolution genie_lse(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z,
                      const std::vector<bool>& bad_mask) {
    std::vector<bool> keep(bad_mask.size());
    for (size_t i = 0; i < bad_mask.size(); ++i) keep[i] = !bad_mask[i];
    Eigen::SparseMatrix<double> Hc = drop_rows(H, keep);
    Eigen::VectorXd zc = select_rows(z, keep);
    NormalSolver solver(Hc);
    if (solver.rank_deficient()) {
        throw UnobservableError("removing the corrupted rows leaves an unobservable system");
    }
    return {solver.solve(Hc.transpose() * zc), false};
}

std::vector<int> l0_identify(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& z, int tau0) {
    const int m = static_cast<int>(H.rows());
    const int n = static_cast<int>(H.cols());
    if (tau0 < 0 || tau0 > 2) throw ContractError("l0_identify supports tau0 in {0, 1, 2}");
    if (m - tau0 < n) throw ContractError("too few rows: need M - tau0 >= N");

    auto score = [&](const std::vector<bool>& keep) {
        Eigen::SparseMatrix<double> Hk = drop_rows(H, keep);
        Eigen::VectorXd zk = select_rows(z, keep);
        NormalSolver solver(Hk);
        Eigen::VectorXd x = solver.solve_ls(Hk, zk);
        return 0.5 * (zk - Hk * x).squaredNorm();
    };

    std::vector<bool> keep(m, true);
    double best = score(keep);
    std::vector<int> best_set;

    if (tau0 >= 1) {
        for (int i = 0; i < m; ++i) {
            keep[i] = false;
            double s = score(keep);
            if (s < best) {
                best = s;
                best_set = {i};
            }
            keep[i] = true;
        }
    }
    if (tau0 >= 2) {
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                keep[i] = keep[j] = false;
                double s = score(keep);
                if (s < best) {
                    best = s;
                    best_set = {i, j};
                }
                keep[i] = keep[j] = true;
            }
        }
    }
    return best_set;
}

}  // namespace dpsse
