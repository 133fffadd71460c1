#pragma once

// Ordinary least squares with an intercept, Wald t-tests on the slopes and
// the joint F-test of all slopes.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fairedu/error.hpp"
#include "fairedu/special_functions.hpp"

namespace fairedu {

template <typename Scalar>
struct RegressionFit {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar intercept = 0;
  Vector slopes;      // k
  Vector std_errors;  // k + 1, intercept first
  Vector t_stats;     // k
  Vector p_values;    // k, two-sided
  Scalar f_stat = 0;
  Scalar f_p_value = 1;
  Scalar rss = 0;
  Scalar tss = 0;
  Vector residuals;   // n
  std::int64_t dof = 0;

  Eigen::Index regressor_count() const { return slopes.size(); }
  Eigen::Index observation_count() const { return residuals.size(); }
};

/// p-value of H0: every slope is zero. RSS = 0 with TSS > 0 gives 0, and a
/// constant response (TSS = 0) gives 1.
template <typename Scalar>
Scalar f_test_p_value(const RegressionFit<Scalar>& fit) {
  return fit.f_p_value;
}

/// Orthogonal (column-pivoted QR) factorization of the design [1 | X].
/// Factor once, then fit any number of responses against the same
/// regressors.
template <typename Scalar>
class LeastSquaresDesign {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr double kRankTolerance = 1e-10;

  explicit LeastSquaresDesign(const Eigen::Ref<const Matrix>& regressors,
                              std::vector<std::string> names = {})
      : names_(std::move(names)) {
    const Eigen::Index n = regressors.rows();
    const Eigen::Index k = regressors.cols();
    if (!names_.empty() && static_cast<Eigen::Index>(names_.size()) != k) {
      throw ShapeError("regressor name count does not match column count");
    }
    if (n <= k + 1) {
      throw DofError("least squares needs n >= k + 2 (n = " + std::to_string(n) +
                     ", k = " + std::to_string(k) + ")");
    }
    if (!regressors.allFinite()) throw NumericError("non-finite regressor value");

    design_.resize(n, k + 1);
    design_.col(0).setOnes();
    design_.rightCols(k) = regressors;
    qr_.compute(design_);

    const Matrix r = qr_.matrixQR().topRows(k + 1).template triangularView<Eigen::Upper>();
    const Vector singular = Eigen::JacobiSVD<Matrix>(r).singularValues();
    const Scalar cutoff = Scalar(kRankTolerance) * singular(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < singular.size(); ++i) {
      if (singular(i) > cutoff) ++rank;
    }
    if (rank < k + 1) {
      std::vector<std::string> deficient;
      const auto& perm = qr_.colsPermutation().indices();
      for (Eigen::Index i = rank; i < k + 1; ++i) deficient.push_back(column_name(perm(i)));
      std::string what = "rank-deficient design (rank " + std::to_string(rank) + " < " +
                         std::to_string(k + 1) + "); colliding columns:";
      for (const auto& c : deficient) what += " " + c;
      throw RankError(what, std::move(deficient));
    }

    // diag((D'D)^-1) = diag(P R^-1 R^-T P')
    const Matrix r_inv = r.template triangularView<Eigen::Upper>().solve(
        Matrix::Identity(k + 1, k + 1));
    const Vector permuted_diag = r_inv.rowwise().squaredNorm();
    unscaled_variance_.resize(k + 1);
    const auto& perm = qr_.colsPermutation().indices();
    for (Eigen::Index i = 0; i < k + 1; ++i) unscaled_variance_(perm(i)) = permuted_diag(i);
  }

  Eigen::Index rows() const { return design_.rows(); }
  Eigen::Index regressor_count() const { return design_.cols() - 1; }

  RegressionFit<Scalar> fit(const Eigen::Ref<const Vector>& response) const {
    const Eigen::Index n = rows();
    const Eigen::Index k = regressor_count();
    if (response.size() != n) throw ShapeError("response length does not match design rows");
    if (!response.allFinite()) throw NumericError("non-finite response value");

    RegressionFit<Scalar> out;
    const Vector coef = qr_.solve(response);
    out.intercept = coef(0);
    out.slopes = coef.tail(k);
    out.residuals = response - design_ * coef;
    out.dof = static_cast<std::int64_t>(n - k - 1);

    const Scalar mean = response.mean();
    out.tss = (response.array() - mean).square().sum();
    out.rss = out.residuals.squaredNorm();
    const Scalar s2 = out.rss / Scalar(out.dof);

    out.std_errors = (s2 * unscaled_variance_).cwiseSqrt();
    out.t_stats.resize(k);
    out.p_values.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const Scalar b = out.slopes(j);
      const Scalar se = out.std_errors(j + 1);
      Scalar t;
      if (se > 0) {
        t = b / se;
      } else {
        t = b == 0 ? Scalar(0) : std::copysign(std::numeric_limits<Scalar>::infinity(), b);
      }
      out.t_stats(j) = t;
      out.p_values(j) = student_t_two_sided_p(t, out.dof);
    }

    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    const Scalar scale = response.cwiseAbs().maxCoeff();
    const Scalar tss_floor = Scalar(n) * (Scalar(64) * eps * scale) * (Scalar(64) * eps * scale);
    const Scalar rss_floor = (Scalar(64) * Scalar(n) * eps) * (Scalar(64) * Scalar(n) * eps) * out.tss;
    if (out.tss <= tss_floor) {
      out.f_stat = 0;
      out.f_p_value = 1;
    } else if (out.rss <= rss_floor) {
      out.f_stat = std::numeric_limits<Scalar>::infinity();
      out.f_p_value = 0;
    } else {
      const Scalar explained = std::max(out.tss - out.rss, Scalar(0));
      out.f_stat = (explained / Scalar(k)) / s2;
      out.f_p_value = f_distribution_sf(out.f_stat, k, out.dof);
    }
    return out;
  }

 private:
  std::string column_name(Eigen::Index design_col) const {
    if (design_col == 0) return "intercept";
    const auto j = static_cast<std::size_t>(design_col - 1);
    return j < names_.size() ? names_[j] : "x" + std::to_string(j);
  }

  std::vector<std::string> names_;
  Matrix design_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
  Vector unscaled_variance_;
};

/// Regress y on an intercept plus the columns of X.
template <typename DerivedY, typename DerivedX>
RegressionFit<typename DerivedY::Scalar> ols_fit(const Eigen::MatrixBase<DerivedY>& y,
                                                 const Eigen::MatrixBase<DerivedX>& x) {
  using Scalar = typename DerivedY::Scalar;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> regressors = x;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> response = y;
  return LeastSquaresDesign<Scalar>(regressors).fit(response);
}

}  // namespace fairedu
