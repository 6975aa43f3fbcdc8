#pragma once

// Cross-fitted double machine learning with a causal-forest final stage.
//
//   1. Split rows into K folds. For each fold, fit one multi-output forest
//      on the other folds for E[Y|X] and E[T|X] and predict the held-out fold.
//   2. Residualize: Y~ = Y - m(X), T~ = T - e(X).
//   3. Per outcome, fit a CausalForest of Y~ on T~ over X, giving theta(x).
//
// The effect of moving the treatment from t0 to t at state x is
// (t - t0)' theta(x); callers featurize treatments so that the reference
// maps to zero.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "chimera/causal/forest.hpp"

namespace chimera::causal {

struct DmlConfig {
  int n_folds = 3;
  TreeParams nuisance{.n_trees = 60, .min_leaf = 10, .max_depth = 16, .mtry = 0, .sample_fraction = 0.5};
  TreeParams effect{.n_trees = 200, .min_leaf = 20, .max_depth = 16, .mtry = 0, .sample_fraction = 0.5};
  double ridge = 1e-3;
  std::size_t min_rows = 200;
  /// A treatment column whose residual variance falls below this fraction
  /// of its raw variance (or is zero) is rejected as degenerate.
  double degenerate_tolerance = 1e-6;
  std::uint64_t seed = 7;
  int threads = 1;

  void validate() const;
};

struct Residuals {
  Matrix t;  ///< n x k
  Matrix y;  ///< n x m
};

/// Step 1-2 alone; exposed for diagnostics and tests.
Residuals cross_fit_residuals(const Matrix& x, const Matrix& t, const Matrix& y, const DmlConfig& cfg);

struct Effect {
  double value = 0.0;
  double tree_sd = 0.0;  ///< dispersion of per-tree effects
  double tree_mean = 0.0;
};

class DmlModel {
 public:
  int outcomes() const { return static_cast<int>(forests_.size()); }
  int treatments() const { return forests_.empty() ? 0 : forests_.front().treatments(); }
  int features() const { return forests_.empty() ? 0 : forests_.front().features(); }

  Vector theta(int outcome, const Vector& x) const;
  /// Effect of treatment contrast `dt` (length k) at features x.
  Effect effect(int outcome, const Vector& x, const Vector& dt) const;

  const CausalForest& forest(int outcome) const { return forests_[static_cast<std::size_t>(outcome)]; }

  void save(std::ostream& out) const;
  static DmlModel load(std::istream& in);

 private:
  friend DmlModel fit_dml(const Matrix&, const Matrix&, const Matrix&, const DmlConfig&);
  std::vector<CausalForest> forests_;
};

/// Throws InsufficientData below cfg.min_rows and DegenerateTreatment when a
/// treatment column is (conditionally) constant.
DmlModel fit_dml(const Matrix& x, const Matrix& t, const Matrix& y, const DmlConfig& cfg);

}  // namespace chimera::causal
