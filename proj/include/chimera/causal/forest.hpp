#pragma once

// Random forests used by the double-ML estimator.
//
// RegressionForest is a multi-output regression forest (nuisance models
// E[Y|X], E[T|X]). CausalForest is an honest, gradient-split forest for a
// varying-coefficient model  y~ = t~' theta(x) + e  on residualized data: splits
// are chosen on pseudo-outcomes rho_i = A_P^-1 t~_i (y~_i - t~_i' theta_P), and
// leaves keep the moment statistics A = mean t~ t~', b = mean t~ y~ of a
// held-out half so predictions are forest-weighted local least squares.
//
// Features are quantile-binned once per fit (at most max_bins per column), so
// split search is a histogram sweep.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace chimera::causal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct TreeParams {
  int n_trees = 100;
  int min_leaf = 10;
  int max_depth = 20;
  /// Features tried per split; 0 means all.
  int mtry = 0;
  double sample_fraction = 0.5;
  int max_bins = 64;
  std::uint64_t seed = 1;
  /// Worker threads for tree growth; results do not depend on it.
  int threads = 1;
};

/// Per-feature split thresholds. code(x) = number of thresholds <= x, so a
/// split "code <= b" is the raw test x < thresholds[b].
class Binner {
 public:
  Binner() = default;
  Binner(const Matrix& x, int max_bins);

  int features() const { return static_cast<int>(thresholds_.size()); }
  int bins(int feature) const { return static_cast<int>(thresholds_[feature].size()) + 1; }
  double threshold(int feature, int bin) const { return thresholds_[feature][bin]; }
  std::uint8_t code(int feature, double value) const;
  /// Column-major codes for every row of x.
  std::vector<std::uint8_t> encode(const Matrix& x) const;

 private:
  std::vector<std::vector<double>> thresholds_;
};

struct Node {
  std::int32_t feature = -1;  ///< -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;   ///< child index, or leaf slot when feature == -1
  std::int32_t right = -1;
};

struct Tree {
  std::vector<Node> nodes;
  int leaf_for(const double* x, Eigen::Index stride) const;
};

class RegressionForest {
 public:
  void fit(const Matrix& x, const Matrix& y, const TreeParams& params);
  Vector predict(const Matrix& x, Eigen::Index row) const;
  Matrix predict(const Matrix& x) const;
  int outputs() const { return outputs_; }
  bool fitted() const { return !trees_.empty(); }

 private:
  int outputs_ = 0;
  std::vector<Tree> trees_;
  std::vector<Matrix> leaf_values_;  ///< per tree: leaves x outputs
};

struct EffectPrediction {
  Vector theta;           ///< forest-weighted local least squares
  Matrix tree_thetas;     ///< trees x k, per-tree leaf solutions
};

class CausalForest {
 public:
  /// t_res: n x k residualized treatments, y_res: n residualized outcomes.
  void fit(const Matrix& x, const Matrix& t_res, const Vector& y_res, const TreeParams& params, double ridge);
  EffectPrediction predict(const Matrix& x, Eigen::Index row) const;
  EffectPrediction predict(const Vector& x) const;

  int treatments() const { return k_; }
  int features() const { return d_; }
  bool fitted() const { return !trees_.empty(); }
  std::size_t leaves() const;

  void save(std::ostream& out) const;
  static CausalForest load(std::istream& in);

 private:
  EffectPrediction predict_raw(const double* x, Eigen::Index stride) const;
  void finalize();

  int k_ = 0;
  int d_ = 0;
  double lambda_ = 0.0;
  std::vector<Tree> trees_;
  // Per tree, per leaf: A (k*k, row-major) and b (k) from the estimation half.
  std::vector<std::vector<double>> leaf_a_;
  std::vector<std::vector<double>> leaf_b_;
  std::vector<Matrix> leaf_theta_;  ///< derived on fit/load: leaves x k
};

}  // namespace chimera::causal
