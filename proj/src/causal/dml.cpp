#include "chimera/causal/dml.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "chimera/errors.hpp"

namespace chimera::causal {

void DmlConfig::validate() const {
  if (n_folds < 2) throw ConfigError("dml: n_folds must be >= 2");
  if (nuisance.n_trees < 1 || effect.n_trees < 1) throw ConfigError("dml: forests need at least one tree");
  if (nuisance.min_leaf < 1 || effect.min_leaf < 1) throw ConfigError("dml: min_leaf must be >= 1");
  if (!(ridge >= 0.0)) throw ConfigError("dml: ridge must be >= 0");
  for (double f : {nuisance.sample_fraction, effect.sample_fraction}) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("dml: sample_fraction must lie in (0, 1]");
  }
}

namespace {

Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

double variance(const Eigen::Ref<const Vector>& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().mean();
}

}  // namespace

Residuals cross_fit_residuals(const Matrix& x, const Matrix& t, const Matrix& y, const DmlConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = x.rows();
  if (t.rows() != n || y.rows() != n) throw DomainError("dml: feature, treatment and outcome rows differ");
  if (static_cast<std::size_t>(n) < cfg.min_rows) {
    throw InsufficientData(fmt::format("dml: {} observations, need at least {}", n, cfg.min_rows));
  }
  if (!x.allFinite() || !t.allFinite() || !y.allFinite()) throw DomainError("dml: non-finite values in data");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);

  Matrix targets(n, y.cols() + t.cols());
  targets << y, t;
  Matrix fitted(n, targets.cols());
  for (int fold = 0; fold < cfg.n_folds; ++fold) {
    std::vector<int> train, test;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (static_cast<int>(i % static_cast<std::size_t>(cfg.n_folds)) == fold ? test : train).push_back(order[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    TreeParams p = cfg.nuisance;
    p.seed = cfg.seed * 1000003u + static_cast<std::uint64_t>(fold) + 1;
    p.threads = cfg.threads;
    RegressionForest forest;
    forest.fit(take_rows(x, train), take_rows(targets, train), p);
    const Matrix pred = forest.predict(take_rows(x, test));
    for (std::size_t i = 0; i < test.size(); ++i) fitted.row(test[i]) = pred.row(static_cast<Eigen::Index>(i));
  }

  Residuals r;
  r.y = y - fitted.leftCols(y.cols());
  r.t = t - fitted.rightCols(t.cols());
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    const double raw = variance(t.col(j));
    const double res = variance(r.t.col(j));
    if (raw == 0.0 || res <= cfg.degenerate_tolerance * raw) {
      throw DegenerateTreatment(
          fmt::format("dml: treatment column {} has no variation left after conditioning on the state", j));
    }
  }
  return r;
}

DmlModel fit_dml(const Matrix& x, const Matrix& t, const Matrix& y, const DmlConfig& cfg) {
  const Residuals r = cross_fit_residuals(x, t, y, cfg);
  DmlModel model;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    TreeParams p = cfg.effect;
    p.seed = cfg.seed * 7919u + static_cast<std::uint64_t>(j) + 17;
    p.threads = cfg.threads;
    CausalForest forest;
    forest.fit(x, r.t, r.y.col(j), p, cfg.ridge);
    model.forests_.push_back(std::move(forest));
  }
  return model;
}

Vector DmlModel::theta(int outcome, const Vector& x) const { return forest(outcome).predict(x).theta; }

Effect DmlModel::effect(int outcome, const Vector& x, const Vector& dt) const {
  if (dt.size() != treatments()) throw DomainError("dml: treatment contrast has the wrong length");
  const EffectPrediction p = forest(outcome).predict(x);
  Effect e;
  e.value = dt.dot(p.theta);
  const Vector per_tree = p.tree_thetas * dt;
  e.tree_mean = per_tree.mean();
  e.tree_sd = per_tree.size() > 1
                  ? std::sqrt((per_tree.array() - e.tree_mean).square().sum() / static_cast<double>(per_tree.size() - 1))
                  : 0.0;
  return e;
}

void DmlModel::save(std::ostream& out) const {
  const auto n = static_cast<std::uint32_t>(forests_.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto& f : forests_) f.save(out);
}

DmlModel DmlModel::load(std::istream& in) {
  std::uint32_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n == 0 || n > 64) throw DomainError("corrupt model data");
  DmlModel m;
  for (std::uint32_t i = 0; i < n; ++i) m.forests_.push_back(CausalForest::load(in));
  for (const auto& f : m.forests_) {
    if (f.treatments() != m.treatments() || f.features() != m.features()) throw DomainError("corrupt model data");
  }
  return m;
}

}  // namespace chimera::causal
