#include "chimera/causal/forest.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "chimera/errors.hpp"

namespace chimera::causal {

Binner::Binner(const Matrix& x, int max_bins) {
  max_bins = std::clamp(max_bins, 2, 256);
  thresholds_.resize(static_cast<std::size_t>(x.cols()));
  std::vector<double> v(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) v[static_cast<std::size_t>(i)] = x(i, f);
    std::sort(v.begin(), v.end());
    std::vector<double> uniq = v;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    auto& t = thresholds_[static_cast<std::size_t>(f)];
    if (static_cast<int>(uniq.size()) <= max_bins) {
      for (std::size_t j = 1; j < uniq.size(); ++j) t.push_back(0.5 * (uniq[j - 1] + uniq[j]));
    } else {
      for (int q = 1; q < max_bins; ++q) {
        const double cut = v[v.size() * static_cast<std::size_t>(q) / static_cast<std::size_t>(max_bins)];
        if (cut > v.front() && (t.empty() || cut > t.back())) t.push_back(cut);
      }
    }
  }
}

std::uint8_t Binner::code(int feature, double value) const {
  const auto& t = thresholds_[static_cast<std::size_t>(feature)];
  return static_cast<std::uint8_t>(std::upper_bound(t.begin(), t.end(), value) - t.begin());
}

std::vector<std::uint8_t> Binner::encode(const Matrix& x) const {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::uint8_t> codes(n * thresholds_.size());
  for (int f = 0; f < features(); ++f) {
    for (std::size_t i = 0; i < n; ++i) codes[static_cast<std::size_t>(f) * n + i] = code(f, x(static_cast<Eigen::Index>(i), f));
  }
  return codes;
}

int Tree::leaf_for(const double* x, Eigen::Index stride) const {
  std::int32_t at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const Node& n = nodes[static_cast<std::size_t>(at)];
    at = x[n.feature * stride] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(at)].left;
}

namespace {

std::mt19937_64 tree_rng(std::uint64_t seed, int tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree), 0x5eedu};
  return std::mt19937_64(seq);
}

std::vector<int> pick_features(int d, int mtry, std::mt19937_64& rng) {
  std::vector<int> f(static_cast<std::size_t>(d));
  std::iota(f.begin(), f.end(), 0);
  if (mtry <= 0 || mtry >= d) return f;
  for (int i = 0; i < mtry; ++i) {
    std::uniform_int_distribution<int> pick(i, d - 1);
    std::swap(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(pick(rng))]);
  }
  f.resize(static_cast<std::size_t>(mtry));
  return f;
}

template <class Fn>
void parallel_trees(int n_trees, int threads, Fn&& grow) {
  threads = std::clamp(threads, 1, std::max(1, n_trees));
  if (threads == 1) {
    for (int b = 0; b < n_trees; ++b) grow(b);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int b = w; b < n_trees; b += threads) grow(b);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<int> subsample(int n, double fraction, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto m = std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n);
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

// ---- regression trees -------------------------------------------------------

struct RegressionGrower {
  const Binner& binner;
  const std::vector<std::uint8_t>& codes;
  const Matrix& y;                  // raw outputs
  const std::vector<double>& y_std;  // standardized outputs, row-major, used for split gains
  const TreeParams& params;
  std::size_t n;
  std::mt19937_64 rng;
  Tree tree;
  std::vector<Vector> leaves;

  std::int32_t grow(std::vector<int>& idx, std::size_t lo, std::size_t hi, int depth) {
    const std::size_t count = hi - lo;
    const auto q = y.cols();
    const auto uq = static_cast<std::size_t>(q);
    const auto node_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();

    int best_f = -1, best_b = -1;
    double best_gain = 1e-12;
    if (count >= static_cast<std::size_t>(2 * params.min_leaf) && depth < params.max_depth) {
      std::vector<double> total(uq, 0.0);
      for (std::size_t i = lo; i < hi; ++i) {
        const double* row = y_std.data() + static_cast<std::size_t>(idx[i]) * uq;
        for (std::size_t j = 0; j < uq; ++j) total[j] += row[j];
      }
      double parent = 0.0;
      for (double v : total) parent += v * v;
      parent /= static_cast<double>(count);
      std::vector<std::size_t> cnt;
      std::vector<double> sum, left(uq);
      for (int f : pick_features(binner.features(), params.mtry, rng)) {
        const int nb = binner.bins(f);
        if (nb < 2) continue;
        cnt.assign(static_cast<std::size_t>(nb), 0);
        sum.assign(static_cast<std::size_t>(nb) * uq, 0.0);
        const std::uint8_t* col = codes.data() + static_cast<std::size_t>(f) * n;
        for (std::size_t i = lo; i < hi; ++i) {
          const auto r = static_cast<std::size_t>(idx[i]);
          const std::size_t b = col[r];
          ++cnt[b];
          const double* row = y_std.data() + r * uq;
          double* acc = sum.data() + b * uq;
          for (std::size_t j = 0; j < uq; ++j) acc[j] += row[j];
        }
        std::size_t n_left = 0;
        std::fill(left.begin(), left.end(), 0.0);
        for (int b = 0; b + 1 < nb; ++b) {
          n_left += cnt[static_cast<std::size_t>(b)];
          const double* acc = sum.data() + static_cast<std::size_t>(b) * uq;
          for (std::size_t j = 0; j < uq; ++j) left[j] += acc[j];
          const std::size_t n_right = count - n_left;
          if (n_left < static_cast<std::size_t>(params.min_leaf)) continue;
          if (n_right < static_cast<std::size_t>(params.min_leaf)) break;
          double l2 = 0.0, r2 = 0.0;
          for (std::size_t j = 0; j < uq; ++j) {
            l2 += left[j] * left[j];
            const double rj = total[j] - left[j];
            r2 += rj * rj;
          }
          const double gain = l2 / static_cast<double>(n_left) + r2 / static_cast<double>(n_right) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_f = f;
            best_b = b;
          }
        }
      }
    }

    if (best_f < 0) {
      Vector value(q);
      for (Eigen::Index j = 0; j < q; ++j) {
        const double first = y(idx[lo], j);
        double s = 0.0;
        bool constant = true;
        for (std::size_t i = lo; i < hi; ++i) {
          s += y(idx[i], j);
          constant = constant && y(idx[i], j) == first;
        }
        value(j) = constant ? first : s / static_cast<double>(count);
      }
      tree.nodes[static_cast<std::size_t>(node_id)].left = static_cast<std::int32_t>(leaves.size());
      leaves.push_back(std::move(value));
      return node_id;
    }

    const std::uint8_t* col = codes.data() + static_cast<std::size_t>(best_f) * n;
    const auto mid = static_cast<std::size_t>(
        std::partition(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi),
                       [&](int r) { return col[r] <= best_b; }) -
        idx.begin());
    const std::int32_t l = grow(idx, lo, mid, depth + 1);
    const std::int32_t r = grow(idx, mid, hi, depth + 1);
    Node& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = best_f;
    node.threshold = binner.threshold(best_f, best_b);
    node.left = l;
    node.right = r;
    return node_id;
  }
};

}  // namespace

void RegressionForest::fit(const Matrix& x, const Matrix& y, const TreeParams& params) {
  if (x.rows() != y.rows() || x.rows() == 0) throw DomainError("regression forest: empty or mismatched data");
  const Binner binner(x, params.max_bins);
  const auto codes = binner.encode(x);
  std::vector<double> y_std(static_cast<std::size_t>(y.size()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double mean = y.col(j).mean();
    const double sd = std::sqrt((y.col(j).array() - mean).square().mean());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      y_std[static_cast<std::size_t>(i * y.cols() + j)] = (y(i, j) - mean) / (sd > 0.0 ? sd : 1.0);
    }
  }
  outputs_ = static_cast<int>(y.cols());
  trees_.assign(static_cast<std::size_t>(params.n_trees), Tree{});
  leaf_values_.assign(static_cast<std::size_t>(params.n_trees), Matrix{});
  const int n = static_cast<int>(x.rows());
  parallel_trees(params.n_trees, params.threads, [&](int b) {
    RegressionGrower g{binner, codes, y, y_std, params, static_cast<std::size_t>(n), tree_rng(params.seed, b), {}, {}};
    auto idx = subsample(n, params.sample_fraction, g.rng);
    g.grow(idx, 0, idx.size(), 0);
    Matrix values(static_cast<Eigen::Index>(g.leaves.size()), y.cols());
    for (std::size_t l = 0; l < g.leaves.size(); ++l) values.row(static_cast<Eigen::Index>(l)) = g.leaves[l].transpose();
    trees_[static_cast<std::size_t>(b)] = std::move(g.tree);
    leaf_values_[static_cast<std::size_t>(b)] = std::move(values);
  });
}

Vector RegressionForest::predict(const Matrix& x, Eigen::Index row) const {
  Vector sum = Vector::Zero(outputs_);
  Vector first(outputs_);
  std::vector<bool> constant(static_cast<std::size_t>(outputs_), true);
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    const int leaf = trees_[b].leaf_for(x.data() + row, x.rows());
    const auto v = leaf_values_[b].row(leaf);
    if (b == 0) first = v.transpose();
    for (int j = 0; j < outputs_; ++j) constant[static_cast<std::size_t>(j)] = constant[static_cast<std::size_t>(j)] && v(j) == first(j);
    sum += v.transpose();
  }
  Vector out = sum / static_cast<double>(trees_.size());
  for (int j = 0; j < outputs_; ++j) {
    if (constant[static_cast<std::size_t>(j)]) out(j) = first(j);
  }
  return out;
}

Matrix RegressionForest::predict(const Matrix& x) const {
  Matrix out(x.rows(), outputs_);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = predict(x, i).transpose();
  return out;
}

// ---- causal trees -----------------------------------------------------------

namespace {

struct CausalGrower {
  const Binner& binner;
  const std::vector<std::uint8_t>& codes;
  const Matrix& t;
  const Vector& y;
  const TreeParams& params;
  double lambda;
  std::size_t n;
  std::mt19937_64 rng;
  Tree tree;
  std::vector<double> leaf_a;
  std::vector<double> leaf_b;

  std::int32_t grow(std::vector<int>& s, std::size_t s_lo, std::size_t s_hi, std::vector<int>& e, std::size_t e_lo,
                    std::size_t e_hi, int depth) {
    const auto k = t.cols();
    const std::size_t ns = s_hi - s_lo;
    const std::size_t ne = e_hi - e_lo;
    const auto min_leaf = static_cast<std::size_t>(params.min_leaf);
    const auto node_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();

    int best_f = -1, best_b = -1;
    if (ns >= 2 * min_leaf && ne >= 2 * min_leaf && depth < params.max_depth) {
      const auto uk = static_cast<std::size_t>(k);
      Matrix a = Matrix::Zero(k, k);
      Vector rhs = Vector::Zero(k);
      for (std::size_t i = s_lo; i < s_hi; ++i) {
        const auto ti = t.row(s[i]).transpose();
        a.noalias() += ti * ti.transpose();
        rhs += ti * y(s[i]);
      }
      a /= static_cast<double>(ns);
      rhs /= static_cast<double>(ns);
      a.diagonal().array() += lambda;
      const Eigen::LDLT<Matrix> solver(a);
      const Vector theta = solver.solve(rhs);
      Matrix rho(k, static_cast<Eigen::Index>(ns));
      for (std::size_t i = s_lo; i < s_hi; ++i) {
        const auto ti = t.row(s[i]).transpose();
        rho.col(static_cast<Eigen::Index>(i - s_lo)) = ti * (y(s[i]) - ti.dot(theta));
      }
      rho = solver.solve(rho);
      const double* rho_data = rho.data();  // column i holds sample s_lo + i
      std::vector<double> total(uk, 0.0);
      for (std::size_t i = 0; i < ns; ++i) {
        for (std::size_t j = 0; j < uk; ++j) total[j] += rho_data[i * uk + j];
      }
      double best_gain = 0.0;
      for (double v : total) best_gain += v * v;
      best_gain = best_gain / static_cast<double>(ns) + 1e-12;

      std::vector<std::size_t> cs, ce;
      std::vector<double> sum, left(uk);
      for (int f : pick_features(binner.features(), params.mtry, rng)) {
        const int nb = binner.bins(f);
        if (nb < 2) continue;
        const std::uint8_t* col = codes.data() + static_cast<std::size_t>(f) * n;
        cs.assign(static_cast<std::size_t>(nb), 0);
        ce.assign(static_cast<std::size_t>(nb), 0);
        sum.assign(static_cast<std::size_t>(nb) * uk, 0.0);
        for (std::size_t i = s_lo; i < s_hi; ++i) {
          const std::size_t b = col[s[i]];
          ++cs[b];
          const double* r = rho_data + (i - s_lo) * uk;
          double* acc = sum.data() + b * uk;
          for (std::size_t j = 0; j < uk; ++j) acc[j] += r[j];
        }
        for (std::size_t i = e_lo; i < e_hi; ++i) ++ce[col[e[i]]];
        std::size_t ls = 0, le = 0;
        std::fill(left.begin(), left.end(), 0.0);
        for (int b = 0; b + 1 < nb; ++b) {
          ls += cs[static_cast<std::size_t>(b)];
          le += ce[static_cast<std::size_t>(b)];
          const double* acc = sum.data() + static_cast<std::size_t>(b) * uk;
          for (std::size_t j = 0; j < uk; ++j) left[j] += acc[j];
          if (ls < min_leaf || le < min_leaf) continue;
          if (ns - ls < min_leaf || ne - le < min_leaf) break;
          double l2 = 0.0, r2 = 0.0;
          for (std::size_t j = 0; j < uk; ++j) {
            l2 += left[j] * left[j];
            const double rj = total[j] - left[j];
            r2 += rj * rj;
          }
          const double gain = l2 / static_cast<double>(ls) + r2 / static_cast<double>(ns - ls);
          if (gain > best_gain) {
            best_gain = gain;
            best_f = f;
            best_b = b;
          }
        }
      }
    }

    if (best_f < 0) {
      Matrix a = Matrix::Zero(k, k);
      Vector b = Vector::Zero(k);
      for (std::size_t i = e_lo; i < e_hi; ++i) {
        const auto ti = t.row(e[i]).transpose();
        a.noalias() += ti * ti.transpose();
        b += ti * y(e[i]);
      }
      a /= static_cast<double>(ne);
      b /= static_cast<double>(ne);
      tree.nodes[static_cast<std::size_t>(node_id)].left = static_cast<std::int32_t>(leaf_b.size() / static_cast<std::size_t>(k));
      for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < k; ++c) leaf_a.push_back(a(r, c));
      }
      for (Eigen::Index r = 0; r < k; ++r) leaf_b.push_back(b(r));
      return node_id;
    }

    const std::uint8_t* col = codes.data() + static_cast<std::size_t>(best_f) * n;
    const auto goes_left = [&](int r) { return col[r] <= best_b; };
    const auto s_mid = static_cast<std::size_t>(
        std::partition(s.begin() + static_cast<std::ptrdiff_t>(s_lo), s.begin() + static_cast<std::ptrdiff_t>(s_hi), goes_left) -
        s.begin());
    const auto e_mid = static_cast<std::size_t>(
        std::partition(e.begin() + static_cast<std::ptrdiff_t>(e_lo), e.begin() + static_cast<std::ptrdiff_t>(e_hi), goes_left) -
        e.begin());
    const std::int32_t l = grow(s, s_lo, s_mid, e, e_lo, e_mid, depth + 1);
    const std::int32_t r = grow(s, s_mid, s_hi, e, e_mid, e_hi, depth + 1);
    Node& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = best_f;
    node.threshold = binner.threshold(best_f, best_b);
    node.left = l;
    node.right = r;
    return node_id;
  }
};

}  // namespace

void CausalForest::fit(const Matrix& x, const Matrix& t_res, const Vector& y_res, const TreeParams& params,
                       double ridge) {
  if (x.rows() != t_res.rows() || x.rows() != y_res.size() || x.rows() < 4 * params.min_leaf) {
    throw DomainError("causal forest: too few or mismatched rows");
  }
  k_ = static_cast<int>(t_res.cols());
  d_ = static_cast<int>(x.cols());
  const Matrix gram = t_res.transpose() * t_res / static_cast<double>(t_res.rows());
  lambda_ = ridge * std::max(gram.diagonal().mean(), 1e-300);

  const Binner binner(x, params.max_bins);
  const auto codes = binner.encode(x);
  trees_.assign(static_cast<std::size_t>(params.n_trees), Tree{});
  leaf_a_.assign(trees_.size(), {});
  leaf_b_.assign(trees_.size(), {});
  const int n = static_cast<int>(x.rows());
  parallel_trees(params.n_trees, params.threads, [&](int b) {
    CausalGrower g{binner, codes, t_res, y_res, params, lambda_, static_cast<std::size_t>(n), tree_rng(params.seed, b),
                   {}, {}, {}};
    auto idx = subsample(n, params.sample_fraction, g.rng);
    const std::size_t half = idx.size() / 2;
    std::vector<int> s(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<int> e(idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end());
    g.grow(s, 0, s.size(), e, 0, e.size(), 0);
    trees_[static_cast<std::size_t>(b)] = std::move(g.tree);
    leaf_a_[static_cast<std::size_t>(b)] = std::move(g.leaf_a);
    leaf_b_[static_cast<std::size_t>(b)] = std::move(g.leaf_b);
  });
  finalize();
}

void CausalForest::finalize() {
  leaf_theta_.clear();
  const std::size_t kk = static_cast<std::size_t>(k_);
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    const std::size_t n_leaves = leaf_b_[b].size() / kk;
    Matrix theta(static_cast<Eigen::Index>(n_leaves), k_);
    for (std::size_t l = 0; l < n_leaves; ++l) {
      Matrix a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          leaf_a_[b].data() + l * kk * kk, k_, k_);
      a.diagonal().array() += lambda_;
      const Vector rhs = Eigen::Map<const Vector>(leaf_b_[b].data() + l * kk, k_);
      theta.row(static_cast<Eigen::Index>(l)) = a.ldlt().solve(rhs).transpose();
    }
    leaf_theta_.push_back(std::move(theta));
  }
}

std::size_t CausalForest::leaves() const {
  std::size_t total = 0;
  for (const auto& b : leaf_b_) total += b.size() / static_cast<std::size_t>(k_);
  return total;
}

EffectPrediction CausalForest::predict_raw(const double* x, Eigen::Index stride) const {
  if (!fitted()) throw DomainError("causal forest is not fitted");
  const std::size_t kk = static_cast<std::size_t>(k_);
  Matrix a = Matrix::Zero(k_, k_);
  Vector rhs = Vector::Zero(k_);
  EffectPrediction out;
  out.tree_thetas.resize(static_cast<Eigen::Index>(trees_.size()), k_);
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    const auto leaf = static_cast<std::size_t>(trees_[b].leaf_for(x, stride));
    a += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        leaf_a_[b].data() + leaf * kk * kk, k_, k_);
    rhs += Eigen::Map<const Vector>(leaf_b_[b].data() + leaf * kk, k_);
    out.tree_thetas.row(static_cast<Eigen::Index>(b)) = leaf_theta_[b].row(static_cast<Eigen::Index>(leaf));
  }
  const double scale = 1.0 / static_cast<double>(trees_.size());
  a *= scale;
  rhs *= scale;
  a.diagonal().array() += lambda_;
  out.theta = a.ldlt().solve(rhs);
  return out;
}

EffectPrediction CausalForest::predict(const Matrix& x, Eigen::Index row) const {
  return predict_raw(x.data() + row, x.rows());
}

EffectPrediction CausalForest::predict(const Vector& x) const {
  if (x.size() != d_) throw DomainError("causal forest: feature vector has the wrong length");
  return predict_raw(x.data(), 1);
}

// ---- binary persistence -----------------------------------------------------

namespace {

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DomainError("truncated forest data");
  return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 32)) throw DomainError("corrupt forest data");
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw DomainError("truncated forest data");
  }
  return v;
}

}  // namespace

void CausalForest::save(std::ostream& out) const {
  put<std::int32_t>(out, k_);
  put<std::int32_t>(out, d_);
  put<double>(out, lambda_);
  put<std::uint64_t>(out, trees_.size());
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    put<std::uint64_t>(out, trees_[b].nodes.size());
    for (const Node& n : trees_[b].nodes) {
      put(out, n.feature);
      put(out, n.threshold);
      put(out, n.left);
      put(out, n.right);
    }
    put_doubles(out, leaf_a_[b]);
    put_doubles(out, leaf_b_[b]);
  }
}

CausalForest CausalForest::load(std::istream& in) {
  CausalForest f;
  f.k_ = get<std::int32_t>(in);
  f.d_ = get<std::int32_t>(in);
  f.lambda_ = get<double>(in);
  if (f.k_ <= 0 || f.k_ > 64 || f.d_ <= 0 || f.d_ > 1024) throw DomainError("corrupt forest header");
  const auto n_trees = get<std::uint64_t>(in);
  if (n_trees > 100000) throw DomainError("corrupt forest header");
  for (std::uint64_t b = 0; b < n_trees; ++b) {
    Tree tree;
    const auto n_nodes = get<std::uint64_t>(in);
    if (n_nodes > (std::uint64_t{1} << 28)) throw DomainError("corrupt forest tree");
    tree.nodes.resize(n_nodes);
    for (Node& n : tree.nodes) {
      n.feature = get<std::int32_t>(in);
      n.threshold = get<double>(in);
      n.left = get<std::int32_t>(in);
      n.right = get<std::int32_t>(in);
    }
    f.trees_.push_back(std::move(tree));
    f.leaf_a_.push_back(get_doubles(in));
    f.leaf_b_.push_back(get_doubles(in));
    const std::size_t kk = static_cast<std::size_t>(f.k_);
    const std::size_t leaves = f.leaf_b_.back().size() / kk;
    if (f.leaf_a_.back().size() != leaves * kk * kk) throw DomainError("corrupt forest leaves");
    for (const Node& n : f.trees_.back().nodes) {
      const bool bad_leaf = n.feature < 0 && (n.left < 0 || static_cast<std::size_t>(n.left) >= leaves);
      const bool bad_split = n.feature >= f.d_ ||
                             (n.feature >= 0 && (n.left <= 0 || n.right <= 0 ||
                                                 static_cast<std::size_t>(std::max(n.left, n.right)) >= n_nodes));
      if (bad_leaf || bad_split) throw DomainError("corrupt forest node");
    }
  }
  f.finalize();
  return f;
}

}  // namespace chimera::causal
