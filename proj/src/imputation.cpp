#include "fsru/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fsru/random_forest.hpp"

namespace fsru {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Column means over observed cells; empty columns get 0.
VectorXd observed_means(const ImputationProblem& p) {
  VectorXd means = VectorXd::Zero(p.cols());
  for (Index j = 0; j < p.cols(); ++j) {
    double total = 0.0;
    Index count = 0;
    for (Index i = 0; i < p.rows(); ++i) {
      if (p.observed(i, j)) {
        total += p.data(i, j);
        ++count;
      }
    }
    if (count > 0) means(j) = total / static_cast<double>(count);
  }
  return means;
}

MatrixXd mean_filled(const ImputationProblem& p) {
  const VectorXd means = observed_means(p);
  MatrixXd x = p.data;
  for (Index j = 0; j < p.cols(); ++j) {
    for (Index i = 0; i < p.rows(); ++i) {
      if (!p.observed(i, j)) x(i, j) = means(j);
    }
  }
  return x;
}

// Incomplete columns that have at least one observation, fewest missing first.
std::vector<Index> imputation_order(const ImputationProblem& p) {
  std::vector<Index> order;
  std::vector<Index> missing(static_cast<std::size_t>(p.cols()), 0);
  for (Index j = 0; j < p.cols(); ++j) {
    const Index seen = p.observed.col(j).count();
    missing[static_cast<std::size_t>(j)] = p.rows() - seen;
    if (seen > 0 && seen < p.rows()) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return missing[static_cast<std::size_t>(a)] < missing[static_cast<std::size_t>(b)];
  });
  return order;
}

// Solves min |A x - y|^2 (+ ridge |x|^2 when A is rank deficient).
VectorXd least_squares(const MatrixXd& a, const VectorXd& y, bool& ridge_used) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  if (qr.rank() == a.cols()) return qr.solve(y);
  ridge_used = true;
  MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += 1e-8;
  return gram.ldlt().solve(a.transpose() * y);
}

}  // namespace

void ImputationProblem::check() const {
  if (observed.rows() != data.rows() || observed.cols() != data.cols()) {
    throw std::invalid_argument("imputation: mask shape differs from data");
  }
  if (!feature.empty() && static_cast<Index>(feature.size()) != data.cols()) {
    throw std::invalid_argument("imputation: column metadata has wrong length");
  }
}

ImputationResult impute_zero(const ImputationProblem& problem) {
  problem.check();
  ImputationResult out;
  out.values = problem.observed.select(problem.data, 0.0);
  return out;
}

ImputationResult impute_mean(const ImputationProblem& problem) {
  problem.check();
  ImputationResult out;
  out.values = mean_filled(problem);
  return out;
}

ImputationResult impute_mf(const ImputationProblem& problem, const ImputerConfig& config) {
  problem.check();
  if (config.rank < 1) throw std::invalid_argument("mf: rank must be at least 1");
  if (config.lambda < 0.0) throw std::invalid_argument("mf: lambda must be non-negative");
  const Index n = problem.rows();
  const Index m = problem.cols();
  if (problem.observed.count() == 0) throw std::invalid_argument("mf: matrix is entirely missing");
  if (config.rank > std::min(n, m)) {
    throw std::invalid_argument("mf: rank exceeds the matrix dimensions");
  }
  ImputationResult out;
  out.values = problem.data;
  if (problem.missing_count() == 0) return out;

  // Columns are divided by their observed RMS so that no variable dominates;
  // the scaling is diagonal and keeps the rank of the target.
  VectorXd scale = VectorXd::Ones(m);
  for (Index j = 0; j < m; ++j) {
    double sq = 0.0;
    Index count = 0;
    for (Index i = 0; i < n; ++i) {
      if (problem.observed(i, j)) {
        sq += problem.data(i, j) * problem.data(i, j);
        ++count;
      }
    }
    if (count > 0 && sq > 0.0) scale(j) = std::sqrt(sq / static_cast<double>(count));
  }
  MatrixXd x = mean_filled(problem);
  for (Index j = 0; j < m; ++j) x.col(j) /= scale(j);

  const Index r = config.rank;
  Eigen::BDCSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd root = svd.singularValues().head(r).cwiseSqrt();
  MatrixXd u = svd.matrixU().leftCols(r) * root.asDiagonal();
  MatrixXd v = svd.matrixV().leftCols(r) * root.asDiagonal();

  auto solve_factor = [&](const MatrixXd& fixed, MatrixXd& target, bool by_row) {
    const Index count = by_row ? n : m;
    for (Index k = 0; k < count; ++k) {
      MatrixXd gram = MatrixXd::Zero(r, r);
      VectorXd rhs = VectorXd::Zero(r);
      const Index other = by_row ? m : n;
      for (Index l = 0; l < other; ++l) {
        const Index i = by_row ? k : l;
        const Index j = by_row ? l : k;
        if (!problem.observed(i, j)) continue;
        const auto f = fixed.row(l);
        gram.noalias() += f.transpose() * f;
        rhs.noalias() += f.transpose() * x(i, j);
      }
      gram.diagonal().array() += config.lambda;
      target.row(k) = gram.completeOrthogonalDecomposition().solve(rhs).transpose();
    }
  };
  auto objective = [&] {
    double loss = 0.0;
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) {
        if (!problem.observed(i, j)) continue;
        const double e = x(i, j) - u.row(i).dot(v.row(j));
        loss += e * e;
      }
    }
    return loss + config.lambda * (u.squaredNorm() + v.squaredNorm());
  };

  double previous = objective();
  for (int it = 0; it < config.mf_iterations; ++it) {
    solve_factor(v, u, true);
    solve_factor(u, v, false);
    out.iterations = it + 1;
    const double current = objective();
    if (std::abs(previous - current) <= config.mf_tolerance * std::max(1.0, previous)) break;
    previous = current;
  }
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (!problem.observed(i, j)) out.values(i, j) = u.row(i).dot(v.row(j)) * scale(j);
    }
  }
  return out;
}

ImputationResult impute_mice(const ImputationProblem& problem, const ImputerConfig& config) {
  problem.check();
  if (config.cycles < 1) throw std::invalid_argument("mice: cycles must be at least 1");
  ImputationResult out;
  out.values = mean_filled(problem);
  if (problem.missing_count() == 0) {
    out.values = problem.data;
    return out;
  }
  const Index m = problem.cols();
  const auto order = imputation_order(problem);
  MatrixXd& x = out.values;
  for (int cycle = 0; cycle < config.cycles; ++cycle) {
    for (const Index j : order) {
      std::vector<Index> fit_rows;
      std::vector<Index> miss_rows;
      for (Index i = 0; i < problem.rows(); ++i) {
        (problem.observed(i, j) ? fit_rows : miss_rows).push_back(i);
      }
      // Regressors: other columns that vary over the fitting rows.
      std::vector<Index> regressors;
      for (Index c = 0; c < m; ++c) {
        if (c == j) continue;
        const double first = x(fit_rows.front(), c);
        for (const Index i : fit_rows) {
          if (x(i, c) != first) {
            regressors.push_back(c);
            break;
          }
        }
      }
      const auto p = static_cast<Index>(regressors.size()) + 1;
      MatrixXd a(static_cast<Index>(fit_rows.size()), p);
      VectorXd y(static_cast<Index>(fit_rows.size()));
      for (Index k = 0; k < static_cast<Index>(fit_rows.size()); ++k) {
        const Index i = fit_rows[static_cast<std::size_t>(k)];
        a(k, 0) = 1.0;
        for (Index c = 1; c < p; ++c) a(k, c) = x(i, regressors[static_cast<std::size_t>(c - 1)]);
        y(k) = problem.data(i, j);
      }
      const VectorXd beta = least_squares(a, y, out.ridge_fallback);
      for (const Index i : miss_rows) {
        double v = beta(0);
        for (Index c = 1; c < p; ++c) v += beta(c) * x(i, regressors[static_cast<std::size_t>(c - 1)]);
        x(i, j) = v;
      }
    }
    out.iterations = cycle + 1;
  }
  return out;
}

ImputationResult impute_missforest(const ImputationProblem& problem,
                                   const ImputerConfig& config) {
  problem.check();
  if (config.trees < 1) throw std::invalid_argument("missforest: trees must be at least 1");
  if (config.forest_iterations < 1) {
    throw std::invalid_argument("missforest: iterations must be at least 1");
  }
  ImputationResult out;
  if (problem.missing_count() == 0) {
    out.values = problem.data;
    return out;
  }
  const Index n = problem.rows();
  const Index m = problem.cols();
  const auto order = imputation_order(problem);
  MatrixXd current = mean_filled(problem);
  if (m < 2) {
    out.values = std::move(current);
    return out;
  }
  ForestConfig forest;
  forest.trees = config.trees;
  forest.max_depth = config.max_depth;
  forest.min_leaf = config.min_leaf;
  forest.bins = config.bins;

  double last_change = INFINITY;
  for (int it = 0; it < config.forest_iterations; ++it) {
    MatrixXd next = current;
    for (const Index j : order) {
      std::vector<Index> fit_rows;
      std::vector<Index> miss_rows;
      for (Index i = 0; i < n; ++i) (problem.observed(i, j) ? fit_rows : miss_rows).push_back(i);
      MatrixXd xs(static_cast<Index>(fit_rows.size()), m - 1);
      VectorXd ys(static_cast<Index>(fit_rows.size()));
      auto copy_row = [&](MatrixXd& dst, Index k, Index i) {
        Index c = 0;
        for (Index col = 0; col < m; ++col) {
          if (col != j) dst(k, c++) = next(i, col);
        }
      };
      for (Index k = 0; k < static_cast<Index>(fit_rows.size()); ++k) {
        copy_row(xs, k, fit_rows[static_cast<std::size_t>(k)]);
        ys(k) = problem.data(fit_rows[static_cast<std::size_t>(k)], j);
      }
      MatrixXd xm(static_cast<Index>(miss_rows.size()), m - 1);
      for (Index k = 0; k < static_cast<Index>(miss_rows.size()); ++k) {
        copy_row(xm, k, miss_rows[static_cast<std::size_t>(k)]);
      }
      forest.seed = config.seed ^ (static_cast<std::uint64_t>(it) << 32) ^
                    static_cast<std::uint64_t>(j);
      RandomForest rf;
      rf.fit(xs, ys, forest);
      const VectorXd pred = rf.predict(xm);
      for (Index k = 0; k < static_cast<Index>(miss_rows.size()); ++k) {
        next(miss_rows[static_cast<std::size_t>(k)], j) = pred(k);
      }
    }
    double num = 0.0;
    double den = 0.0;
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < n; ++i) {
        if (problem.observed(i, j)) continue;
        const double d = next(i, j) - current(i, j);
        num += d * d;
        den += next(i, j) * next(i, j);
      }
    }
    const double change = den > 0.0 ? num / den : num;
    out.changes.push_back(change);
    if (change > last_change) {
      out.stopped_by_increase = true;
      break;
    }
    out.iterations = it + 1;
    current = std::move(next);
    last_change = change;
    if (change == 0.0) break;
  }
  out.values = std::move(current);
  // Observed cells are restored bit-exactly.
  out.values = problem.observed.select(problem.data, out.values);
  return out;
}

ImputationResult impute_supervised(const ImputationProblem& problem,
                                   const ImputerConfig& config) {
  problem.check();
  if (!config.reference) throw std::invalid_argument("supervised: no reference policy given");
  ImputationResult out;
  out.values = problem.data;
  for (const Index j : imputation_order(problem)) {
    for (Index i = 0; i < problem.rows(); ++i) {
      if (problem.observed(i, j)) continue;
      const double v = config.reference(i, j);
      if (std::isnan(v)) {
        throw std::invalid_argument("supervised: reference does not cover row " +
                                    std::to_string(i) + ", column " + std::to_string(j));
      }
      out.values(i, j) = v;
    }
  }
  // Columns without any observation are taken from the reference as well.
  for (Index j = 0; j < problem.cols(); ++j) {
    if (problem.observed.col(j).count() != 0) continue;
    for (Index i = 0; i < problem.rows(); ++i) {
      const double v = config.reference(i, j);
      if (std::isnan(v)) {
        throw std::invalid_argument("supervised: reference does not cover row " +
                                    std::to_string(i) + ", column " + std::to_string(j));
      }
      out.values(i, j) = v;
    }
  }
  return out;
}

bool is_known_imputer(const std::string& method) {
  return method == "mf" || method == "mice" || method == "missforest" ||
         method == "supervised" || method == "none";
}

ImputationResult impute(const ImputationProblem& problem, const ImputerConfig& config) {
  if (config.method == "mf") return impute_mf(problem, config);
  if (config.method == "mice") return impute_mice(problem, config);
  if (config.method == "missforest") return impute_missforest(problem, config);
  if (config.method == "supervised") return impute_supervised(problem, config);
  if (config.method == "none") return impute_zero(problem);
  if (config.method == "gain") throw std::invalid_argument("imputer 'gain' is unimplemented");
  throw std::invalid_argument("unknown imputer '" + config.method + "'");
}

double masked_rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const MissingMask& mask) {
  double sq = 0.0;
  Index count = 0;
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (!mask(i, j)) continue;
      const double e = a(i, j) - b(i, j);
      sq += e * e;
      ++count;
    }
  }
  return count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
}

}  // namespace fsru
