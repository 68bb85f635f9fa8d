#pragma once

// Completion of partially observed matrices. Rows are observations and
// columns are variables; `observed(i, j)` false marks a missing cell whose
// stored value is ignored.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fsru {

using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct ImputationProblem {
  Eigen::MatrixXd data;
  MissingMask observed;            // same shape as data
  std::vector<bool> feature;       // per column: true for feature columns

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  Eigen::Index missing_count() const { return observed.size() - observed.count(); }
  // Throws std::invalid_argument when shapes disagree.
  void check() const;
};

// Value of the reference at (row, col). Returning NaN means "not covered".
using ReferenceLookup = std::function<double(Eigen::Index, Eigen::Index)>;

struct ImputerConfig {
  std::string method = "missforest";  // mf | mice | missforest | supervised | none
  // mf
  int rank = 2;
  double lambda = 1e-3;
  int mf_iterations = 200;
  double mf_tolerance = 1e-12;
  // mice
  int cycles = 10;
  // missforest
  int trees = 50;
  int max_depth = 12;
  int min_leaf = 5;
  int forest_iterations = 10;
  int bins = 32;
  // supervised
  ReferenceLookup reference;
  std::uint64_t seed = 0;
};

struct ImputationResult {
  Eigen::MatrixXd values;
  bool ridge_fallback = false;  // mice: a singular design needed ridge
  int iterations = 0;
  // missforest: normalized squared change per completed iteration.
  std::vector<double> changes;
  bool stopped_by_increase = false;
};

ImputationResult impute_mf(const ImputationProblem& problem, const ImputerConfig& config);
ImputationResult impute_mice(const ImputationProblem& problem, const ImputerConfig& config);
ImputationResult impute_missforest(const ImputationProblem& problem,
                                   const ImputerConfig& config);
ImputationResult impute_supervised(const ImputationProblem& problem,
                                   const ImputerConfig& config);
// Missing cells become 0 (used to ablate imputation).
ImputationResult impute_zero(const ImputationProblem& problem);
// Missing cells become their column mean (0 for empty columns).
ImputationResult impute_mean(const ImputationProblem& problem);

// Dispatches on config.method. "gain" is reserved and reports unimplemented;
// other unknown names throw std::invalid_argument.
ImputationResult impute(const ImputationProblem& problem, const ImputerConfig& config);

bool is_known_imputer(const std::string& method);

// Root mean squared error over the cells where `mask` is true.
double masked_rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const MissingMask& mask);

}  // namespace fsru
