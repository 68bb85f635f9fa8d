#pragma once

// Regression forest: bootstrap samples, a random feature subset per node and
// CART variance-reduction splits searched over per-feature quantile bins.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fsru {

struct ForestConfig {
  int trees = 50;
  int max_depth = 12;
  int min_leaf = 5;
  int bins = 32;
  int mtry = 0;  // features tried per node; 0 means max(1, p / 3)
  std::uint64_t seed = 0;
};

class RandomForest {
 public:
  // x: samples in rows; y: targets.
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& config);
  double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& sample) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  int num_trees() const { return static_cast<int>(trees_.size()); }

 private:
  struct Node {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;  // go left when value <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  std::vector<Tree> trees_;
};

}  // namespace fsru
