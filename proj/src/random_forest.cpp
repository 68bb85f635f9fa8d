#include "fsru/random_forest.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fsru/parallel.hpp"
#include "fsru/rng.hpp"

namespace fsru {

namespace {

// Candidate thresholds for one feature. A value v falls in bin k where k is
// the first threshold >= v (bin m when above all thresholds).
std::vector<double> bin_edges(const Eigen::Ref<const Eigen::VectorXd>& column, int bins) {
  std::vector<double> values(column.data(), column.data() + column.size());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> edges;
  if (values.size() <= 1) return edges;
  if (static_cast<int>(values.size()) <= bins) {
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      edges.push_back(0.5 * (values[i] + values[i + 1]));
    }
    return edges;
  }
  std::vector<double> sorted(column.data(), column.data() + column.size());
  std::sort(sorted.begin(), sorted.end());
  for (int k = 1; k < bins; ++k) {
    const auto pos = static_cast<std::size_t>(
        static_cast<double>(k) / bins * static_cast<double>(sorted.size() - 1));
    const double q = sorted[pos];
    if (q < sorted.back() && (edges.empty() || q > edges.back())) edges.push_back(q);
  }
  return edges;
}

}  // namespace

void RandomForest::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const ForestConfig& config) {
  if (x.rows() != y.size()) throw std::invalid_argument("forest: x and y sizes differ");
  if (x.rows() == 0) throw std::invalid_argument("forest: no training samples");
  if (config.trees < 1 || config.min_leaf < 1 || config.max_depth < 0 ||
      config.bins < 2 || config.bins > 255) {
    throw std::invalid_argument("forest: invalid configuration");
  }
  const auto n = static_cast<std::size_t>(x.rows());
  const int p = static_cast<int>(x.cols());
  const int mtry = config.mtry > 0 ? std::min(config.mtry, std::max(p, 1))
                                   : std::max(1, p / 3);

  std::vector<std::vector<double>> edges(static_cast<std::size_t>(p));
  std::vector<std::uint8_t> codes(n * static_cast<std::size_t>(p));
  for (int f = 0; f < p; ++f) {
    auto& e = edges[static_cast<std::size_t>(f)];
    e = bin_edges(x.col(f), config.bins);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), f);
      codes[static_cast<std::size_t>(f) * n + i] =
          static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), v) - e.begin());
    }
  }

  trees_.assign(static_cast<std::size_t>(config.trees), Tree{});
  parallel_for(
      trees_.size(),
      [&](std::size_t begin, std::size_t end) {
        std::vector<double> count;
        std::vector<double> sum;
        std::vector<int> features(static_cast<std::size_t>(p));
        for (std::size_t tree_id = begin; tree_id < end; ++tree_id) {
          SplitMix64 rng = make_stream(config.seed, tree_id);
          std::vector<std::size_t> idx(n);
          for (auto& i : idx) i = static_cast<std::size_t>(rng() % n);
          Tree& tree = trees_[tree_id];
          struct Pending {
            int node;
            std::size_t lo, hi;
            int depth;
          };
          tree.push_back({});
          std::vector<Pending> stack{{0, 0, n, 0}};
          while (!stack.empty()) {
            const Pending job = stack.back();
            stack.pop_back();
            const std::size_t m = job.hi - job.lo;
            double total = 0.0;
            double total_sq = 0.0;
            for (std::size_t k = job.lo; k < job.hi; ++k) {
              const double v = y(static_cast<Eigen::Index>(idx[k]));
              total += v;
              total_sq += v * v;
            }
            const double mean = total / static_cast<double>(m);
            tree[static_cast<std::size_t>(job.node)].value = mean;
            const double sse = total_sq - total * mean;
            if (job.depth >= config.max_depth ||
                m < 2 * static_cast<std::size_t>(config.min_leaf) || sse <= 1e-14 * m) {
              continue;
            }
            std::iota(features.begin(), features.end(), 0);
            for (int k = 0; k < mtry; ++k) {
              const auto j = static_cast<std::size_t>(k) +
                             static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(p - k));
              std::swap(features[static_cast<std::size_t>(k)], features[j]);
            }
            double best_gain = total * mean + 1e-12 * std::max(1.0, sse);
            int best_feature = -1;
            int best_bin = -1;
            for (int k = 0; k < mtry; ++k) {
              const int f = features[static_cast<std::size_t>(k)];
              const auto num_edges = edges[static_cast<std::size_t>(f)].size();
              if (num_edges == 0) continue;
              count.assign(num_edges + 1, 0.0);
              sum.assign(num_edges + 1, 0.0);
              const std::uint8_t* col = codes.data() + static_cast<std::size_t>(f) * n;
              for (std::size_t r = job.lo; r < job.hi; ++r) {
                const std::size_t i = idx[r];
                count[col[i]] += 1.0;
                sum[col[i]] += y(static_cast<Eigen::Index>(i));
              }
              double left_n = 0.0;
              double left_sum = 0.0;
              for (std::size_t b = 0; b < num_edges; ++b) {
                left_n += count[b];
                left_sum += sum[b];
                const double right_n = static_cast<double>(m) - left_n;
                if (left_n < config.min_leaf) continue;
                if (right_n < config.min_leaf) break;
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / left_n + right_sum * right_sum / right_n;
                if (gain > best_gain) {
                  best_gain = gain;
                  best_feature = f;
                  best_bin = static_cast<int>(b);
                }
              }
            }
            if (best_feature < 0) continue;
            const std::uint8_t* col = codes.data() + static_cast<std::size_t>(best_feature) * n;
            const auto mid = std::partition(
                idx.begin() + static_cast<std::ptrdiff_t>(job.lo),
                idx.begin() + static_cast<std::ptrdiff_t>(job.hi),
                [&](std::size_t i) { return col[i] <= best_bin; });
            const auto split = static_cast<std::size_t>(mid - idx.begin());
            const int left = static_cast<int>(tree.size());
            tree.push_back({});
            tree.push_back({});
            Node& node = tree[static_cast<std::size_t>(job.node)];
            node.feature = best_feature;
            node.threshold = edges[static_cast<std::size_t>(best_feature)]
                                  [static_cast<std::size_t>(best_bin)];
            node.left = left;
            node.right = left + 1;
            stack.push_back({left + 1, split, job.hi, job.depth + 1});
            stack.push_back({left, job.lo, split, job.depth + 1});
          }
        }
      },
      1);
}

double RandomForest::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& sample) const {
  if (trees_.empty()) throw std::logic_error("forest: predict before fit");
  double total = 0.0;
  for (const Tree& tree : trees_) {
    int k = 0;
    while (tree[static_cast<std::size_t>(k)].feature >= 0) {
      const Node& node = tree[static_cast<std::size_t>(k)];
      k = sample(node.feature) <= node.threshold ? node.left : node.right;
    }
    total += tree[static_cast<std::size_t>(k)].value;
  }
  return total / static_cast<double>(trees_.size());
}

Eigen::VectorXd RandomForest::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out(static_cast<Eigen::Index>(i)) = predict_one(x.row(static_cast<Eigen::Index>(i)));
    }
  });
  return out;
}

}  // namespace fsru
