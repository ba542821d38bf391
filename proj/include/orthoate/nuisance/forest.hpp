#pragma once

// Bagged CART trees: variance-reduction splits for regression, Gini splits
// for classification, sqrt(p) candidate features per split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/matrix.hpp"
#include "orthoate/random.hpp"

namespace orthoate {

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 10;  // 0 leaves depth unlimited
  int min_leaf = 5;
  int max_features = 0;  // 0 selects floor(sqrt(p)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_trees < 1) throw InvalidArgument("forest: n_trees must be >= 1");
    if (min_leaf < 1) throw InvalidArgument("forest: min_leaf must be >= 1");
    if (max_depth < 0) throw InvalidArgument("forest: max_depth must be >= 0");
    if (max_features < 0) throw InvalidArgument("forest: max_features must be >= 0");
  }
};

/// Flat binary tree; leaves carry `value` (regression mean) or a slice of
/// `class_probs` (classification frequencies).
struct Tree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::size_t prob_offset = 0;
  };
  std::vector<Node> nodes;
  std::vector<double> class_probs;

  const Node& leaf_for(std::span<const double> x) const {
    const Node* n = &nodes.front();
    while (n->feature >= 0)
      n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold
                                              ? n->left
                                              : n->right)];
    return *n;
  }
};

namespace detail {

/// Grows one tree over the sample `rows` (indices into x, repeats allowed).
/// Targets are real responses (n_classes == 0) or integer labels.
class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const double> y, std::span<const int> labels,
              int n_classes, const ForestOptions& opt, Rng& rng)
      : x_(x), y_(y), labels_(labels), n_classes_(n_classes), opt_(opt), rng_(rng) {
    const int p = static_cast<int>(x.cols());
    mtry_ = opt.max_features > 0 ? std::min(opt.max_features, p)
                                 : std::max(1, static_cast<int>(std::floor(std::sqrt(p))));
    features_.resize(static_cast<std::size_t>(p));
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build(std::vector<std::size_t> rows) {
    tree_ = Tree{};
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int make_leaf(std::span<const std::size_t> rows) {
    Tree::Node node;
    if (n_classes_ == 0) {
      double s = 0.0;
      for (std::size_t r : rows) s += y_[r];
      node.value = s / static_cast<double>(rows.size());
    } else {
      node.prob_offset = tree_.class_probs.size();
      tree_.class_probs.resize(node.prob_offset + static_cast<std::size_t>(n_classes_), 0.0);
      for (std::size_t r : rows) tree_.class_probs[node.prob_offset + static_cast<std::size_t>(labels_[r])] += 1.0;
      for (int c = 0; c < n_classes_; ++c)
        tree_.class_probs[node.prob_offset + static_cast<std::size_t>(c)] /= static_cast<double>(rows.size());
    }
    tree_.nodes.push_back(node);
    return static_cast<int>(tree_.nodes.size() - 1);
  }

  bool is_pure(std::span<const std::size_t> rows) const {
    for (std::size_t r : rows) {
      if (n_classes_ == 0 ? y_[r] != y_[rows[0]] : labels_[r] != labels_[rows[0]]) return false;
    }
    return true;
  }

  // Impurity in "sum" form: SSE for regression, n * Gini for classification.
  Split best_split(std::vector<std::size_t>& rows) {
    Split best;
    const std::size_t n = rows.size();
    const std::size_t min_leaf = static_cast<std::size_t>(opt_.min_leaf);

    // Partial Fisher-Yates: the first mtry_ entries become the candidates.
    for (int j = 0; j < mtry_; ++j) {
      const std::size_t pick =
          static_cast<std::size_t>(j) + uniform_index(rng_, features_.size() - static_cast<std::size_t>(j));
      std::swap(features_[static_cast<std::size_t>(j)], features_[pick]);
    }

    std::vector<double> left_counts(static_cast<std::size_t>(std::max(n_classes_, 1)));
    std::vector<double> total_counts(left_counts.size());
    for (int fi = 0; fi < mtry_; ++fi) {
      const int f = features_[static_cast<std::size_t>(fi)];
      const auto fv = [&](std::size_t r) { return x_(r, static_cast<std::size_t>(f)); };
      std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        return fv(a) < fv(b) || (fv(a) == fv(b) && a < b);
      });
      if (fv(rows.front()) == fv(rows.back())) continue;

      if (n_classes_ == 0) {
        double total = 0.0, total_sq = 0.0;
        for (std::size_t r : rows) {
          total += y_[r];
          total_sq += y_[r] * y_[r];
        }
        const double parent = total_sq - total * total / static_cast<double>(n);
        double left = 0.0, left_sq = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
          left += y_[rows[i]];
          left_sq += y_[rows[i]] * y_[rows[i]];
          const std::size_t nl = i + 1, nr = n - nl;
          if (nl < min_leaf || nr < min_leaf || fv(rows[i]) == fv(rows[i + 1])) continue;
          const double right = total - left, right_sq = total_sq - left_sq;
          const double child = (left_sq - left * left / static_cast<double>(nl)) +
                               (right_sq - right * right / static_cast<double>(nr));
          const double gain = parent - child;
          if (gain > best.gain + 1e-12) best = {f, 0.5 * (fv(rows[i]) + fv(rows[i + 1])), gain};
        }
      } else {
        std::fill(total_counts.begin(), total_counts.end(), 0.0);
        std::fill(left_counts.begin(), left_counts.end(), 0.0);
        for (std::size_t r : rows) total_counts[static_cast<std::size_t>(labels_[r])] += 1.0;
        const auto gini_sum = [&](const std::vector<double>& counts, double size) {
          double s = 0.0;
          for (double c : counts) s += c * c;
          return size - s / size;
        };
        const double parent = gini_sum(total_counts, static_cast<double>(n));
        std::vector<double> right_counts(total_counts.size());
        for (std::size_t i = 0; i + 1 < n; ++i) {
          left_counts[static_cast<std::size_t>(labels_[rows[i]])] += 1.0;
          const std::size_t nl = i + 1, nr = n - nl;
          if (nl < min_leaf || nr < min_leaf || fv(rows[i]) == fv(rows[i + 1])) continue;
          for (std::size_t c = 0; c < right_counts.size(); ++c) right_counts[c] = total_counts[c] - left_counts[c];
          const double gain = parent - gini_sum(left_counts, static_cast<double>(nl)) -
                              gini_sum(right_counts, static_cast<double>(nr));
          if (gain > best.gain + 1e-12) best = {f, 0.5 * (fv(rows[i]) + fv(rows[i + 1])), gain};
        }
      }
    }
    return best;
  }

  int grow(std::vector<std::size_t>& rows, int depth) {
    const bool can_split = (opt_.max_depth == 0 || depth < opt_.max_depth) &&
                           rows.size() >= 2 * static_cast<std::size_t>(opt_.min_leaf) && !is_pure(rows);
    if (!can_split) return make_leaf(rows);
    const Split s = best_split(rows);
    if (s.feature < 0) return make_leaf(rows);

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (x_(r, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(r);
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(Tree::Node{s.feature, s.threshold, -1, -1, 0.0, 0});
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const FeatureMatrix& x_;
  std::span<const double> y_;
  std::span<const int> labels_;
  int n_classes_;
  const ForestOptions& opt_;
  Rng& rng_;
  int mtry_ = 1;
  std::vector<int> features_;
  Tree tree_;
};

inline std::vector<std::size_t> tree_sample(std::size_t n, bool bootstrap, Rng& rng) {
  std::vector<std::size_t> rows(n);
  if (bootstrap)
    for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(rng, n));
  else
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

struct ForestRegressorFit {
  std::size_t n_features = 0;
  std::vector<Tree> trees;

  std::vector<double> predict(const FeatureMatrix& x) const {
    if (x.cols() != n_features) throw ShapeMismatch("forest: column count mismatch");
    std::vector<double> out(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (const Tree& t : trees) s += t.leaf_for(x.row(i)).value;
      out[i] = s / static_cast<double>(trees.size());
    }
    return out;
  }
};

struct ForestClassifierFit {
  std::size_t n_features = 0;
  int n_treatments = 2;
  std::vector<Tree> trees;

  FeatureMatrix predict(const FeatureMatrix& x) const {
    if (x.cols() != n_features) throw ShapeMismatch("forest: column count mismatch");
    FeatureMatrix out(x.rows(), static_cast<std::size_t>(n_treatments), 0.0);
    // Sum first, divide once: w * p accumulated T times can round above 1.
    const double n = static_cast<double>(trees.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto row = out.row(i);
      for (const Tree& t : trees) {
        const auto& leaf = t.leaf_for(x.row(i));
        for (int c = 0; c < n_treatments; ++c)
          row[static_cast<std::size_t>(c)] += t.class_probs[leaf.prob_offset + static_cast<std::size_t>(c)];
      }
      for (double& v : row) v = std::min(1.0, v / n);
    }
    return out;
  }
};

inline ForestRegressorFit fit_forest_regress(const FeatureMatrix& x, std::span<const double> y,
                                             const ForestOptions& opt) {
  opt.validate();
  if (x.rows() != y.size()) throw ShapeMismatch("forest: X and y lengths differ");
  if (x.rows() == 0) throw InvalidArgument("forest: empty training set");
  if (!x.all_finite()) throw NonFinite("non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw NonFinite("non-finite response value");

  ForestRegressorFit fit;
  fit.n_features = x.cols();
  for (int t = 0; t < opt.n_trees; ++t) {
    Rng rng = make_stream(opt.seed, {static_cast<std::uint64_t>(t)});
    detail::TreeBuilder builder(x, y, {}, 0, opt, rng);
    fit.trees.push_back(builder.build(detail::tree_sample(x.rows(), opt.bootstrap, rng)));
  }
  return fit;
}

inline ForestClassifierFit fit_forest_classify(const FeatureMatrix& x, std::span<const int> d,
                                               int n_treatments, const ForestOptions& opt) {
  opt.validate();
  if (x.rows() != d.size()) throw ShapeMismatch("forest: X and labels lengths differ");
  if (x.rows() == 0) throw InvalidArgument("forest: empty training set");
  if (!x.all_finite()) throw NonFinite("non-finite feature value");
  for (int v : d)
    if (v < 0 || v >= n_treatments) throw InvalidArgument("treatment label out of range");

  ForestClassifierFit fit;
  fit.n_features = x.cols();
  fit.n_treatments = n_treatments;
  for (int t = 0; t < opt.n_trees; ++t) {
    Rng rng = make_stream(opt.seed, {static_cast<std::uint64_t>(t)});
    detail::TreeBuilder builder(x, {}, d, n_treatments, opt, rng);
    fit.trees.push_back(builder.build(detail::tree_sample(x.rows(), opt.bootstrap, rng)));
  }
  return fit;
}

}  // namespace orthoate
