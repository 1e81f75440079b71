#include "failanchor/isolation_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace failanchor {

namespace {

constexpr double kEulerGamma = 0.5772156649015329;

// std::uniform_real_distribution is implementation-defined; this keeps scores
// identical across standard libraries.
double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t index_draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

}  // namespace

double average_path_length(std::size_t n) noexcept {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

IsolationForest::IsolationForest(std::size_t num_trees, std::size_t subsample, std::uint64_t seed)
    : num_trees_(std::max<std::size_t>(1, num_trees)),
      requested_subsample_(std::max<std::size_t>(2, subsample)),
      seed_(seed) {}

void IsolationForest::fit(const FeatureMatrix& samples) {
  trees_.clear();
  cols_ = samples.cols;
  psi_ = std::min(requested_subsample_, samples.rows);
  height_limit_ = psi_ > 1 ? static_cast<int>(std::ceil(std::log2(static_cast<double>(psi_)))) : 0;
  if (samples.rows == 0) return;

  std::mt19937_64 rng(seed_);
  std::vector<std::size_t> all(samples.rows);
  trees_.reserve(num_trees_);
  for (std::size_t t = 0; t < num_trees_; ++t) {
    std::iota(all.begin(), all.end(), std::size_t{0});
    // Partial Fisher-Yates: the first psi entries become the subsample.
    for (std::size_t i = 0; i < psi_; ++i) {
      std::size_t j = i + index_draw(rng, samples.rows - i);
      std::swap(all[i], all[j]);
    }
    std::vector<std::size_t> idx(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi_));
    Tree tree;
    tree.reserve(2 * psi_);
    grow(tree, idx, 0, idx.size(), 0, samples, rng);
    trees_.push_back(std::move(tree));
  }
}

std::int32_t IsolationForest::grow(Tree& tree, std::vector<std::size_t>& idx, std::size_t begin,
                                   std::size_t end, int depth, const FeatureMatrix& samples,
                                   std::mt19937_64& rng) const {
  const auto id = static_cast<std::int32_t>(tree.size());
  tree.push_back(Node{});
  tree[static_cast<std::size_t>(id)].size = end - begin;
  if (depth >= height_limit_ || end - begin <= 1) return id;

  // Only features that vary inside this node can split it.
  std::vector<std::size_t> candidates;
  std::vector<std::pair<double, double>> ranges(cols_);
  for (std::size_t f = 0; f < cols_; ++f) {
    double lo = samples.row(idx[begin])[f];
    double hi = lo;
    for (std::size_t k = begin + 1; k < end; ++k) {
      const double v = samples.row(idx[k])[f];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    ranges[f] = {lo, hi};
    if (hi > lo) candidates.push_back(f);
  }
  if (candidates.empty()) return id;

  const std::size_t feature = candidates[index_draw(rng, candidates.size())];
  const auto [lo, hi] = ranges[feature];
  double split = lo + unit_draw(rng) * (hi - lo);
  if (split <= lo) split = std::nextafter(lo, hi);

  auto mid_it = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                               idx.begin() + static_cast<std::ptrdiff_t>(end),
                               [&](std::size_t r) { return samples.row(r)[feature] < split; });
  const auto mid = static_cast<std::size_t>(mid_it - idx.begin());

  const std::int32_t left = grow(tree, idx, begin, mid, depth + 1, samples, rng);
  const std::int32_t right = grow(tree, idx, mid, end, depth + 1, samples, rng);
  Node& node = tree[static_cast<std::size_t>(id)];
  node.feature = static_cast<int>(feature);
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

double IsolationForest::path_length(const Tree& tree, const double* point) const {
  std::size_t at = 0;
  double depth = 0.0;
  while (tree[at].feature >= 0) {
    const Node& n = tree[at];
    at = static_cast<std::size_t>(point[n.feature] < n.split ? n.left : n.right);
    depth += 1.0;
  }
  return depth + average_path_length(tree[at].size);
}

double IsolationForest::score(const double* point) const {
  const double c = average_path_length(psi_);
  if (trees_.empty() || c == 0.0) return 0.5;
  double total = 0.0;
  for (const auto& tree : trees_) total += path_length(tree, point);
  const double mean = total / static_cast<double>(trees_.size());
  return std::pow(2.0, -mean / c);
}

std::vector<double> IsolationForest::score_all(const FeatureMatrix& samples) const {
  std::vector<double> out;
  out.reserve(samples.rows);
  for (std::size_t i = 0; i < samples.rows; ++i) out.push_back(score(samples.row(i)));
  return out;
}

}  // namespace failanchor
