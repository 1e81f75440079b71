#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace failanchor {

// Row-major sample matrix view.
struct FeatureMatrix {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  const double* row(std::size_t i) const noexcept { return data.data() + i * cols; }
};

// Average path length of an unsuccessful BST search over n points, c(n).
double average_path_length(std::size_t n) noexcept;

// Seeded isolation forest. Scores follow s(x) = 2^(-E[h(x)] / c(psi)) with psi
// the subsample size, so they lie in (0, 1] and larger means more anomalous.
class IsolationForest {
 public:
  IsolationForest(std::size_t num_trees, std::size_t subsample, std::uint64_t seed);

  void fit(const FeatureMatrix& samples);
  double score(const double* point) const;
  std::vector<double> score_all(const FeatureMatrix& samples) const;

  std::size_t subsample_size() const noexcept { return psi_; }

 private:
  struct Node {
    // Leaf when feature < 0.
    int feature = -1;
    double split = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::size_t size = 0;
  };
  using Tree = std::vector<Node>;

  std::int32_t grow(Tree& tree, std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                    int depth, const FeatureMatrix& samples, std::mt19937_64& rng) const;
  double path_length(const Tree& tree, const double* point) const;

  std::size_t num_trees_;
  std::size_t requested_subsample_;
  std::uint64_t seed_;
  std::size_t psi_ = 0;
  std::size_t cols_ = 0;
  int height_limit_ = 0;
  std::vector<Tree> trees_;
};

}  // namespace failanchor
