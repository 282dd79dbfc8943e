#pragma once

#include <cstdint>
#include <vector>

#include "muplon/tensor.hpp"

namespace muplon::frontdoor {

using Point = std::vector<double>;

struct KMeansResult {
  std::vector<Point> centers;
  std::vector<std::size_t> assignment;
  // Within-cluster sum of squares after each assignment step; non-increasing.
  std::vector<double> wcss_history;
  std::size_t iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with k-means++ seeding. Stops once the relative WCSS
// improvement falls below `rel_tol` (or WCSS reaches 0), or after
// `max_iter` iterations. Ties in assignment go to the lower center index;
// an empty cluster keeps its previous center.
KMeansResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100, double rel_tol = 1e-6);

// Per-class cluster centers of training graph representations,
// N classes x k centers x d dims.
struct ConfusionDictionary {
  ad::Tensor<float> centers;
  std::vector<std::size_t> class_labels;

  std::size_t classes() const { return centers.shape()[0]; }
  std::size_t per_class() const { return centers.shape()[1]; }
  std::size_t dim() const { return centers.shape()[2]; }
  std::size_t total_centers() const { return classes() * per_class(); }
};

// k = 2 * n_classes centers per class unless `k_override` > 0. Classes with
// fewer than k samples are padded with copies of their mean. A class with
// no samples is an error. `stats`, when given, receives each class's run.
ConfusionDictionary build_confusion_dictionary(const std::vector<std::vector<float>>& reprs,
                                               const std::vector<std::size_t>& labels, std::size_t n_classes,
                                               std::uint64_t seed, std::size_t k_override = 0,
                                               std::vector<KMeansResult>* stats = nullptr);

// Centers per Monte Carlo draw when not configured: ceil(N / 2).
std::size_t default_draw_size(std::size_t n_classes);

// Mean over `draws` repetitions of the mean of `m` centers sampled
// uniformly without replacement from the flattened dictionary. Centers
// already live in graph-representation space, so they are used as-is.
std::vector<double> expected_bias(const ConfusionDictionary& dict, std::size_t m, std::size_t draws,
                                  std::uint64_t seed);

}  // namespace muplon::frontdoor
