#include "muplon/confusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "muplon/error.hpp"
#include "muplon/rng.hpp"

namespace muplon::frontdoor {

namespace {

double sq_dist(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<Point> seed_plus_plus(const std::vector<Point>& points, std::size_t k, Rng& rng) {
  std::vector<Point> centers;
  centers.push_back(points[rng.index(points.size())]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(points[i], centers.back()));
      total += d2[i];
    }
    if (total <= 0.0) {
      centers.push_back(points[rng.index(points.size())]);
      continue;
    }
    double target = rng.uniform() * total;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                    double rel_tol) {
  if (points.empty()) throw ShapeError("kmeans needs at least one point");
  if (k == 0) throw ConfigError("kmeans needs k >= 1");
  if (points.size() < k) {
    throw ShapeError("kmeans: " + std::to_string(points.size()) + " points for " + std::to_string(k) +
                     " clusters");
  }
  const std::size_t dim = points.front().size();
  Rng rng(seed);
  KMeansResult res;
  res.centers = seed_plus_plus(points, k, rng);
  res.assignment.assign(points.size(), 0);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points[i], res.centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], res.centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      res.assignment[i] = best;
      wcss += best_d;
    }
    res.iterations = iter + 1;
    const bool have_prev = !res.wcss_history.empty();
    const double prev = have_prev ? res.wcss_history.back() : 0.0;
    res.wcss_history.push_back(wcss);
    if (wcss == 0.0 || (have_prev && (prev - wcss) <= rel_tol * prev)) {
      res.converged = true;
      break;
    }

    std::vector<Point> sums(k, Point(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) res.centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return res;
}

ConfusionDictionary build_confusion_dictionary(const std::vector<std::vector<float>>& reprs,
                                               const std::vector<std::size_t>& labels, std::size_t n_classes,
                                               std::uint64_t seed, std::size_t k_override,
                                               std::vector<KMeansResult>* stats) {
  if (reprs.size() != labels.size()) throw ShapeError("one label per representation required");
  if (reprs.empty()) throw ShapeError("confusion dictionary needs training representations");
  if (n_classes == 0) throw ConfigError("confusion dictionary needs at least one class");
  const std::size_t k = k_override > 0 ? k_override : 2 * n_classes;
  const std::size_t dim = reprs.front().size();

  std::vector<std::vector<Point>> by_class(n_classes);
  for (std::size_t i = 0; i < reprs.size(); ++i) {
    if (labels[i] >= n_classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(n_classes) + " classes");
    }
    if (reprs[i].size() != dim) throw ShapeError("representations have inconsistent dims");
    by_class[labels[i]].emplace_back(reprs[i].begin(), reprs[i].end());
  }

  ConfusionDictionary dict;
  dict.centers = ad::Tensor<float>({n_classes, k, dim});
  if (stats) stats->clear();
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& pts = by_class[c];
    if (pts.empty()) throw ConfigError("no training samples for class " + std::to_string(c));
    if (pts.size() < k) {
      Point mean(dim, 0.0);
      for (const auto& p : pts)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += p[j];
      for (auto& m : mean) m /= static_cast<double>(pts.size());
      while (pts.size() < k) pts.push_back(mean);
    }
    auto res = kmeans(pts, k, derive_seed(seed, {c}));
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < dim; ++t) {
        dict.centers[(c * k + j) * dim + t] = static_cast<float>(res.centers[j][t]);
      }
    }
    dict.class_labels.push_back(c);
    if (stats) stats->push_back(std::move(res));
  }
  return dict;
}

std::size_t default_draw_size(std::size_t n_classes) { return (n_classes + 1) / 2; }

std::vector<double> expected_bias(const ConfusionDictionary& dict, std::size_t m, std::size_t draws,
                                  std::uint64_t seed) {
  const std::size_t total = dict.total_centers();
  const std::size_t dim = dict.dim();
  if (m == 0 || m > total) {
    throw ConfigError("monte carlo draw size " + std::to_string(m) + " outside [1, " + std::to_string(total) + "]");
  }
  if (draws == 0) throw ConfigError("monte carlo needs at least one draw");
  Rng rng(seed);
  std::vector<std::size_t> idx(total);
  std::vector<double> acc(dim, 0.0);
  for (std::size_t t = 0; t < draws; ++t) {
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first m slots are a uniform sample.
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.index(total - i)]);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < dim; ++j) acc[j] += dict.centers[idx[i] * dim + j];
    }
  }
  const double denom = static_cast<double>(draws) * static_cast<double>(m);
  for (auto& a : acc) a /= denom;
  return acc;
}

}  // namespace muplon::frontdoor
