#include <doctest.h>

#include <cmath>

#include "muplon/confusion.hpp"
#include "muplon/error.hpp"
#include "muplon/rng.hpp"

using namespace muplon;
using namespace muplon::frontdoor;

namespace {

std::vector<Point> blobs(Rng& rng, const std::vector<Point>& means, std::size_t per, double spread) {
  std::vector<Point> out;
  for (const auto& m : means) {
    for (std::size_t i = 0; i < per; ++i) {
      Point p = m;
      for (auto& v : p) v += spread * rng.normal();
      out.push_back(p);
    }
  }
  return out;
}

ConfusionDictionary random_dictionary(Rng& rng, std::size_t classes, std::size_t k, std::size_t d) {
  ConfusionDictionary dict;
  dict.centers = ad::Tensor<float>({classes, k, d});
  for (auto& v : dict.centers.storage()) v = static_cast<float>(rng.uniform(-2, 2));
  for (std::size_t c = 0; c < classes; ++c) dict.class_labels.push_back(c);
  return dict;
}

}  // namespace

TEST_CASE("k-means WCSS never increases and converges") {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const std::size_t d = 1 + rng.index(5);
    std::vector<Point> pts(20 + rng.index(80), Point(d));
    for (auto& p : pts)
      for (auto& v : p) v = rng.normal();
    const auto r = kmeans(pts, 1 + rng.index(6), static_cast<std::uint64_t>(t));
    REQUIRE(!r.wcss_history.empty());
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) CHECK(r.wcss_history[i] <= r.wcss_history[i - 1]);
    CHECK(r.converged);
    CHECK(r.iterations <= 100);
  }
}

TEST_CASE("k-means with one center returns the mean") {
  Rng rng(2);
  std::vector<Point> pts(50, Point(3));
  Point mean(3, 0.0);
  for (auto& p : pts)
    for (std::size_t j = 0; j < 3; ++j) {
      p[j] = rng.uniform(-5, 5);
      mean[j] += p[j] / 50.0;
    }
  const auto r = kmeans(pts, 1, 7);
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.centers[0][j] == doctest::Approx(mean[j]).epsilon(1e-12));
}

TEST_CASE("k-means recovers two separated blobs") {
  Rng rng(3);
  const std::vector<Point> means{{-5.0, 0.0}, {5.0, 1.0}};
  // Symmetric noise around each mean so the sample means match exactly.
  std::vector<Point> pts;
  for (const auto& m : means) {
    for (int i = 0; i < 40; ++i) {
      const double a = rng.normal() * 0.3, b = rng.normal() * 0.3;
      pts.push_back({m[0] + a, m[1] + b});
      pts.push_back({m[0] - a, m[1] - b});
    }
  }
  const auto r = kmeans(pts, 2, 11);
  for (const auto& m : means) {
    double best = 1e9;
    for (const auto& c : r.centers) best = std::min(best, std::hypot(c[0] - m[0], c[1] - m[1]));
    CHECK(best < 1e-3);
  }
  // Everything in one blob shares an assignment.
  for (std::size_t i = 1; i < 80; ++i) CHECK(r.assignment[i] == r.assignment[0]);
  CHECK(r.assignment[80] != r.assignment[0]);
}

TEST_CASE("k-means rejects bad arguments") {
  CHECK_THROWS_AS(kmeans({}, 2, 0), ShapeError);
  CHECK_THROWS_AS(kmeans({{1.0}, {2.0}}, 0, 0), ConfigError);
}

TEST_CASE("dictionary build: shape, padding and missing classes") {
  Rng rng(4);
  std::vector<std::vector<float>> reprs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 40; ++i) {
    labels.push_back(i % 3 == 2 && i > 3 ? 0 : i % 3);
    reprs.push_back({static_cast<float>(rng.normal()), static_cast<float>(rng.normal())});
  }
  std::vector<KMeansResult> stats;
  const auto dict = build_confusion_dictionary(reprs, labels, 3, 5, 0, &stats);
  CHECK(dict.classes() == 3);
  CHECK(dict.per_class() == 6);
  CHECK(dict.dim() == 2);
  CHECK(stats.size() == 3);
  // Class 2 has a single sample: every center is that sample.
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(dict.centers.storage()[(2 * 6 + k) * 2] == reprs[2][0]);
  }
  labels[2] = 1;
  CHECK_THROWS_AS(build_confusion_dictionary(reprs, labels, 3, 5), ConfigError);
  CHECK(default_draw_size(3) == 2);
  CHECK(default_draw_size(2) == 1);
}

TEST_CASE("expected bias with every center equals the dictionary mean") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto dict = random_dictionary(rng, 3, 6, 4);
    const auto e = expected_bias(dict, dict.total_centers(), 7, 13);
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0;
      for (std::size_t c = 0; c < dict.total_centers(); ++c) mean += dict.centers.storage()[c * 4 + j];
      mean /= static_cast<double>(dict.total_centers());
      CHECK(std::abs(e[j] - mean) < 1e-6);
    }
  }
}

TEST_CASE("Monte Carlo estimate lies within three standard errors") {
  Rng rng(6);
  const auto dict = random_dictionary(rng, 3, 6, 5);
  const std::size_t n = dict.total_centers();
  const std::size_t m = static_cast<std::size_t>(std::ceil(3 / 2.0));
  const std::size_t draws = 10000;
  const auto e = expected_bias(dict, m, draws, 99);
  for (std::size_t j = 0; j < 5; ++j) {
    double mean = 0, sq = 0;
    for (std::size_t c = 0; c < n; ++c) mean += dict.centers.storage()[c * 5 + j];
    mean /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) sq += std::pow(dict.centers.storage()[c * 5 + j] - mean, 2);
    const double pop_var = sq / static_cast<double>(n);
    // Sampling without replacement shrinks the variance of a draw's mean.
    const double draw_var = pop_var / static_cast<double>(m) * static_cast<double>(n - m) / static_cast<double>(n - 1);
    const double se = std::sqrt(draw_var / static_cast<double>(draws));
    CHECK(std::abs(e[j] - mean) < 3 * se);
  }
}
