#include "muplon/nn.hpp"

#include <cmath>

namespace muplon::nn {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (auto& x : t.storage()) x = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

void add_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
               bool bias) {
  store.add(prefix + ".w", glorot(in, out, rng));
  if (bias) store.add(prefix + ".b", Tensor({1, out}, 0.0f));
}

Var dense(ParamBinding& params, const std::string& prefix, const Var& x, bool bias) {
  auto y = ad::matmul(x, params(prefix + ".w"));
  return bias ? ad::add(y, params(prefix + ".b")) : y;
}

}  // namespace muplon::nn
