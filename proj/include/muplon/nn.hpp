#pragma once

#include <string>

#include "muplon/autodiff.hpp"
#include "muplon/param_store.hpp"
#include "muplon/rng.hpp"

namespace muplon::nn {

using Var = ad::Var<float>;

// Glorot-uniform rows x cols matrix.
Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng);

// Registers `<prefix>.w` (in x out) and, when `bias`, `<prefix>.b` (1 x out).
void add_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
               bool bias = true);

// x * w (+ b) for a layer registered with add_dense.
Var dense(ParamBinding& params, const std::string& prefix, const Var& x, bool bias = true);

}  // namespace muplon::nn
