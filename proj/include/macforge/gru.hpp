#pragma once

#include <cstddef>
#include <span>

#include "macforge/rng.hpp"

namespace macforge::model {

// Token embedding followed by a stack of GRU layers. Parameters live in a
// caller-owned flat array starting at `offset`; this class only knows the
// layout. Gate order inside every 3H block is [update z | reset r | new n].
struct GruShape {
  int vocab = 0;
  int embed = 0;
  int hidden = 0;
  int layers = 1;
};

class GruStack {
 public:
  GruStack() = default;
  GruStack(GruShape shape, std::size_t offset);

  const GruShape& shape() const { return shape_; }
  std::size_t offset() const { return offset_; }
  std::size_t param_count() const { return param_count_; }
  // Doubles of recurrent state: layers * hidden.
  std::size_t state_size() const;
  // Doubles cached per step for the backward pass.
  std::size_t cache_size() const { return cache_size_; }

  void init(std::span<double> params, Rng& rng) const;

  // Advances every layer by one token. `cache` may be null for inference.
  void step(std::span<const double> params, int token, const double* h_prev, double* h_next,
            double* cache) const;

  // `dh` holds dL/dh_next on entry and dL/dh_prev on return. Parameter
  // gradients accumulate into `grad` (same layout as params).
  void step_backward(std::span<const double> params, std::span<double> grad, int token,
                     const double* cache, double* dh) const;

  // Output of the top layer inside a full state vector.
  const double* top(const double* state) const;

 private:
  std::size_t embed_offset() const { return offset_; }
  std::size_t layer_offset(int l) const;
  int layer_input(int l) const { return l == 0 ? shape_.embed : shape_.hidden; }
  std::size_t layer_cache_offset(int l) const;

  GruShape shape_;
  std::size_t offset_ = 0;
  std::size_t param_count_ = 0;
  std::size_t cache_size_ = 0;
};

}  // namespace macforge::model
