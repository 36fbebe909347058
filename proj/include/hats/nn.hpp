#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hats/tensor.hpp"

namespace hats {

// Named trainable tensors plus their AdamW moments. Names are unique and keep
// insertion order, which fixes checkpoint layout and update order.
class ParamGroup {
 public:
  struct Slot {
    std::string name;
    Tensor value;
    std::vector<double> m;
    std::vector<double> v;
  };

  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  std::size_t size() const { return slots_.size(); }
  std::size_t scalar_count() const;

  // Drops all gradients so the next backward pass starts clean.
  void clear_grads();

  std::uint64_t step = 0;

 private:
  std::vector<Slot> slots_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Seeded parameter initializer. Weights and embeddings are drawn from
// uniform(-1/sqrt(fan), 1/sqrt(fan)).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor uniform(Shape shape, std::size_t fan);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

namespace nn {

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static Linear create(ParamGroup& params, const std::string& name, std::size_t in,
                       std::size_t out, Initializer& init);
  static Linear bind(ParamGroup& params, const std::string& name);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  // Applies to the last axis of x.
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  static LayerNorm create(ParamGroup& params, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const;
};

struct AttentionOutput {
  Tensor weights;  // head-averaged probabilities, [.., Lq, Lk]
  Tensor out;      // [.., Lq, d]
};

struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamGroup& params, const std::string& name, std::size_t dim,
                                   std::size_t heads, Initializer& init);
  std::size_t dim() const { return q_proj.out_features(); }
  // q: [Lq, d] or [B, Lq, d]; k, v: [Lk, d] or [B, Lk, d].
  AttentionOutput operator()(const Tensor& q, const Tensor& k, const Tensor& v) const;
};

// Post-norm block: LN(x + MHA(x)), then LN(x + FFN(x)); FFN width 2d with GELU.
struct TransformerEncoderLayer {
  MultiHeadAttention attn;
  LayerNorm norm1, norm2;
  Linear ff_in, ff_out;

  static TransformerEncoderLayer create(ParamGroup& params, const std::string& name,
                                        std::size_t dim, std::size_t heads, Initializer& init);
  Tensor operator()(const Tensor& x) const;
};

struct TransformerEncoder {
  std::vector<TransformerEncoderLayer> layers;

  static TransformerEncoder create(ParamGroup& params, const std::string& name, std::size_t dim,
                                   std::size_t layers, std::size_t heads, Initializer& init);
  // tokens: [L, d] or [B, L, d].
  Tensor operator()(const Tensor& tokens) const;
};

}  // namespace nn

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Parameters that the last backward pass never reached are skipped instead
  // of raising a training-state error.
  bool skip_missing_grads = false;
};

// One decoupled-weight-decay Adam update over every parameter in the group.
void adamw_step(ParamGroup& params, const AdamWConfig& config);

}  // namespace hats
