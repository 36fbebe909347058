#include "hats/nn.hpp"

#include <cmath>

#include "hats/error.hpp"
#include "hats/ops.hpp"

namespace hats {

Tensor& ParamGroup::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  value.node()->requires_grad = true;
  index_.emplace(name, slots_.size());
  const std::size_t n = value.numel();
  slots_.push_back(Slot{name, std::move(value), std::vector<double>(n, 0.0),
                        std::vector<double>(n, 0.0)});
  return slots_.back().value;
}

bool ParamGroup::contains(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParamGroup::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return slots_[it->second].value;
}

const Tensor& ParamGroup::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return slots_[it->second].value;
}

std::size_t ParamGroup::scalar_count() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.value.numel();
  return n;
}

void ParamGroup::clear_grads() {
  for (auto& s : slots_) s.value.clear_grad();
}

Tensor Initializer::uniform(Shape shape, std::size_t fan) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = dist(rng_);
  return Tensor::from(std::move(shape), std::move(values));
}

namespace nn {

Linear Linear::create(ParamGroup& params, const std::string& name, std::size_t in,
                      std::size_t out, Initializer& init) {
  Linear l;
  l.weight = params.add(name + ".weight", init.uniform({out, in}, in));
  l.bias = params.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

Linear Linear::bind(ParamGroup& params, const std::string& name) {
  return Linear{params.get(name + ".weight"), params.get(name + ".bias")};
}

Tensor Linear::operator()(const Tensor& x) const {
  const std::size_t in = in_features();
  if (x.rank() == 0 || x.shape().back() != in) {
    throw DimensionError("linear layer expects last dimension " + std::to_string(in) + ", got " +
                         shape_str(x.shape()));
  }
  if (x.rank() == 2) return ops::add(ops::matmul(x, weight, false, true), bias);
  Shape flat{x.numel() / in, in};
  Tensor y = ops::add(ops::matmul(ops::reshape(x, flat), weight, false, true), bias);
  Shape out_shape = x.shape();
  out_shape.back() = out_features();
  return ops::reshape(y, out_shape);
}

LayerNorm LayerNorm::create(ParamGroup& params, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gain = params.add(name + ".gain", Tensor::full({dim}, 1.0));
  ln.bias = params.add(name + ".bias", Tensor::zeros({dim}));
  return ln;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias, eps); }

MultiHeadAttention MultiHeadAttention::create(ParamGroup& params, const std::string& name,
                                              std::size_t dim, std::size_t heads,
                                              Initializer& init) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention m;
  m.q_proj = Linear::create(params, name + ".q", dim, dim, init);
  m.k_proj = Linear::create(params, name + ".k", dim, dim, init);
  m.v_proj = Linear::create(params, name + ".v", dim, dim, init);
  m.out_proj = Linear::create(params, name + ".out", dim, dim, init);
  m.heads = heads;
  return m;
}

AttentionOutput MultiHeadAttention::operator()(const Tensor& q, const Tensor& k,
                                               const Tensor& v) const {
  const std::size_t d = dim();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const bool batched = q.rank() == 3;
  Tensor q3 = batched ? q : ops::reshape(q, {1, q.dim(0), q.dim(1)});
  Tensor k3 = batched ? k : ops::reshape(k, {1, k.dim(0), k.dim(1)});
  Tensor v3 = batched ? v : ops::reshape(v, {1, v.dim(0), v.dim(1)});
  if (q3.rank() != 3 || k3.rank() != 3 || v3.rank() != 3 || k3.shape() != v3.shape() ||
      q3.dim(0) != k3.dim(0)) {
    throw DimensionError("attention operand shapes disagree: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t batch = q3.dim(0), lq = q3.dim(1), lk = k3.dim(1);
  if (lk == 0) throw DimensionError("attention needs at least one key");
  const std::size_t dh = d / heads;

  auto split = [&](const Tensor& x, std::size_t len) {
    Tensor t = ops::reshape(x, {batch, len, heads, dh});
    t = ops::permute(t, {0, 2, 1, 3});
    return ops::reshape(t, {batch * heads, len, dh});
  };
  Tensor qh = split(q_proj(q3), lq);
  Tensor kh = split(k_proj(k3), lk);
  Tensor vh = split(v_proj(v3), lk);

  Tensor scores = ops::scale(ops::bmm(qh, kh, false, true), 1.0 / std::sqrt(double(dh)));
  Tensor probs = ops::softmax(scores);
  Tensor ctx = ops::bmm(probs, vh);
  ctx = ops::reshape(ctx, {batch, heads, lq, dh});
  ctx = ops::permute(ctx, {0, 2, 1, 3});
  ctx = ops::reshape(ctx, {batch, lq, d});
  Tensor out = out_proj(ctx);
  Tensor weights = ops::mean_dim(ops::reshape(probs, {batch, heads, lq, lk}), 1);
  if (!batched) {
    out = ops::reshape(out, {lq, d});
    weights = ops::reshape(weights, {lq, lk});
  }
  return {weights, out};
}

TransformerEncoderLayer TransformerEncoderLayer::create(ParamGroup& params,
                                                        const std::string& name, std::size_t dim,
                                                        std::size_t heads, Initializer& init) {
  TransformerEncoderLayer l;
  l.attn = MultiHeadAttention::create(params, name + ".attn", dim, heads, init);
  l.norm1 = LayerNorm::create(params, name + ".norm1", dim);
  l.ff_in = Linear::create(params, name + ".ff_in", dim, 2 * dim, init);
  l.ff_out = Linear::create(params, name + ".ff_out", 2 * dim, dim, init);
  l.norm2 = LayerNorm::create(params, name + ".norm2", dim);
  return l;
}

Tensor TransformerEncoderLayer::operator()(const Tensor& x) const {
  Tensor h = norm1(ops::add(x, attn(x, x, x).out));
  return norm2(ops::add(h, ff_out(ops::gelu(ff_in(h)))));
}

TransformerEncoder TransformerEncoder::create(ParamGroup& params, const std::string& name,
                                              std::size_t dim, std::size_t layers,
                                              std::size_t heads, Initializer& init) {
  if (layers == 0) throw ConfigError("transformer encoder needs at least one layer");
  TransformerEncoder enc;
  for (std::size_t i = 0; i < layers; ++i) {
    enc.layers.push_back(
        TransformerEncoderLayer::create(params, name + "." + std::to_string(i), dim, heads, init));
  }
  return enc;
}

Tensor TransformerEncoder::operator()(const Tensor& tokens) const {
  if (tokens.rank() < 2 || tokens.dim(tokens.rank() - 2) == 0) {
    throw DimensionError("transformer encoder needs at least one token, got " +
                         shape_str(tokens.shape()));
  }
  Tensor x = tokens;
  for (const auto& layer : layers) x = layer(x);
  return x;
}

}  // namespace nn

void adamw_step(ParamGroup& params, const AdamWConfig& cfg) {
  for (const auto& slot : params.slots()) {
    if (!slot.value.has_grad() && !cfg.skip_missing_grads) {
      throw TrainingStateError("parameter '" + slot.name +
                               "' has no gradient; run backward() before the optimizer step");
    }
  }
  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& slot : params.slots()) {
    if (!slot.value.has_grad()) continue;
    auto p = slot.value.mutable_data();
    auto g = slot.value.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g[i];
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = slot.m[i] / bc1;
      const double v_hat = slot.v[i] / bc2;
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace hats
