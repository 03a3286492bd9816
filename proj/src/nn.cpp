#include "dds/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dds {

size_t ParamRegistry::scalar_count() const {
  size_t n = 0;
  for (const auto* p : params_) n += static_cast<size_t>(p->value.size());
  return n;
}

void ParamRegistry::zero_grads() {
  for (auto* p : params_) p->grad.setZero();
}

std::vector<double> ParamRegistry::flatten_values() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto* p : params_) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        flat.push_back(p->value(i, j));
  }
  return flat;
}

std::vector<double> ParamRegistry::flatten_grads() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto* p : params_) {
    for (Eigen::Index i = 0; i < p->grad.rows(); ++i)
      for (Eigen::Index j = 0; j < p->grad.cols(); ++j)
        flat.push_back(p->grad(i, j));
  }
  return flat;
}

void ParamRegistry::load_values(const std::vector<double>& flat) {
  if (flat.size() != scalar_count()) {
    throw std::invalid_argument("load_values: size mismatch");
  }
  size_t k = 0;
  for (auto* p : params_) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        p->value(i, j) = flat[k++];
  }
}

namespace {

Mat xavier_uniform(int in, int out, Rng& rng) {
  double limit = std::sqrt(6.0 / (in + out));
  Mat m(in, out);
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

}  // namespace

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight(name + ".weight", xavier_uniform(in, out, rng)),
      bias(name + ".bias", Mat::Zero(1, out)) {}

void Linear::register_into(ParamRegistry& reg) {
  reg.add(&weight);
  reg.add(&bias);
}

Value Linear::forward(Tape& t, Value x) const {
  return t.add_rowvec(t.matmul(x, t.leaf(const_cast<Parameter&>(weight))),
                      t.leaf(const_cast<Parameter&>(bias)));
}

LayerNorm::LayerNorm(const std::string& name, int d)
    : gamma(name + ".gamma", Mat::Ones(1, d)), beta(name + ".beta", Mat::Zero(1, d)) {}

void LayerNorm::register_into(ParamRegistry& reg) {
  reg.add(&gamma);
  reg.add(&beta);
}

Value LayerNorm::forward(Tape& t, Value x) const {
  return t.layer_norm(x, t.leaf(const_cast<Parameter&>(gamma)),
                      t.leaf(const_cast<Parameter&>(beta)));
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, int d, int heads,
                                       Rng& rng)
    : heads(heads),
      q(name + ".q", d, d, rng),
      k(name + ".k", d, d, rng),
      v(name + ".v", d, d, rng),
      o(name + ".o", d, d, rng) {
  if (heads < 1 || d % heads != 0) {
    throw std::invalid_argument("attention: d must be divisible by head count");
  }
}

void MultiHeadAttention::register_into(ParamRegistry& reg) {
  q.register_into(reg);
  k.register_into(reg);
  v.register_into(reg);
  o.register_into(reg);
}

Value MultiHeadAttention::forward(Tape& t, Value query, Value key, Value value) const {
  int d = static_cast<int>(q.weight.value.cols());
  int hd = d / heads;
  Value Q = q.forward(t, query);
  Value K = k.forward(t, key);
  Value V = v.forward(t, value);
  std::vector<Value> outs;
  outs.reserve(heads);
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int h = 0; h < heads; ++h) {
    Value Qh = t.slice_cols(Q, h * hd, hd);
    Value Kh = t.slice_cols(K, h * hd, hd);
    Value Vh = t.slice_cols(V, h * hd, hd);
    Value scores = t.scale(t.matmul_nt(Qh, Kh), inv_sqrt);
    Value attn = t.softmax_rows(scores);
    outs.push_back(t.matmul(attn, Vh));
  }
  return o.forward(t, t.concat_cols(outs));
}

FeedForward::FeedForward(const std::string& name, int d, int hidden, Rng& rng)
    : l1(name + ".l1", d, hidden, rng), l2(name + ".l2", hidden, d, rng) {}

void FeedForward::register_into(ParamRegistry& reg) {
  l1.register_into(reg);
  l2.register_into(reg);
}

Value FeedForward::forward(Tape& t, Value x) const {
  return l2.forward(t, t.gelu(l1.forward(t, x)));
}

EncoderLayer::EncoderLayer(const std::string& name, int d, int heads, int hidden,
                           Rng& rng)
    : self_attn(name + ".self", d, heads, rng),
      ffn(name + ".ffn", d, hidden, rng),
      ln1(name + ".ln1", d),
      ln2(name + ".ln2", d) {}

void EncoderLayer::register_into(ParamRegistry& reg) {
  self_attn.register_into(reg);
  ffn.register_into(reg);
  ln1.register_into(reg);
  ln2.register_into(reg);
}

Value EncoderLayer::forward(Tape& t, Value x) const {
  Value n = ln1.forward(t, x);
  x = t.add(x, self_attn.forward(t, n, n, n));
  return t.add(x, ffn.forward(t, ln2.forward(t, x)));
}

TemporalDecoderLayer::TemporalDecoderLayer(const std::string& name, int d, int heads,
                                           int hidden, Rng& rng)
    : cross_attn(name + ".cross", d, heads, rng),
      ffn(name + ".ffn", d, hidden, rng),
      ln1(name + ".ln1", d),
      ln2(name + ".ln2", d) {}

void TemporalDecoderLayer::register_into(ParamRegistry& reg) {
  cross_attn.register_into(reg);
  ffn.register_into(reg);
  ln1.register_into(reg);
  ln2.register_into(reg);
}

Value TemporalDecoderLayer::forward(Tape& t, Value queries, Value prev) const {
  Value x = t.add(queries, cross_attn.forward(t, ln1.forward(t, queries), prev, prev));
  return t.add(x, ffn.forward(t, ln2.forward(t, x)));
}

SpatialDecoderLayer::SpatialDecoderLayer(const std::string& name, int d, int heads,
                                         int hidden, Rng& rng)
    : self_attn(name + ".self", d, heads, rng),
      cross_attn(name + ".cross", d, heads, rng),
      ffn(name + ".ffn", d, hidden, rng),
      ln1(name + ".ln1", d),
      ln2(name + ".ln2", d),
      ln3(name + ".ln3", d) {}

void SpatialDecoderLayer::register_into(ParamRegistry& reg) {
  self_attn.register_into(reg);
  cross_attn.register_into(reg);
  ffn.register_into(reg);
  ln1.register_into(reg);
  ln2.register_into(reg);
  ln3.register_into(reg);
}

Value SpatialDecoderLayer::forward(Tape& t, Value x, Value memory,
                                   Value query_pos) const {
  Value n1 = ln1.forward(t, x);
  Value qk = t.add(n1, query_pos);
  x = t.add(x, self_attn.forward(t, qk, qk, n1));
  Value n2 = ln2.forward(t, x);
  x = t.add(x, cross_attn.forward(t, t.add(n2, query_pos), memory, memory));
  return t.add(x, ffn.forward(t, ln3.forward(t, x)));
}

BoxHead::BoxHead(const std::string& name, int d, Rng& rng)
    : l1(name + ".l1", d, d, rng),
      l2(name + ".l2", d, d, rng),
      l3(name + ".l3", d, 4, rng) {}

void BoxHead::register_into(ParamRegistry& reg) {
  l1.register_into(reg);
  l2.register_into(reg);
  l3.register_into(reg);
}

Value BoxHead::forward(Tape& t, Value x) const {
  x = t.gelu(l1.forward(t, x));
  x = t.gelu(l2.forward(t, x));
  return t.sigmoid(l3.forward(t, x));
}

Mat sinusoidal_position_embedding(int ho, int wo, int d) {
  if (d % 4 != 0) {
    throw std::invalid_argument("positional embedding needs d divisible by 4");
  }
  int half = d / 2;
  Mat pe(static_cast<Eigen::Index>(ho) * wo, d);
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      int row = y * wo + x;
      for (int i = 0; i < half / 2; ++i) {
        double omega = std::pow(10000.0, -2.0 * i / half);
        pe(row, 2 * i) = std::sin(y * omega);
        pe(row, 2 * i + 1) = std::cos(y * omega);
        pe(row, half + 2 * i) = std::sin(x * omega);
        pe(row, half + 2 * i + 1) = std::cos(x * omega);
      }
    }
  }
  return pe;
}

}  // namespace dds
