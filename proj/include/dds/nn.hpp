#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dds/rng.hpp"
#include "dds/tape.hpp"

namespace dds {

// Deterministic, ordered collection of every trainable matrix in a model.
// Registration order defines the flat parameter layout used by checkpoints,
// the optimizer, and the finite-difference gradient check. Registration
// happens after construction so that parameter addresses are final; modules
// must not register themselves from constructors (containers may relocate
// them while the model is being assembled).
class ParamRegistry {
 public:
  void add(Parameter* p) { params_.push_back(p); }
  const std::vector<Parameter*>& params() const { return params_; }

  size_t scalar_count() const;
  void zero_grads();
  std::vector<double> flatten_values() const;
  std::vector<double> flatten_grads() const;
  void load_values(const std::vector<double>& flat);

 private:
  std::vector<Parameter*> params_;
};

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value x) const;
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int d);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value x) const;
};

struct MultiHeadAttention {
  int heads = 1;
  Linear q, k, v, o;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int d, int heads, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value query, Value key, Value value) const;
};

struct FeedForward {
  Linear l1, l2;

  FeedForward() = default;
  FeedForward(const std::string& name, int d, int hidden, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value x) const;
};

// Self-attention + FFN, post-norm.
struct EncoderLayer {
  MultiHeadAttention self_attn;
  FeedForward ffn;
  LayerNorm ln1, ln2;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, int d, int heads, int hidden, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value x) const;
};

// Cross-attention of current queries over previous-frame embeddings + FFN.
struct TemporalDecoderLayer {
  MultiHeadAttention cross_attn;
  FeedForward ffn;
  LayerNorm ln1, ln2;

  TemporalDecoderLayer() = default;
  TemporalDecoderLayer(const std::string& name, int d, int heads, int hidden, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value queries, Value prev) const;
};

// Standard decoder layer: query self-attention, cross-attention over the
// encoded tokens, FFN; learnable query positions added to the attention
// queries/keys, post-norm.
struct SpatialDecoderLayer {
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  FeedForward ffn;
  LayerNorm ln1, ln2, ln3;

  SpatialDecoderLayer() = default;
  SpatialDecoderLayer(const std::string& name, int d, int heads, int hidden, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value x, Value memory, Value query_pos) const;
};

// 3-layer MLP with sigmoid output, one box per row.
struct BoxHead {
  Linear l1, l2, l3;

  BoxHead() = default;
  BoxHead(const std::string& name, int d, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, Value x) const;
};

// 2D sinusoidal positional embedding over an ho x wo token grid, row per
// token, DETR-style split between the y and x coordinates.
Mat sinusoidal_position_embedding(int ho, int wo, int d);

}  // namespace dds
