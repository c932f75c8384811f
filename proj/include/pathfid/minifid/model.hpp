#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathfid/error.hpp"
#include "pathfid/rng.hpp"
#include "pathfid/minifid/tokenizer.hpp"

namespace pathfid::minifid {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TokenIds = std::vector<int>;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  int d_ff = 0;  // 0 means 4 * d_model
  int max_input_block_len = 256;
  int max_target_len = 64;
  std::uint64_t rng_seed = 1;

  int ff_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (vocab_size < 5) throw Error("minifid", "vocab_size must cover the reserved tokens");
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
      throw Error("minifid", "d_model must be a positive multiple of n_heads");
    if (n_layers_enc < 1 || n_layers_dec < 1) throw Error("minifid", "need at least one encoder and decoder layer");
    if (max_input_block_len < 1 || max_target_len < 1) throw Error("minifid", "length limits must be positive");
    if (d_ff < 0) throw Error("minifid", "d_ff must be non-negative");
  }
};

/// Named weight tensors. Biases and layer-norm vectors are 1 x n.
class ParamRegistry {
 public:
  Mat& operator[](const std::string& name) { return tensors_[name]; }

  const Mat& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("minifid", "no parameter tensor '" + name + "'");
    return it->second;
  }

  Mat& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("minifid", "no parameter tensor '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  ParamRegistry zeros_like() const {
    ParamRegistry z;
    for (const auto& [name, t] : tensors_) z.tensors_[name] = Mat::Zero(t.rows(), t.cols());
    return z;
  }

  void set_zero() {
    for (auto& [_, t] : tensors_) t.setZero();
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& [_, t] : tensors_) s += t.squaredNorm();
    return s;
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
  }

  /// First tensor holding a NaN or infinity, if any.
  std::optional<std::string> first_non_finite() const {
    for (const auto& [name, t] : tensors_)
      if (!t.allFinite()) return name;
    return std::nullopt;
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  bool operator==(const ParamRegistry& o) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    for (const auto& [name, t] : tensors_) {
      auto it = o.tensors_.find(name);
      if (it == o.tensors_.end() || it->second.rows() != t.rows() || it->second.cols() != t.cols() ||
          it->second != t)
        return false;
    }
    return true;
  }

 private:
  std::map<std::string, Mat> tensors_;
};

using ModelParams = ParamRegistry;
using Gradients = ParamRegistry;

inline std::string enc_name(int layer, const std::string& leaf) { return "enc." + std::to_string(layer) + "." + leaf; }
inline std::string dec_name(int layer, const std::string& leaf) { return "dec." + std::to_string(layer) + "." + leaf; }

/// Deterministic initialization: N(0, 1) embeddings, N(0, 1/fan_in)
/// projections, zero biases, unit layer-norm gains.
inline ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  ModelParams p;
  const int d = cfg.d_model;
  const int f = cfg.ff_width();
  auto normal = [&](int rows, int cols, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
  };
  auto linear = [&](const std::string& w, const std::string& b, int in, int out) {
    p[w] = normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)));
    p[b] = Mat::Zero(1, out);
  };
  auto norm = [&](const std::string& pfx) {
    p[pfx + ".g"] = Mat::Ones(1, d);
    p[pfx + ".b"] = Mat::Zero(1, d);
  };
  auto attention = [&](const std::string& pfx) {
    for (const char* x : {"q", "k", "v", "o"}) linear(pfx + ".w" + x, pfx + ".b" + x, d, d);
  };
  auto ffn = [&](const std::string& pfx) {
    linear(pfx + ".w1", pfx + ".b1", d, f);
    linear(pfx + ".w2", pfx + ".b2", f, d);
  };

  p["embed"] = normal(cfg.vocab_size, d, 1.0);
  for (int l = 0; l < cfg.n_layers_enc; ++l) {
    norm(enc_name(l, "ln1"));
    attention(enc_name(l, "self"));
    norm(enc_name(l, "ln2"));
    ffn(enc_name(l, "ff"));
  }
  norm("enc.ln_f");
  for (int l = 0; l < cfg.n_layers_dec; ++l) {
    norm(dec_name(l, "ln1"));
    attention(dec_name(l, "self"));
    norm(dec_name(l, "ln2"));
    attention(dec_name(l, "cross"));
    norm(dec_name(l, "ln3"));
    ffn(dec_name(l, "ff"));
  }
  norm("dec.ln_f");
  linear("out.w", "out.b", d, cfg.vocab_size);
  return p;
}

// ---------------------------------------------------------------------------
// Encoder attention mask

/// Block-diagonal mask over the fused sequence: a query attends only to keys
/// of its own block.
class BlockMask {
 public:
  explicit BlockMask(const std::vector<int>& block_lengths) {
    int off = 0;
    for (int len : block_lengths) {
      if (len <= 0) throw Error("minifid", "empty encoder block");
      starts_.push_back(off);
      off += len;
    }
    starts_.push_back(off);
  }

  int num_blocks() const { return static_cast<int>(starts_.size()) - 1; }
  int total_len() const { return starts_.back(); }
  int block_start(int b) const { return starts_[static_cast<std::size_t>(b)]; }
  int block_len(int b) const { return starts_[static_cast<std::size_t>(b) + 1] - starts_[static_cast<std::size_t>(b)]; }

  int block_of(int row) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), row);
    return static_cast<int>(it - starts_.begin()) - 1;
  }

  bool allows(int query, int key) const { return block_of(query) == block_of(key); }

  long long attendable_pairs() const {
    long long n = 0;
    for (int b = 0; b < num_blocks(); ++b) n += 1LL * block_len(b) * block_len(b);
    return n;
  }

 private:
  std::vector<int> starts_;
};

// ---------------------------------------------------------------------------
// Primitive layers with cached forward state

/// Sinusoidal positions 0..len-1.
inline Mat positional(int len, int d) {
  Mat pe(len, d);
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < d; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / d);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  return pe;
}

inline const Mat& positional_table(int len, int d) {
  thread_local std::map<int, Mat> cache;
  Mat& t = cache[d];
  if (t.rows() < len) t = positional(std::max<int>(len, 2 * static_cast<int>(t.rows())), d);
  return t;
}

inline Mat linear_fwd(const Mat& x, const Mat& w, const Mat& b) {
  Mat y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

inline Mat linear_bwd(const Mat& x, const Mat& w, const Mat& dy, Mat& dw, Mat& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

inline constexpr double kLayerNormEps = 1e-5;

struct NormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

inline Mat layernorm_fwd(const Mat& x, const Mat& g, const Mat& b, NormCache& c) {
  const double d = static_cast<double>(x.cols());
  Eigen::VectorXd mean = x.rowwise().mean();
  c.xhat = x.colwise() - mean;
  Eigen::VectorXd var = c.xhat.rowwise().squaredNorm() / d;
  c.inv_std = (var.array() + kLayerNormEps).rsqrt();
  c.xhat = c.inv_std.asDiagonal() * c.xhat;
  Mat y = c.xhat * g.row(0).asDiagonal();
  y.rowwise() += b.row(0);
  return y;
}

inline Mat layernorm_bwd(const Mat& dy, const Mat& g, const NormCache& c, Mat& dg, Mat& db) {
  const double d = static_cast<double>(dy.cols());
  dg.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
  db.row(0) += dy.colwise().sum();
  Mat dxhat = dy * g.row(0).asDiagonal();
  Eigen::VectorXd sum1 = dxhat.rowwise().sum();
  Eigen::VectorXd sum2 = dxhat.cwiseProduct(c.xhat).rowwise().sum();
  Mat dx = d * dxhat;
  dx.colwise() -= sum1;
  dx -= sum2.asDiagonal() * c.xhat;
  return (c.inv_std / d).asDiagonal() * dx;
}

inline double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  constexpr double k = 0.7978845608028654;
  double t = std::tanh(k * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

struct FfnCache {
  Mat x, pre, act;
};

inline Mat ffn_fwd(const ModelParams& p, const std::string& pfx, const Mat& x, FfnCache& c) {
  c.x = x;
  c.pre = linear_fwd(x, p.at(pfx + ".w1"), p.at(pfx + ".b1"));
  c.act = c.pre.unaryExpr([](double v) { return gelu(v); });
  return linear_fwd(c.act, p.at(pfx + ".w2"), p.at(pfx + ".b2"));
}

inline Mat ffn_bwd(const ModelParams& p, const std::string& pfx, const Mat& dy, const FfnCache& c, Gradients& g) {
  Mat dact = linear_bwd(c.act, p.at(pfx + ".w2"), dy, g.at(pfx + ".w2"), g.at(pfx + ".b2"));
  Mat dpre = dact.cwiseProduct(c.pre.unaryExpr([](double v) { return gelu_grad(v); }));
  return linear_bwd(c.x, p.at(pfx + ".w1"), dpre, g.at(pfx + ".w1"), g.at(pfx + ".b1"));
}

/// Keys/values of a memory already projected for one attention module.
struct ProjectedMemory {
  Mat k, v;
};

struct AttnCache {
  Mat xq, xkv;
  Mat q, k, v;
  std::vector<Mat> probs;  // one (nq x nk) map per head
  Mat concat;
};

/// Row-wise softmax; entries set to -inf receive exactly zero weight.
inline void softmax_rows(Mat& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

/// Multi-head attention. With `causal`, query i sees keys 0..i. `memory`
/// short-circuits the key/value projections of `xkv`. `pairs`, when given,
/// accumulates the number of (query, key) scores that received weight in
/// one map.
inline Mat attention_fwd(const ModelParams& p, const std::string& pfx, int heads, const Mat& xq, const Mat& xkv,
                         bool causal, AttnCache& c, const ProjectedMemory* memory = nullptr,
                         long long* pairs = nullptr) {
  const int d = static_cast<int>(xq.cols());
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.xq = xq;
  c.q = linear_fwd(xq, p.at(pfx + ".wq"), p.at(pfx + ".bq"));
  if (memory) {
    c.k = memory->k;
    c.v = memory->v;
  } else {
    c.xkv = xkv;
    c.k = linear_fwd(xkv, p.at(pfx + ".wk"), p.at(pfx + ".bk"));
    c.v = linear_fwd(xkv, p.at(pfx + ".wv"), p.at(pfx + ".bv"));
  }
  const Eigen::Index nq = c.q.rows();
  const Eigen::Index nk = c.k.rows();
  c.probs.assign(static_cast<std::size_t>(heads), Mat());
  c.concat.resize(nq, d);
  for (int h = 0; h < heads; ++h) {
    Mat s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
    if (causal)
      for (Eigen::Index i = 0; i < nq; ++i)
        for (Eigen::Index j = i + 1; j < nk; ++j) s(i, j) = -std::numeric_limits<double>::infinity();
    softmax_rows(s);
    c.concat.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
    c.probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  if (pairs) *pairs += causal ? nq * (nq + 1) / 2 : nq * nk;
  return linear_fwd(c.concat, p.at(pfx + ".wo"), p.at(pfx + ".bo"));
}

/// Returns d(xq); d(xkv) is accumulated into `dxkv` (sized like xkv).
inline Mat attention_bwd(const ModelParams& p, const std::string& pfx, int heads, const Mat& dy, const AttnCache& c,
                         Gradients& g, Mat& dxkv) {
  const int d = static_cast<int>(c.q.cols());
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat dconcat = linear_bwd(c.concat, p.at(pfx + ".wo"), dy, g.at(pfx + ".wo"), g.at(pfx + ".bo"));
  Mat dq = Mat::Zero(c.q.rows(), d);
  Mat dk = Mat::Zero(c.k.rows(), d);
  Mat dv = Mat::Zero(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Mat& prob = c.probs[static_cast<std::size_t>(h)];
    auto dout = dconcat.middleCols(h * dh, dh);
    Mat dp = dout * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = prob.transpose() * dout;
    Eigen::VectorXd inner = dp.cwiseProduct(prob).rowwise().sum();
    Mat ds = prob.cwiseProduct(dp.colwise() - inner) * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  dxkv += linear_bwd(c.xkv, p.at(pfx + ".wk"), dk, g.at(pfx + ".wk"), g.at(pfx + ".bk"));
  dxkv += linear_bwd(c.xkv, p.at(pfx + ".wv"), dv, g.at(pfx + ".wv"), g.at(pfx + ".bv"));
  return linear_bwd(c.xq, p.at(pfx + ".wq"), dq, g.at(pfx + ".wq"), g.at(pfx + ".bq"));
}

// ---------------------------------------------------------------------------
// Encoder

struct EncoderLayerCache {
  NormCache ln1, ln2;
  AttnCache attn;
  FfnCache ff;
};

struct EncoderBlockCache {
  TokenIds tokens;
  std::vector<EncoderLayerCache> layers;
  NormCache ln_f;
};

/// (sum of block lengths) x d_model; `block_boundaries` holds block start rows.
struct FusedRepresentation {
  Mat rows;
  std::vector<int> block_boundaries;
};

inline void check_token_ids(const ModelConfig& cfg, const TokenIds& ids) {
  for (int t : ids)
    if (t < 0 || t >= cfg.vocab_size) throw Error("minifid", "token id " + std::to_string(t) + " outside vocabulary");
}

/// Encodes one block in isolation; positions restart at 0.
inline Mat encode_block(const ModelConfig& cfg, const ModelParams& p, const TokenIds& block, EncoderBlockCache* cache,
                        long long* pairs = nullptr) {
  const int len = static_cast<int>(block.size());
  const Mat& embed = p.at("embed");
  Mat x(len, cfg.d_model);
  for (int i = 0; i < len; ++i) x.row(i) = embed.row(block[static_cast<std::size_t>(i)]);
  x += positional_table(len, cfg.d_model).topRows(len);

  EncoderBlockCache local;
  EncoderBlockCache& c = cache ? *cache : local;
  c.tokens = block;
  c.layers.resize(static_cast<std::size_t>(cfg.n_layers_enc));
  for (int l = 0; l < cfg.n_layers_enc; ++l) {
    auto& lc = c.layers[static_cast<std::size_t>(l)];
    Mat h = layernorm_fwd(x, p.at(enc_name(l, "ln1.g")), p.at(enc_name(l, "ln1.b")), lc.ln1);
    x += attention_fwd(p, enc_name(l, "self"), cfg.n_heads, h, h, false, lc.attn, nullptr, l == 0 ? pairs : nullptr);
    h = layernorm_fwd(x, p.at(enc_name(l, "ln2.g")), p.at(enc_name(l, "ln2.b")), lc.ln2);
    x += ffn_fwd(p, enc_name(l, "ff"), h, lc.ff);
  }
  return layernorm_fwd(x, p.at("enc.ln_f.g"), p.at("enc.ln_f.b"), c.ln_f);
}

inline void encode_block_bwd(const ModelConfig& cfg, const ModelParams& p, const Mat& dy, const EncoderBlockCache& c,
                             Gradients& g) {
  Mat dx = layernorm_bwd(dy, p.at("enc.ln_f.g"), c.ln_f, g.at("enc.ln_f.g"), g.at("enc.ln_f.b"));
  for (int l = cfg.n_layers_enc - 1; l >= 0; --l) {
    const auto& lc = c.layers[static_cast<std::size_t>(l)];
    Mat dh = ffn_bwd(p, enc_name(l, "ff"), dx, lc.ff, g);
    dx += layernorm_bwd(dh, p.at(enc_name(l, "ln2.g")), lc.ln2, g.at(enc_name(l, "ln2.g")), g.at(enc_name(l, "ln2.b")));
    Mat dkv = Mat::Zero(dx.rows(), dx.cols());
    Mat dq = attention_bwd(p, enc_name(l, "self"), cfg.n_heads, dx, lc.attn, g, dkv);
    dh = dq + dkv;
    dx += layernorm_bwd(dh, p.at(enc_name(l, "ln1.g")), lc.ln1, g.at(enc_name(l, "ln1.g")), g.at(enc_name(l, "ln1.b")));
  }
  Mat& dembed = g.at("embed");
  for (std::size_t i = 0; i < c.tokens.size(); ++i) dembed.row(c.tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
}

struct EncodeStats {
  long long attended_pairs = 0;  // per attention map, summed over blocks
};

/// Encodes every block independently under the block-diagonal mask and
/// concatenates the outputs in block order.
inline FusedRepresentation encode_blocks(const ModelConfig& cfg, const ModelParams& p,
                                         const std::vector<TokenIds>& blocks,
                                         std::vector<EncoderBlockCache>* caches = nullptr,
                                         EncodeStats* stats = nullptr) {
  if (blocks.empty()) throw Error("minifid", "no input blocks");
  std::vector<int> lengths;
  for (const auto& b : blocks) {
    if (static_cast<int>(b.size()) > cfg.max_input_block_len)
      throw Error("minifid", "block of " + std::to_string(b.size()) + " tokens exceeds max_input_block_len " +
                                 std::to_string(cfg.max_input_block_len));
    check_token_ids(cfg, b);
    lengths.push_back(static_cast<int>(b.size()));
  }
  BlockMask mask(lengths);
  FusedRepresentation out;
  out.rows.resize(mask.total_len(), cfg.d_model);
  if (caches) caches->assign(blocks.size(), EncoderBlockCache{});
  for (int b = 0; b < mask.num_blocks(); ++b) {
    out.block_boundaries.push_back(mask.block_start(b));
    EncoderBlockCache* c = caches ? &(*caches)[static_cast<std::size_t>(b)] : nullptr;
    out.rows.middleRows(mask.block_start(b), mask.block_len(b)) =
        encode_block(cfg, p, blocks[static_cast<std::size_t>(b)], c, stats ? &stats->attended_pairs : nullptr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

struct DecoderLayerCache {
  NormCache ln1, ln2, ln3;
  AttnCache self, cross;
  FfnCache ff;
};

struct DecoderCache {
  TokenIds inputs;
  std::vector<DecoderLayerCache> layers;
  NormCache ln_f;
  Mat hidden;  // final normalized states
};

/// Cross-attention keys/values of the fused representation, per layer.
inline std::vector<ProjectedMemory> project_memory(const ModelConfig& cfg, const ModelParams& p, const Mat& x) {
  std::vector<ProjectedMemory> out;
  for (int l = 0; l < cfg.n_layers_dec; ++l) {
    const std::string pfx = dec_name(l, "cross");
    out.push_back({linear_fwd(x, p.at(pfx + ".wk"), p.at(pfx + ".bk")), linear_fwd(x, p.at(pfx + ".wv"), p.at(pfx + ".bv"))});
  }
  return out;
}

/// Logits for every decoder position (rows) over the vocabulary.
inline Mat decode_logits(const ModelConfig& cfg, const ModelParams& p, const Mat& memory, const TokenIds& inputs,
                         DecoderCache& c, const std::vector<ProjectedMemory>* projected = nullptr) {
  const int len = static_cast<int>(inputs.size());
  const Mat& embed = p.at("embed");
  Mat y(len, cfg.d_model);
  for (int i = 0; i < len; ++i) y.row(i) = embed.row(inputs[static_cast<std::size_t>(i)]);
  y += positional_table(len, cfg.d_model).topRows(len);
  c.inputs = inputs;
  c.layers.resize(static_cast<std::size_t>(cfg.n_layers_dec));
  for (int l = 0; l < cfg.n_layers_dec; ++l) {
    auto& lc = c.layers[static_cast<std::size_t>(l)];
    Mat h = layernorm_fwd(y, p.at(dec_name(l, "ln1.g")), p.at(dec_name(l, "ln1.b")), lc.ln1);
    y += attention_fwd(p, dec_name(l, "self"), cfg.n_heads, h, h, true, lc.self);
    h = layernorm_fwd(y, p.at(dec_name(l, "ln2.g")), p.at(dec_name(l, "ln2.b")), lc.ln2);
    const ProjectedMemory* mem = projected ? &(*projected)[static_cast<std::size_t>(l)] : nullptr;
    y += attention_fwd(p, dec_name(l, "cross"), cfg.n_heads, h, memory, false, lc.cross, mem);
    h = layernorm_fwd(y, p.at(dec_name(l, "ln3.g")), p.at(dec_name(l, "ln3.b")), lc.ln3);
    y += ffn_fwd(p, dec_name(l, "ff"), h, lc.ff);
  }
  c.hidden = layernorm_fwd(y, p.at("dec.ln_f.g"), p.at("dec.ln_f.b"), c.ln_f);
  return linear_fwd(c.hidden, p.at("out.w"), p.at("out.b"));
}

/// Back-propagates d(logits); returns d(memory).
inline Mat decode_bwd(const ModelConfig& cfg, const ModelParams& p, const Mat& dlogits, const DecoderCache& c,
                      Eigen::Index memory_rows, Gradients& g) {
  Mat dh = linear_bwd(c.hidden, p.at("out.w"), dlogits, g.at("out.w"), g.at("out.b"));
  Mat dy = layernorm_bwd(dh, p.at("dec.ln_f.g"), c.ln_f, g.at("dec.ln_f.g"), g.at("dec.ln_f.b"));
  Mat dmem = Mat::Zero(memory_rows, cfg.d_model);
  for (int l = cfg.n_layers_dec - 1; l >= 0; --l) {
    const auto& lc = c.layers[static_cast<std::size_t>(l)];
    Mat d = ffn_bwd(p, dec_name(l, "ff"), dy, lc.ff, g);
    dy += layernorm_bwd(d, p.at(dec_name(l, "ln3.g")), lc.ln3, g.at(dec_name(l, "ln3.g")), g.at(dec_name(l, "ln3.b")));
    d = attention_bwd(p, dec_name(l, "cross"), cfg.n_heads, dy, lc.cross, g, dmem);
    dy += layernorm_bwd(d, p.at(dec_name(l, "ln2.g")), lc.ln2, g.at(dec_name(l, "ln2.g")), g.at(dec_name(l, "ln2.b")));
    Mat dkv = Mat::Zero(dy.rows(), dy.cols());
    d = attention_bwd(p, dec_name(l, "self"), cfg.n_heads, dy, lc.self, g, dkv);
    d += dkv;
    dy += layernorm_bwd(d, p.at(dec_name(l, "ln1.g")), lc.ln1, g.at(dec_name(l, "ln1.g")), g.at(dec_name(l, "ln1.b")));
  }
  Mat& dembed = g.at("embed");
  for (std::size_t i = 0; i < c.inputs.size(); ++i) dembed.row(c.inputs[i]) += dy.row(static_cast<Eigen::Index>(i));
  return dmem;
}

// ---------------------------------------------------------------------------
// Objective and inference

/// Full forward state of one teacher-forced example.
struct ForwardState {
  std::vector<EncoderBlockCache> encoder;
  FusedRepresentation fused;
  DecoderCache decoder;
  Mat probs;  // softmax over the vocabulary per target position
  TokenIds labels;
};

/// Mean token cross-entropy of `target` + <eos> given the blocks, with the
/// decoder fed <bos> + target.
inline double forward_loss(const ModelConfig& cfg, const ModelParams& p, const std::vector<TokenIds>& blocks,
                           const TokenIds& target, ForwardState* state = nullptr) {
  if (static_cast<int>(target.size()) > cfg.max_target_len)
    throw Error("minifid", "target of " + std::to_string(target.size()) + " tokens exceeds max_target_len " +
                               std::to_string(cfg.max_target_len));
  check_token_ids(cfg, target);
  ForwardState local;
  ForwardState& s = state ? *state : local;
  s.fused = encode_blocks(cfg, p, blocks, &s.encoder);
  TokenIds inputs{Tokenizer::kBos};
  inputs.insert(inputs.end(), target.begin(), target.end());
  s.labels = target;
  s.labels.push_back(Tokenizer::kEos);
  Mat logits = decode_logits(cfg, p, s.fused.rows, inputs, s.decoder);
  double loss = 0.0;
  s.probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    double z = e.sum();
    s.probs.row(i) = e / z;
    loss -= logits(i, s.labels[static_cast<std::size_t>(i)]) - m - std::log(z);
  }
  return loss / static_cast<double>(logits.rows());
}

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

/// Teacher-forced loss with gradients for every parameter tensor.
inline LossAndGrads loss_and_grads(const ModelConfig& cfg, const ModelParams& p, const std::vector<TokenIds>& blocks,
                                   const TokenIds& target) {
  ForwardState s;
  LossAndGrads out;
  out.loss = forward_loss(cfg, p, blocks, target, &s);
  if (!std::isfinite(out.loss)) {
    auto bad = p.first_non_finite();
    throw Error("minifid", "non-finite loss; offending tensor: " + bad.value_or("out.w (logits overflow)"));
  }
  out.grads = p.zeros_like();
  Mat dlogits = s.probs;
  for (Eigen::Index i = 0; i < dlogits.rows(); ++i) dlogits(i, s.labels[static_cast<std::size_t>(i)]) -= 1.0;
  dlogits /= static_cast<double>(dlogits.rows());
  Mat dmem = decode_bwd(cfg, p, dlogits, s.decoder, s.fused.rows.rows(), out.grads);
  for (std::size_t b = 0; b < s.encoder.size(); ++b) {
    const int start = s.fused.block_boundaries[b];
    const int len = static_cast<int>(s.encoder[b].tokens.size());
    encode_block_bwd(cfg, p, dmem.middleRows(start, len), s.encoder[b], out.grads);
  }
  if (auto bad = out.grads.first_non_finite()) throw Error("minifid", "non-finite gradient in tensor " + *bad);
  return out;
}

/// One-token-at-a-time decoder state: cross-attention memory projected
/// once, self-attention keys/values appended per step. Logits of step t
/// equal row t of decode_logits on the same prefix.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelConfig& cfg, const ModelParams& p, const FusedRepresentation& x)
      : cfg_(cfg), p_(p), memory_(project_memory(cfg, p, x.rows)),
        keys_(static_cast<std::size_t>(cfg.n_layers_dec)), values_(static_cast<std::size_t>(cfg.n_layers_dec)) {}

  Eigen::RowVectorXd step(int token) {
    check_token_ids(cfg_, {token});
    Mat y = p_.at("embed").row(token) + positional_table(pos_ + 1, cfg_.d_model).row(pos_);
    NormCache nc;
    FfnCache fc;
    for (int l = 0; l < cfg_.n_layers_dec; ++l) {
      const auto li = static_cast<std::size_t>(l);
      Mat h = layernorm_fwd(y, p_.at(dec_name(l, "ln1.g")), p_.at(dec_name(l, "ln1.b")), nc);
      const std::string sp = dec_name(l, "self");
      Mat k = linear_fwd(h, p_.at(sp + ".wk"), p_.at(sp + ".bk"));
      Mat v = linear_fwd(h, p_.at(sp + ".wv"), p_.at(sp + ".bv"));
      keys_[li].conservativeResize(pos_ + 1, cfg_.d_model);
      values_[li].conservativeResize(pos_ + 1, cfg_.d_model);
      keys_[li].row(pos_) = k;
      values_[li].row(pos_) = v;
      y += attend(sp, h, keys_[li], values_[li]);
      h = layernorm_fwd(y, p_.at(dec_name(l, "ln2.g")), p_.at(dec_name(l, "ln2.b")), nc);
      y += attend(dec_name(l, "cross"), h, memory_[li].k, memory_[li].v);
      h = layernorm_fwd(y, p_.at(dec_name(l, "ln3.g")), p_.at(dec_name(l, "ln3.b")), nc);
      y += ffn_fwd(p_, dec_name(l, "ff"), h, fc);
    }
    ++pos_;
    Mat hidden = layernorm_fwd(y, p_.at("dec.ln_f.g"), p_.at("dec.ln_f.b"), nc);
    return linear_fwd(hidden, p_.at("out.w"), p_.at("out.b")).row(0);
  }

 private:
  Mat attend(const std::string& pfx, const Mat& h, const Mat& k, const Mat& v) const {
    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat q = linear_fwd(h, p_.at(pfx + ".wq"), p_.at(pfx + ".bq"));
    Mat concat(1, d);
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
      Mat s = (q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose()) * scale;
      softmax_rows(s);
      concat.middleCols(hd * dh, dh).noalias() = s * v.middleCols(hd * dh, dh);
    }
    return linear_fwd(concat, p_.at(pfx + ".wo"), p_.at(pfx + ".bo"));
  }

  const ModelConfig& cfg_;
  const ModelParams& p_;
  std::vector<ProjectedMemory> memory_;
  std::vector<Mat> keys_, values_;
  int pos_ = 0;
};

/// Argmax decoding from <bos>. Stops after emitting <eos> (kept in the
/// output) or after `max_len` tokens.
inline TokenIds decode_greedy(const ModelConfig& cfg, const ModelParams& p, const FusedRepresentation& x, int max_len) {
  if (max_len < 1) throw Error("minifid", "max_len must be at least 1");
  IncrementalDecoder dec(cfg, p, x);
  TokenIds out;
  int next = Tokenizer::kBos;
  for (int t = 0; t < max_len; ++t) {
    Eigen::Index best = 0;
    dec.step(next).maxCoeff(&best);
    next = static_cast<int>(best);
    out.push_back(next);
    if (next == Tokenizer::kEos) break;
  }
  return out;
}

}  // namespace pathfid::minifid
