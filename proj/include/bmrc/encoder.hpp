// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Word-level vocabulary, combined (query, sentence) inputs, and a small
// trainable transformer encoder with hand-written backpropagation.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <unordered_map>

#include "bmrc/queries.hpp"

namespace bmrc {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Token inventory. Ids 0..2 are reserved for the beginning token, the
// segment token, and the unknown token.
class Vocabulary {
 public:
  static constexpr int kBeginId = 0;
  static constexpr int kSegId = 1;
  static constexpr int kUnkId = 2;

  Vocabulary() {
    add("[begin]");
    add("[seg]");
    add("[unk]");
  }

  int add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
    return id;
  }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const { return id_to_token_.at(id); }
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // Every word the query templates can emit, so template tokens never
  // map to [unk] even when absent from the corpus.
  static const std::vector<std::string>& template_words() {
    static const std::vector<std::string> words = {
        "what", "aspects", "opinions", "given", "the",     "aspect", "does",
        "opinion", "describe", "sentiment", "and", "?", "/"};
    return words;
  }

  static Vocabulary build(const std::vector<const DatasetSplit*>& splits) {
    Vocabulary vocab;
    for (const std::string& w : template_words()) vocab.add(w);
    for (const DatasetSplit* split : splits) {
      for (const AnnotatedSentence& s : split->sentences) {
        for (const std::string& t : s.tokens) vocab.add(t);
      }
    }
    return vocab;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct EncoderConfig {
  int d_h = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_len = 128;
  double dropout_rate = 0.1;

  void validate() const {
    if (d_h <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (d_h % n_heads != 0) {
      throw ConfigError("d_h (" + std::to_string(d_h) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
      throw ConfigError("dropout_rate must lie in [0, 1)");
    }
  }
};

// Layout: [begin], q_1..q_|q|, [seg], x_1..x_N. Segment 0 covers the
// beginning token, the query, and the segment token; segment 1 the sentence.
struct CombinedInput {
  std::vector<int> ids;
  std::vector<int> segments;
  int query_len = 0;

  int length() const { return static_cast<int>(ids.size()); }
  int sentence_len() const { return length() - query_len - 2; }
  // Row of sentence token j (0-based).
  int sentence_row(int j) const { return query_len + 2 + j; }
};

inline CombinedInput build_combined_input(const Query& query, const AnnotatedSentence& sentence,
                                          const Vocabulary& vocab, int max_len) {
  const int len = query.length() + sentence.size() + 2;
  if (len > max_len) {
    throw DataError("combined input of length " + std::to_string(len) + " for sentence " +
                    sentence.id + " exceeds max_len " + std::to_string(max_len));
  }
  CombinedInput in;
  in.query_len = query.length();
  in.ids.reserve(len);
  in.segments.reserve(len);
  in.ids.push_back(Vocabulary::kBeginId);
  in.segments.push_back(0);
  for (const std::string& t : query.text_tokens) {
    in.ids.push_back(vocab.id(t));
    in.segments.push_back(0);
  }
  in.ids.push_back(Vocabulary::kSegId);
  in.segments.push_back(0);
  for (const std::string& t : sentence.tokens) {
    in.ids.push_back(vocab.id(t));
    in.segments.push_back(1);
  }
  return in;
}

enum class RunMode { Train, Eval };

// One learnable tensor plus its gradient accumulator.
struct Param {
  Eigen::MatrixXd v;
  Eigen::MatrixXd g;

  void setup(Eigen::Index rows, Eigen::Index cols) {
    v.setZero(rows, cols);
    g.setZero(rows, cols);
  }
};

struct NamedParam {
  std::string name;
  bool head_group = false;  // heads get their own learning rate
  Param* param = nullptr;
};

namespace nn {

inline void gaussian_init(Eigen::MatrixXd& m, std::mt19937_64& rng, double stddev = 0.02) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  }
}

inline void softmax_rows_inplace(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

// d(softmax)/d(logits) applied rowwise: dS = P .* (dP - rowdot(P, dP)).
inline Eigen::MatrixXd softmax_rows_backward(const Eigen::MatrixXd& probs,
                                             const Eigen::MatrixXd& dprobs) {
  Eigen::MatrixXd out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double dot = probs.row(i).cwiseProduct(dprobs.row(i)).sum();
    out.row(i) = (probs.row(i).array() * (dprobs.row(i).array() - dot)).matrix();
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

constexpr double kLayerNormEps = 1e-5;

inline Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Param& gain,
                                  const Param& offset) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mean = x.row(i).mean();
    double var = (x.row(i).array() - mean).square().sum() / n;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    out.row(i) = ((x.row(i).array() - mean) * inv) * gain.v.row(0).array() +
                 offset.v.row(0).array();
  }
  return out;
}

inline Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& x,
                                           Param& gain, Param& offset) {
  using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
  Eigen::MatrixXd dx(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mean = x.row(i).mean();
    double var = (x.row(i).array() - mean).square().sum() / n;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    RowArray xhat = (x.row(i).array() - mean) * inv;
    RowArray dxhat = dy.row(i).array() * gain.v.row(0).array();
    gain.g.row(0).array() += dy.row(i).array() * xhat;
    offset.g.row(0).array() += dy.row(i).array();
    double mean_dxhat = dxhat.mean();
    double mean_dxhat_xhat = (dxhat * xhat).mean();
    dx.row(i) = (inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)).matrix();
  }
  return dx;
}

}  // namespace nn

struct LinearParam {
  Param w;  // in x out
  Param b;  // 1 x out

  void setup(int in, int out) {
    w.setup(in, out);
    b.setup(1, out);
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    return (x * w.v).rowwise() + b.v.row(0);
  }

  // Accumulates dw/db, returns dx.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy) {
    w.g.noalias() += x.transpose() * dy;
    b.g.row(0) += dy.colwise().sum();
    return dy * w.v.transpose();
  }
};

struct LayerNormParam {
  Param gain;    // 1 x d
  Param offset;  // 1 x d

  void setup(int d) {
    gain.setup(1, d);
    gain.v.setOnes();
    offset.setup(1, d);
  }
};

struct BlockParams {
  LinearParam query_proj, key_proj, value_proj, out_proj;
  LayerNormParam ln_attn;
  LinearParam ff_in, ff_out;
  LayerNormParam ln_ff;
};

struct BlockCache {
  Eigen::MatrixXd x_in;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> probs;      // per-head attention weights
  std::vector<Eigen::MatrixXd> prob_mask;  // inverted-dropout masks (empty in eval)
  Eigen::MatrixXd attn_concat;
  Eigen::MatrixXd resid_attn;
  Eigen::MatrixXd ln_attn_out;
  Eigen::MatrixXd ff_pre;
  Eigen::MatrixXd ff_act;
  Eigen::MatrixXd ff_mask;  // 0x0 when dropout off
  Eigen::MatrixXd resid_ff;
};

struct EncoderCache {
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd hidden;
};

// Contract for anything that maps a combined input to contextual hidden
// states (deterministic, eval-style). The trainable stack below implements
// it; a pre-trained backend can be substituted behind the same surface.
class ContextualEncoder {
 public:
  virtual ~ContextualEncoder() = default;
  virtual int hidden_width() const = 0;
  virtual Eigen::MatrixXd contextualize(const CombinedInput& input) const = 0;
};

// Summed word/position/segment embeddings followed by post-norm
// transformer blocks (self-attention + position-wise feed-forward, each
// with residual connection and layer normalization).
class EncoderStack : public ContextualEncoder {
 public:
  EncoderStack(const EncoderConfig& cfg, int vocab_size) : cfg_(cfg), vocab_size_(vocab_size) {
    cfg.validate();
    word_emb_.setup(vocab_size, cfg.d_h);
    pos_emb_.setup(cfg.max_len, cfg.d_h);
    seg_emb_.setup(2, cfg.d_h);
    blocks_.resize(cfg.n_layers);
    for (auto& b : blocks_) {
      b.query_proj.setup(cfg.d_h, cfg.d_h);
      b.key_proj.setup(cfg.d_h, cfg.d_h);
      b.value_proj.setup(cfg.d_h, cfg.d_h);
      b.out_proj.setup(cfg.d_h, cfg.d_h);
      b.ln_attn.setup(cfg.d_h);
      b.ff_in.setup(cfg.d_h, cfg.d_ff);
      b.ff_out.setup(cfg.d_ff, cfg.d_h);
      b.ln_ff.setup(cfg.d_h);
    }
  }

  void init_weights(std::mt19937_64& rng) {
    nn::gaussian_init(word_emb_.v, rng);
    nn::gaussian_init(pos_emb_.v, rng);
    nn::gaussian_init(seg_emb_.v, rng);
    for (auto& b : blocks_) {
      for (LinearParam* lin :
           {&b.query_proj, &b.key_proj, &b.value_proj, &b.out_proj, &b.ff_in, &b.ff_out}) {
        nn::gaussian_init(lin->w.v, rng);
      }
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  int hidden_width() const override { return cfg_.d_h; }

  Eigen::MatrixXd contextualize(const CombinedInput& input) const override {
    return encode(embed(input), RunMode::Eval);
  }

  Eigen::MatrixXd embed(const CombinedInput& in) const {
    Eigen::MatrixXd e(in.length(), cfg_.d_h);
    for (int i = 0; i < in.length(); ++i) {
      int id = in.ids[i];
      if (id < 0 || id >= vocab_size_) {
        throw DataError("token id " + std::to_string(id) + " outside embedding table of size " +
                        std::to_string(vocab_size_));
      }
      if (i >= cfg_.max_len) {
        throw DataError("position " + std::to_string(i) + " outside position table of size " +
                        std::to_string(cfg_.max_len));
      }
      e.row(i) = word_emb_.v.row(id) + pos_emb_.v.row(i) + seg_emb_.v.row(in.segments[i]);
    }
    return e;
  }

  // Runs the block stack. `cache` is required for a later backward pass;
  // `rng` is consulted only when mode == Train and dropout_rate > 0.
  Eigen::MatrixXd encode(const Eigen::MatrixXd& embedded, RunMode mode,
                         std::mt19937_64* rng = nullptr, EncoderCache* cache = nullptr) const {
    if (!embedded.allFinite()) throw std::runtime_error("non-finite encoder input");
    const int len = static_cast<int>(embedded.rows());
    const int dk = cfg_.d_h / cfg_.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const bool dropout = mode == RunMode::Train && cfg_.dropout_rate > 0.0;
    if (dropout && rng == nullptr) {
      throw std::runtime_error("train-mode encode with dropout needs an rng");
    }
    if (cache) cache->blocks.assign(blocks_.size(), BlockCache{});

    Eigen::MatrixXd x = embedded;
    for (size_t bi = 0; bi < blocks_.size(); ++bi) {
      const BlockParams& b = blocks_[bi];
      BlockCache local;
      BlockCache& c = cache ? cache->blocks[bi] : local;
      c.x_in = x;
      c.q = b.query_proj.forward(x);
      c.k = b.key_proj.forward(x);
      c.v = b.value_proj.forward(x);
      c.probs.resize(cfg_.n_heads);
      if (dropout) c.prob_mask.resize(cfg_.n_heads);
      c.attn_concat.resize(len, cfg_.d_h);
      for (int h = 0; h < cfg_.n_heads; ++h) {
        Eigen::MatrixXd scores =
            c.q.middleCols(h * dk, dk) * c.k.middleCols(h * dk, dk).transpose() * scale;
        nn::softmax_rows_inplace(scores);
        c.probs[h] = scores;
        if (dropout) {
          c.prob_mask[h] = sample_mask(len, len, *rng);
          scores = scores.cwiseProduct(c.prob_mask[h]);
        }
        c.attn_concat.middleCols(h * dk, dk).noalias() = scores * c.v.middleCols(h * dk, dk);
      }
      c.resid_attn = x + b.out_proj.forward(c.attn_concat);
      c.ln_attn_out = nn::layer_norm(c.resid_attn, b.ln_attn.gain, b.ln_attn.offset);
      c.ff_pre = b.ff_in.forward(c.ln_attn_out);
      c.ff_act = c.ff_pre.unaryExpr([](double u) { return nn::gelu(u); });
      Eigen::MatrixXd ff = b.ff_out.forward(c.ff_act);
      if (dropout) {
        c.ff_mask = sample_mask(ff.rows(), ff.cols(), *rng);
        ff = ff.cwiseProduct(c.ff_mask);
      }
      c.resid_ff = c.ln_attn_out + ff;
      x = nn::layer_norm(c.resid_ff, b.ln_ff.gain, b.ln_ff.offset);
      if (!x.allFinite()) {
        throw std::runtime_error("non-finite activations in encoder block " + std::to_string(bi));
      }
    }
    if (cache) cache->hidden = x;
    return x;
  }

  // Backpropagates dH through the stack and embeddings, accumulating
  // parameter gradients. `cache` must come from encode() on this input.
  void backward(const CombinedInput& in, const EncoderCache& cache, Eigen::MatrixXd dh) {
    const int dk = cfg_.d_h / cfg_.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int bi = static_cast<int>(blocks_.size()) - 1; bi >= 0; --bi) {
      BlockParams& b = blocks_[bi];
      const BlockCache& c = cache.blocks[bi];
      Eigen::MatrixXd dresid_ff =
          nn::layer_norm_backward(dh, c.resid_ff, b.ln_ff.gain, b.ln_ff.offset);
      Eigen::MatrixXd dln_attn_out = dresid_ff;
      Eigen::MatrixXd dff = dresid_ff;
      if (c.ff_mask.size() > 0) dff = dff.cwiseProduct(c.ff_mask);
      Eigen::MatrixXd dff_act = b.ff_out.backward(c.ff_act, dff);
      Eigen::MatrixXd dff_pre =
          dff_act.cwiseProduct(c.ff_pre.unaryExpr([](double u) { return nn::gelu_grad(u); }));
      dln_attn_out += b.ff_in.backward(c.ln_attn_out, dff_pre);
      Eigen::MatrixXd dresid_attn =
          nn::layer_norm_backward(dln_attn_out, c.resid_attn, b.ln_attn.gain, b.ln_attn.offset);
      Eigen::MatrixXd dx = dresid_attn;
      Eigen::MatrixXd dattn_concat = b.out_proj.backward(c.attn_concat, dresid_attn);
      Eigen::MatrixXd dq(dx.rows(), cfg_.d_h), dkm(dx.rows(), cfg_.d_h), dv(dx.rows(), cfg_.d_h);
      for (int h = 0; h < cfg_.n_heads; ++h) {
        Eigen::MatrixXd dctx = dattn_concat.middleCols(h * dk, dk);
        Eigen::MatrixXd probs_used = c.probs[h];
        if (!c.prob_mask.empty()) probs_used = probs_used.cwiseProduct(c.prob_mask[h]);
        Eigen::MatrixXd dprobs = dctx * c.v.middleCols(h * dk, dk).transpose();
        dv.middleCols(h * dk, dk).noalias() = probs_used.transpose() * dctx;
        if (!c.prob_mask.empty()) dprobs = dprobs.cwiseProduct(c.prob_mask[h]);
        Eigen::MatrixXd dscores = nn::softmax_rows_backward(c.probs[h], dprobs) * scale;
        dq.middleCols(h * dk, dk).noalias() = dscores * c.k.middleCols(h * dk, dk);
        dkm.middleCols(h * dk, dk).noalias() = dscores.transpose() * c.q.middleCols(h * dk, dk);
      }
      dx += b.query_proj.backward(c.x_in, dq);
      dx += b.key_proj.backward(c.x_in, dkm);
      dx += b.value_proj.backward(c.x_in, dv);
      dh = std::move(dx);
    }
    for (int i = 0; i < in.length(); ++i) {
      word_emb_.g.row(in.ids[i]) += dh.row(i);
      pos_emb_.g.row(i) += dh.row(i);
      seg_emb_.g.row(in.segments[i]) += dh.row(i);
    }
  }

  void collect_params(std::vector<NamedParam>& out) {
    out.push_back({"embed.word", false, &word_emb_});
    out.push_back({"embed.pos", false, &pos_emb_});
    out.push_back({"embed.seg", false, &seg_emb_});
    for (size_t i = 0; i < blocks_.size(); ++i) {
      std::string p = "block" + std::to_string(i) + ".";
      BlockParams& b = blocks_[i];
      out.push_back({p + "attn.wq", false, &b.query_proj.w});
      out.push_back({p + "attn.bq", false, &b.query_proj.b});
      out.push_back({p + "attn.wk", false, &b.key_proj.w});
      out.push_back({p + "attn.bk", false, &b.key_proj.b});
      out.push_back({p + "attn.wv", false, &b.value_proj.w});
      out.push_back({p + "attn.bv", false, &b.value_proj.b});
      out.push_back({p + "attn.wo", false, &b.out_proj.w});
      out.push_back({p + "attn.bo", false, &b.out_proj.b});
      out.push_back({p + "ln_attn.gain", false, &b.ln_attn.gain});
      out.push_back({p + "ln_attn.offset", false, &b.ln_attn.offset});
      out.push_back({p + "ff.w1", false, &b.ff_in.w});
      out.push_back({p + "ff.b1", false, &b.ff_in.b});
      out.push_back({p + "ff.w2", false, &b.ff_out.w});
      out.push_back({p + "ff.b2", false, &b.ff_out.b});
      out.push_back({p + "ln_ff.gain", false, &b.ln_ff.gain});
      out.push_back({p + "ln_ff.offset", false, &b.ln_ff.offset});
    }
  }

 private:
  Eigen::MatrixXd sample_mask(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) const {
    // Inverted dropout: kept entries carry 1/keep so eval needs no rescale.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double keep = 1.0 - cfg_.dropout_rate;
    Eigen::MatrixXd mask(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        mask(i, j) = unif(rng) < keep ? 1.0 / keep : 0.0;
      }
    }
    return mask;
  }

  EncoderConfig cfg_;
  int vocab_size_;
  Param word_emb_, pos_emb_, seg_emb_;
  std::vector<BlockParams> blocks_;
};

}  // namespace bmrc
