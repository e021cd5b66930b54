// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Full model: encoder stack + answer heads, per-instance loss/backward,
// and the query-answering interface used at inference time.
#pragma once

#include "bmrc/inference.hpp"

namespace bmrc {

// A supervision instance resolved against the vocabulary, ready for the
// encoder. Compiling once up front keeps the training loop free of token
// lookups.
struct CompiledInstance {
  std::string sentence_id;
  QueryKind kind = QueryKind::NonRestrictive;
  CombinedInput input;
  std::variant<SpanLabels, Sentiment> answer;

  bool is_extraction() const { return std::holds_alternative<SpanLabels>(answer); }
  const SpanLabels& labels() const { return std::get<SpanLabels>(answer); }
  Sentiment sentiment() const { return std::get<Sentiment>(answer); }
};

class BmrcModel : public TripletModel {
 public:
  BmrcModel(const EncoderConfig& cfg, Vocabulary vocab)
      : cfg_(cfg), vocab_(std::move(vocab)), encoder_(cfg, vocab_.size()) {
    span_head_.setup(cfg.d_h);
    sentiment_head_.setup(cfg.d_h);
  }

  BmrcModel(const EncoderConfig& cfg, Vocabulary vocab, uint64_t seed)
      : BmrcModel(cfg, std::move(vocab)) {
    std::mt19937_64 rng(seed);
    encoder_.init_weights(rng);
    span_head_.init_weights(rng);
    sentiment_head_.init_weights(rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  EncoderStack& encoder() { return encoder_; }
  const EncoderStack& encoder() const { return encoder_; }
  SpanHead& span_head() { return span_head_; }
  SentimentHead& sentiment_head() { return sentiment_head_; }

  // Registry of every learnable tensor. Pointers stay valid while the
  // model object is alive and unmoved.
  std::vector<NamedParam> params() {
    std::vector<NamedParam> out;
    encoder_.collect_params(out);
    span_head_.collect_params(out);
    sentiment_head_.collect_params(out);
    return out;
  }

  void zero_grads() {
    for (NamedParam& p : params()) p.param->g.setZero();
  }

  CompiledInstance compile(const SupervisionInstance& inst,
                           const AnnotatedSentence& sentence) const {
    CompiledInstance out;
    out.sentence_id = inst.sentence_id;
    out.kind = inst.query.kind;
    out.input = build_combined_input(inst.query, sentence, vocab_, cfg_.max_len);
    out.answer = inst.answer;
    if (inst.is_extraction() &&
        static_cast<int>(inst.labels().start.size()) != out.input.sentence_len()) {
      throw DataError("sentence " + inst.sentence_id + ": label length " +
                      std::to_string(inst.labels().start.size()) + " != sentence length " +
                      std::to_string(out.input.sentence_len()));
    }
    return out;
  }

  // Cross-entropy loss of one instance, computed from logits: the
  // extraction term sums two-class start/end cross-entropies over sentence
  // tokens, the sentiment term is a three-class cross-entropy.
  double loss(const CompiledInstance& inst, RunMode mode, std::mt19937_64* rng = nullptr) {
    Eigen::MatrixXd hidden = encoder_.encode(encoder_.embed(inst.input), mode, rng);
    return loss_from_hidden(inst, hidden, nullptr);
  }

  // Forward + backward; accumulates parameter gradients and returns the
  // loss. Gradients are not zeroed here so batches can accumulate.
  double loss_and_backward(const CompiledInstance& inst, RunMode mode,
                           std::mt19937_64* rng = nullptr) {
    EncoderCache cache;
    encoder_.encode(encoder_.embed(inst.input), mode, rng, &cache);
    Eigen::MatrixXd dhidden = Eigen::MatrixXd::Zero(cache.hidden.rows(), cache.hidden.cols());
    double loss = loss_from_hidden(inst, cache.hidden, &dhidden);
    encoder_.backward(inst.input, cache, std::move(dhidden));
    return loss;
  }

  // TripletModel interface (eval mode). Overlength extraction queries
  // yield nullopt so inference can skip them.
  std::optional<TokenSpanProbabilities> answer_extraction(
      const Query& query, const AnnotatedSentence& sentence) const override {
    if (query.length() + sentence.size() + 2 > cfg_.max_len) return std::nullopt;
    CombinedInput in = build_combined_input(query, sentence, vocab_, cfg_.max_len);
    return predict_span_probs(encoder_.contextualize(in), in.query_len, span_head_);
  }

  SentimentDistribution answer_sentiment(const Query& query,
                                         const AnnotatedSentence& sentence) const override {
    if (query.length() + sentence.size() + 2 > cfg_.max_len) {
      std::cerr << "warning: sentence " << sentence.id
                << " sentiment query overlength, returning uniform distribution\n";
      return SentimentDistribution{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    }
    CombinedInput in = build_combined_input(query, sentence, vocab_, cfg_.max_len);
    return predict_sentiment(encoder_.contextualize(in), sentiment_head_);
  }

  // Rounds every parameter through float32, the checkpoint precision.
  void quantize_to_f32() {
    for (NamedParam& p : params()) {
      p.param->v = p.param->v.unaryExpr(
          [](double x) { return static_cast<double>(static_cast<float>(x)); });
    }
  }

 private:
  // Computes the instance loss from hidden states; when dhidden is given,
  // also writes d(loss)/d(hidden) and accumulates head gradients.
  double loss_from_hidden(const CompiledInstance& inst, const Eigen::MatrixXd& hidden,
                          Eigen::MatrixXd* dhidden) {
    if (inst.is_extraction()) {
      const SpanLabels& gold = inst.labels();
      const int n = inst.input.sentence_len();
      double total = 0.0;
      for (int j = 0; j < n; ++j) {
        const int row = inst.input.sentence_row(j);
        Eigen::RowVectorXd h = hidden.row(row);
        total += two_class_term(h, span_head_.w_start, gold.start[j], row, dhidden);
        total += two_class_term(h, span_head_.w_end, gold.end[j], row, dhidden);
      }
      return total;
    }
    Eigen::RowVectorXd z = hidden.row(0) * sentiment_head_.w_cls.v;
    double mx = z.maxCoeff();
    Eigen::RowVectorXd e = (z.array() - mx).exp();
    double lse = mx + std::log(e.sum());
    int gold = static_cast<int>(inst.sentiment());
    double loss = lse - z(gold);
    if (dhidden) {
      Eigen::RowVectorXd dz = e / e.sum();
      dz(gold) -= 1.0;
      sentiment_head_.w_cls.g.noalias() += hidden.row(0).transpose() * dz;
      dhidden->row(0) += dz * sentiment_head_.w_cls.v.transpose();
    }
    return loss;
  }

  double two_class_term(const Eigen::RowVectorXd& h, Param& w, uint8_t gold, int row,
                        Eigen::MatrixXd* dhidden) {
    Eigen::RowVectorXd z = h * w.v;
    double mx = std::max(z(0), z(1));
    double lse = mx + std::log(std::exp(z(0) - mx) + std::exp(z(1) - mx));
    double loss = lse - z(gold ? 1 : 0);
    if (dhidden) {
      Eigen::RowVectorXd dz(2);
      dz(0) = std::exp(z(0) - lse);
      dz(1) = std::exp(z(1) - lse);
      dz(gold ? 1 : 0) -= 1.0;
      w.g.noalias() += h.transpose() * dz;
      dhidden->row(row) += dz * w.v.transpose();
    }
    return loss;
  }

  EncoderConfig cfg_;
  Vocabulary vocab_;
  EncoderStack encoder_;
  SpanHead span_head_;
  SentimentHead sentiment_head_;
};

}  // namespace bmrc
