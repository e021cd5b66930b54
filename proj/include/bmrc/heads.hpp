// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Answer-prediction heads: per-token start/end classifiers over sentence
// positions and the three-class sentiment classifier on the beginning token.
#pragma once

#include <array>

#include "bmrc/encoder.hpp"

namespace bmrc {

// p_start[j] / p_end[j]: probability that sentence token j begins / ends
// an answer span. Length N (sentence tokens only).
struct TokenSpanProbabilities {
  std::vector<double> p_start;
  std::vector<double> p_end;

  int size() const { return static_cast<int>(p_start.size()); }
};

struct SentimentDistribution {
  std::array<double, 3> p{};  // indexed by Sentiment

  double of(Sentiment s) const { return p[static_cast<int>(s)]; }
  Sentiment argmax() const {
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (p[c] > p[best]) best = c;
    }
    return static_cast<Sentiment>(best);
  }
};

// W_s, W_e: d_h x 2 (negative class in column 0, positive in column 1).
struct SpanHead {
  Param w_start;
  Param w_end;

  void setup(int d_h) {
    w_start.setup(d_h, 2);
    w_end.setup(d_h, 2);
  }

  void init_weights(std::mt19937_64& rng) {
    nn::gaussian_init(w_start.v, rng);
    nn::gaussian_init(w_end.v, rng);
  }

  void collect_params(std::vector<NamedParam>& out) {
    out.push_back({"span.start", true, &w_start});
    out.push_back({"span.end", true, &w_end});
  }
};

// W_c: d_h x 3.
struct SentimentHead {
  Param w_cls;

  void setup(int d_h) { w_cls.setup(d_h, 3); }
  void init_weights(std::mt19937_64& rng) { nn::gaussian_init(w_cls.v, rng); }
  void collect_params(std::vector<NamedParam>& out) {
    out.push_back({"sentiment", true, &w_cls});
  }
};

namespace detail {

// Two-class softmax positive probability, computed stably.
inline double positive_prob(double neg_logit, double pos_logit) {
  double z = pos_logit - neg_logit;
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// Scores sentence positions only: token j (0-based) lives at hidden row
// query_len + 2 + j.
inline TokenSpanProbabilities predict_span_probs(const Eigen::MatrixXd& hidden, int query_len,
                                                 const SpanHead& head) {
  const int n = static_cast<int>(hidden.rows()) - query_len - 2;
  if (n < 1) {
    throw DataError("hidden sequence of " + std::to_string(hidden.rows()) +
                    " rows too short for query_len " + std::to_string(query_len));
  }
  TokenSpanProbabilities out;
  out.p_start.resize(n);
  out.p_end.resize(n);
  for (int j = 0; j < n; ++j) {
    Eigen::RowVectorXd h = hidden.row(query_len + 2 + j);
    Eigen::RowVectorXd zs = h * head.w_start.v;
    Eigen::RowVectorXd ze = h * head.w_end.v;
    out.p_start[j] = detail::positive_prob(zs(0), zs(1));
    out.p_end[j] = detail::positive_prob(ze(0), ze(1));
  }
  return out;
}

// Softmax of h_1 * W_c (the beginning-token representation).
inline SentimentDistribution predict_sentiment(const Eigen::MatrixXd& hidden,
                                               const SentimentHead& head) {
  if (hidden.rows() < 1) throw DataError("empty hidden sequence");
  Eigen::RowVectorXd z = hidden.row(0) * head.w_cls.v;
  double mx = z.maxCoeff();
  Eigen::RowVectorXd e = (z.array() - mx).exp();
  double sum = e.sum();
  SentimentDistribution out;
  for (int c = 0; c < 3; ++c) out.p[c] = e(c) / sum;
  return out;
}

}  // namespace bmrc
