// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Span decoding, the two MRC directions, pair-set fusion, and triplet
// assembly.
#pragma once

#include <iostream>
#include <map>

#include "bmrc/heads.hpp"

namespace bmrc {

// Anything that can answer the three query kinds over a sentence. The
// trained model implements this; tests substitute gold-backed stand-ins.
// answer_extraction returns nullopt when the combined input cannot be
// encoded (e.g. overlength); such queries are skipped.
class TripletModel {
 public:
  virtual ~TripletModel() = default;
  virtual std::optional<TokenSpanProbabilities> answer_extraction(
      const Query& query, const AnnotatedSentence& sentence) const = 0;
  virtual SentimentDistribution answer_sentiment(const Query& query,
                                                 const AnnotatedSentence& sentence) const = 0;
};

struct InferenceParams {
  double tau = 0.5;      // span decision threshold
  double delta = 0.8;    // fusion threshold
  int max_span_len = 8;  // longest decodable entity

  void validate() const {
    if (tau <= 0.0 || tau >= 1.0) throw ConfigError("tau must lie in (0, 1)");
    if (delta < 0.0 || delta >= 1.0) throw ConfigError("delta must lie in [0, 1)");
    if (max_span_len < 1) throw ConfigError("max_span_len must be >= 1");
  }
};

enum class DirectionMode { Both, AO, OA };

struct ScoredEntity {
  TokenSpan span;
  double probability = 0.0;  // p(start) * p(end)
};

using PairKey = std::pair<TokenSpan, TokenSpan>;  // (aspect span, opinion span)

struct ScoredPair {
  ScoredEntity aspect;
  ScoredEntity opinion;
  Direction direction = Direction::AtoO;
  double pair_probability = 0.0;  // p(first) * p(second | first)

  PairKey key() const { return {aspect.span, opinion.span}; }
};

struct PairSet {
  Direction direction = Direction::AtoO;
  std::map<PairKey, ScoredPair> pairs;

  // Duplicate keys keep the higher-probability instance.
  void insert(const ScoredPair& p) {
    auto [it, added] = pairs.emplace(p.key(), p);
    if (!added && p.pair_probability > it->second.pair_probability) it->second = p;
  }
};

struct FusedPair {
  TokenSpan aspect;
  TokenSpan opinion;
  double probability = 0.0;
  bool in_both = false;  // found by both directions
};

struct TripletPrediction {
  TokenSpan aspect;
  TokenSpan opinion;
  Sentiment sentiment = Sentiment::Neutral;
  double pair_probability = 0.0;
  double sentiment_probability = 0.0;
};

// Thresholded greedy start/end pairing: candidate starts (p_start > tau)
// scan left to right, each taking the nearest unconsumed candidate end at
// or after it with end - start < max_span_len. Unmatched candidates drop.
inline std::vector<ScoredEntity> decode_spans(const TokenSpanProbabilities& probs, double tau,
                                              int max_span_len) {
  const int n = probs.size();
  std::vector<int> ends;
  for (int j = 0; j < n; ++j) {
    if (probs.p_end[j] > tau) ends.push_back(j);
  }
  std::vector<bool> consumed(ends.size(), false);
  std::vector<ScoredEntity> out;
  for (int s = 0; s < n; ++s) {
    if (!(probs.p_start[s] > tau)) continue;
    for (size_t k = 0; k < ends.size(); ++k) {
      int e = ends[k];
      if (consumed[k] || e < s) continue;
      if (e - s >= max_span_len) break;
      consumed[k] = true;
      out.push_back({TokenSpan{s, e}, probs.p_start[s] * probs.p_end[e]});
      break;
    }
  }
  return out;
}

// Turn 1 (non-restrictive) decodes first entities; turn 2 issues one
// restrictive query per decoded entity. Every (first, second) combination
// becomes a pair; pair probability is p(first) * p(second | first).
inline PairSet run_direction(const TripletModel& model, const AnnotatedSentence& sentence,
                             Direction direction, double tau, int max_span_len) {
  PairSet out;
  out.direction = direction;
  Query turn1 = build_nonrestrictive_query(direction);
  auto first_probs = model.answer_extraction(turn1, sentence);
  if (!first_probs) {
    std::cerr << "warning: sentence " << sentence.id
              << " skipped (non-restrictive query could not be encoded)\n";
    return out;
  }
  for (const ScoredEntity& first : decode_spans(*first_probs, tau, max_span_len)) {
    Query turn2 = build_restrictive_query(direction, sentence.tokens, first.span);
    auto second_probs = model.answer_extraction(turn2, sentence);
    if (!second_probs) {
      std::cerr << "warning: sentence " << sentence.id << " entity [" << first.span.start << ","
                << first.span.end << "] skipped (restrictive query could not be encoded)\n";
      continue;
    }
    for (const ScoredEntity& second : decode_spans(*second_probs, tau, max_span_len)) {
      ScoredPair pair;
      pair.direction = direction;
      pair.pair_probability = first.probability * second.probability;
      if (direction == Direction::AtoO) {
        pair.aspect = first;
        pair.opinion = second;
      } else {
        pair.aspect = second;
        pair.opinion = first;
      }
      out.insert(pair);
    }
  }
  return out;
}

// Pairs found by both directions are kept unconditionally (probability =
// max of the two); pairs found by exactly one direction survive iff their
// probability strictly exceeds delta.
inline std::vector<FusedPair> fuse(const PairSet& v_ao, const PairSet& v_oa, double delta) {
  std::vector<FusedPair> out;
  for (const auto& [key, pair] : v_ao.pairs) {
    auto other = v_oa.pairs.find(key);
    if (other != v_oa.pairs.end()) {
      out.push_back({key.first, key.second,
                     std::max(pair.pair_probability, other->second.pair_probability), true});
    } else if (pair.pair_probability > delta) {
      out.push_back({key.first, key.second, pair.pair_probability, false});
    }
  }
  for (const auto& [key, pair] : v_oa.pairs) {
    if (v_ao.pairs.contains(key)) continue;
    if (pair.pair_probability > delta) {
      out.push_back({key.first, key.second, pair.pair_probability, false});
    }
  }
  std::sort(out.begin(), out.end(), [](const FusedPair& a, const FusedPair& b) {
    return std::pair(a.aspect, a.opinion) < std::pair(b.aspect, b.opinion);
  });
  return out;
}

// Groups fused pairs by aspect, asks one sentiment query per aspect with
// its opinions in sentence order, and assigns the argmax class to every
// triplet of that aspect.
inline std::vector<TripletPrediction> classify_sentiments(const TripletModel& model,
                                                          const AnnotatedSentence& sentence,
                                                          const std::vector<FusedPair>& fused) {
  std::map<TokenSpan, std::vector<FusedPair>> by_aspect;
  for (const FusedPair& p : fused) by_aspect[p.aspect].push_back(p);
  std::vector<TripletPrediction> out;
  for (auto& [aspect, pairs] : by_aspect) {
    std::sort(pairs.begin(), pairs.end(),
              [](const FusedPair& a, const FusedPair& b) { return a.opinion < b.opinion; });
    std::vector<TokenSpan> opinions;
    for (const FusedPair& p : pairs) opinions.push_back(p.opinion);
    Query q = build_sentiment_query(sentence.tokens, aspect, opinions);
    SentimentDistribution dist = model.answer_sentiment(q, sentence);
    Sentiment cls = dist.argmax();
    for (const FusedPair& p : pairs) {
      out.push_back({aspect, p.opinion, cls, p.probability, dist.of(cls)});
    }
  }
  return out;  // by_aspect ordering makes this (aspect, opinion)-sorted
}

inline std::vector<TripletPrediction> extract_triplets(const TripletModel& model,
                                                       const AnnotatedSentence& sentence,
                                                       const InferenceParams& params,
                                                       DirectionMode mode = DirectionMode::Both) {
  params.validate();
  std::vector<FusedPair> fused;
  if (mode == DirectionMode::Both) {
    PairSet v_ao = run_direction(model, sentence, Direction::AtoO, params.tau, params.max_span_len);
    PairSet v_oa = run_direction(model, sentence, Direction::OtoA, params.tau, params.max_span_len);
    fused = fuse(v_ao, v_oa, params.delta);
  } else {
    // Unidirectional ablation: the single pair set is used as-is.
    Direction d = mode == DirectionMode::AO ? Direction::AtoO : Direction::OtoA;
    PairSet v = run_direction(model, sentence, d, params.tau, params.max_span_len);
    for (const auto& [key, pair] : v.pairs) {
      fused.push_back({key.first, key.second, pair.pair_probability, false});
    }
  }
  return classify_sentiments(model, sentence, fused);
}

}  // namespace bmrc
