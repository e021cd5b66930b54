// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Exact-match P/R/F1 on the four subtasks and multi-run aggregation.
#pragma once

#include <set>

#include "bmrc/inference.hpp"

namespace bmrc {

// A-S: aspect term and sentiment co-extraction; O: opinion term
// extraction; P: aspect-opinion pair extraction; T: triplet extraction.
enum class MatchMode { AspectSentiment, Opinion, Pair, Triplet };

inline const char* match_mode_name(MatchMode m) {
  switch (m) {
    case MatchMode::AspectSentiment: return "A-S";
    case MatchMode::Opinion: return "O";
    case MatchMode::Pair: return "P";
    case MatchMode::Triplet: return "T";
  }
  return "?";
}

constexpr std::array<MatchMode, 4> kAllMatchModes = {
    MatchMode::AspectSentiment, MatchMode::Opinion, MatchMode::Pair, MatchMode::Triplet};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// The gold-comparable part of a prediction.
struct Triplet {
  TokenSpan aspect;
  TokenSpan opinion;
  Sentiment sentiment = Sentiment::Neutral;

  auto operator<=>(const Triplet&) const = default;

  static Triplet from(const GoldTriplet& g) { return {g.aspect, g.opinion, g.sentiment}; }
  static Triplet from(const TripletPrediction& p) { return {p.aspect, p.opinion, p.sentiment}; }
};

using MatchKey = std::vector<int>;

inline MatchKey project_one(const Triplet& t, MatchMode mode) {
  switch (mode) {
    case MatchMode::AspectSentiment:
      return {t.aspect.start, t.aspect.end, static_cast<int>(t.sentiment)};
    case MatchMode::Opinion:
      return {t.opinion.start, t.opinion.end};
    case MatchMode::Pair:
      return {t.aspect.start, t.aspect.end, t.opinion.start, t.opinion.end};
    case MatchMode::Triplet:
      return {t.aspect.start, t.aspect.end, t.opinion.start, t.opinion.end,
              static_cast<int>(t.sentiment)};
  }
  throw std::logic_error("unreachable match mode");
}

inline std::set<MatchKey> project(const std::vector<Triplet>& items, MatchMode mode) {
  std::set<MatchKey> out;
  for (const Triplet& t : items) out.insert(project_one(t, mode));
  return out;
}

namespace detail {

inline PRF prf_from_counts(size_t hits, size_t n_pred, size_t n_gold) {
  if (n_pred == 0 && n_gold == 0) return {1.0, 1.0, 1.0};
  PRF out;
  out.precision = n_pred ? static_cast<double>(hits) / n_pred : 0.0;
  out.recall = n_gold ? static_cast<double>(hits) / n_gold : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

}  // namespace detail

inline PRF score(const std::vector<Triplet>& pred, const std::vector<Triplet>& gold,
                 MatchMode mode) {
  std::set<MatchKey> p = project(pred, mode);
  std::set<MatchKey> g = project(gold, mode);
  size_t hits = 0;
  for (const MatchKey& k : p) hits += g.count(k);
  return detail::prf_from_counts(hits, p.size(), g.size());
}

// Micro-averaged corpus score: keys are (sentence id, projected key).
// Sentences present on only one side contribute their counts to that side.
inline PRF score_corpus(const std::map<std::string, std::vector<Triplet>>& pred,
                        const std::map<std::string, std::vector<Triplet>>& gold,
                        MatchMode mode) {
  size_t hits = 0, n_pred = 0, n_gold = 0;
  for (const auto& [id, triplets] : pred) {
    std::set<MatchKey> p = project(triplets, mode);
    n_pred += p.size();
    auto it = gold.find(id);
    if (it == gold.end()) continue;
    std::set<MatchKey> g = project(it->second, mode);
    for (const MatchKey& k : p) hits += g.count(k);
  }
  for (const auto& [id, triplets] : gold) n_gold += project(triplets, mode).size();
  return detail::prf_from_counts(hits, n_pred, n_gold);
}

// Runs full inference over a split and scores all four subtasks against
// the split's gold annotations.
inline std::array<PRF, 4> evaluate_split(const TripletModel& model, const DatasetSplit& split,
                                         const InferenceParams& params,
                                         DirectionMode direction = DirectionMode::Both) {
  std::map<std::string, std::vector<Triplet>> pred, gold;
  for (const AnnotatedSentence& s : split.sentences) {
    std::vector<Triplet>& g = gold[s.id];
    for (const GoldTriplet& t : s.triplets) g.push_back(Triplet::from(t));
    std::vector<Triplet>& p = pred[s.id];
    for (const TripletPrediction& t : extract_triplets(model, s, params, direction)) {
      p.push_back(Triplet::from(t));
    }
  }
  std::array<PRF, 4> out;
  for (size_t m = 0; m < kAllMatchModes.size(); ++m) {
    out[m] = score_corpus(pred, gold, kAllMatchModes[m]);
  }
  return out;
}

// Component-wise arithmetic mean; F1 is averaged, not recomputed.
inline PRF aggregate_runs(const std::vector<PRF>& runs) {
  if (runs.empty()) throw DataError("aggregate_runs needs at least one run");
  PRF out;
  for (const PRF& r : runs) {
    out.precision += r.precision;
    out.recall += r.recall;
    out.f1 += r.f1;
  }
  out.precision /= runs.size();
  out.recall /= runs.size();
  out.f1 /= runs.size();
  return out;
}

}  // namespace bmrc
