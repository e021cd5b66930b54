// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Query templates for the three turns and gold supervision derivation.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <variant>

#include "bmrc/corpus.hpp"

namespace bmrc {

enum class Direction { AtoO, OtoA };

inline const char* direction_name(Direction d) {
  return d == Direction::AtoO ? "ao" : "oa";
}

enum class QueryKind { NonRestrictive, Restrictive, SentimentCls };

// One query instance. text_tokens is the fully instantiated template;
// anchor_spans are the sentence spans of any interpolated entities
// (none for non-restrictive, one for restrictive, aspect followed by
// its opinions for sentiment classification).
struct Query {
  QueryKind kind = QueryKind::NonRestrictive;
  std::optional<Direction> direction;
  std::vector<std::string> text_tokens;
  std::vector<TokenSpan> anchor_spans;

  int length() const { return static_cast<int>(text_tokens.size()); }
};

// Per-sentence-token binary start/end indicators for extraction answers.
struct SpanLabels {
  std::vector<uint8_t> start;
  std::vector<uint8_t> end;
};

struct SupervisionInstance {
  std::string sentence_id;
  Query query;
  std::variant<SpanLabels, Sentiment> answer;

  bool is_extraction() const { return std::holds_alternative<SpanLabels>(answer); }
  const SpanLabels& labels() const { return std::get<SpanLabels>(answer); }
  Sentiment sentiment() const { return std::get<Sentiment>(answer); }
};

inline Query build_nonrestrictive_query(Direction direction) {
  Query q;
  q.kind = QueryKind::NonRestrictive;
  q.direction = direction;
  q.text_tokens = direction == Direction::AtoO
                      ? std::vector<std::string>{"what", "aspects", "?"}
                      : std::vector<std::string>{"what", "opinions", "?"};
  return q;
}

namespace detail {

inline std::vector<std::string> span_tokens(const std::vector<std::string>& sentence_tokens,
                                            TokenSpan span) {
  if (span.start < 0 || span.end >= static_cast<int>(sentence_tokens.size()) ||
      span.start > span.end) {
    throw DataError("entity span [" + std::to_string(span.start) + "," +
                    std::to_string(span.end) + "] invalid for sentence of " +
                    std::to_string(sentence_tokens.size()) + " tokens");
  }
  return {sentence_tokens.begin() + span.start, sentence_tokens.begin() + span.end + 1};
}

}  // namespace detail

// "what opinions given the aspect <entity> ?"  (A->O)
// "what aspect does the opinion <entity> describe ?"  (O->A)
inline Query build_restrictive_query(Direction direction,
                                     const std::vector<std::string>& sentence_tokens,
                                     TokenSpan entity) {
  std::vector<std::string> entity_tokens = detail::span_tokens(sentence_tokens, entity);
  Query q;
  q.kind = QueryKind::Restrictive;
  q.direction = direction;
  q.anchor_spans = {entity};
  if (direction == Direction::AtoO) {
    q.text_tokens = {"what", "opinions", "given", "the", "aspect"};
    q.text_tokens.insert(q.text_tokens.end(), entity_tokens.begin(), entity_tokens.end());
    q.text_tokens.push_back("?");
  } else {
    q.text_tokens = {"what", "aspect", "does", "the", "opinion"};
    q.text_tokens.insert(q.text_tokens.end(), entity_tokens.begin(), entity_tokens.end());
    q.text_tokens.push_back("describe");
    q.text_tokens.push_back("?");
  }
  return q;
}

// "what sentiment given the aspect <a> and the opinion <o_1> / ... / <o_n> ?"
inline Query build_sentiment_query(const std::vector<std::string>& sentence_tokens,
                                   TokenSpan aspect, const std::vector<TokenSpan>& opinions) {
  if (opinions.empty()) throw DataError("sentiment query needs at least one opinion");
  Query q;
  q.kind = QueryKind::SentimentCls;
  q.anchor_spans.push_back(aspect);
  q.text_tokens = {"what", "sentiment", "given", "the", "aspect"};
  auto aspect_tokens = detail::span_tokens(sentence_tokens, aspect);
  q.text_tokens.insert(q.text_tokens.end(), aspect_tokens.begin(), aspect_tokens.end());
  q.text_tokens.insert(q.text_tokens.end(), {"and", "the", "opinion"});
  for (size_t i = 0; i < opinions.size(); ++i) {
    if (i) q.text_tokens.push_back("/");
    auto op_tokens = detail::span_tokens(sentence_tokens, opinions[i]);
    q.text_tokens.insert(q.text_tokens.end(), op_tokens.begin(), op_tokens.end());
    q.anchor_spans.push_back(opinions[i]);
  }
  q.text_tokens.push_back("?");
  return q;
}

namespace detail {

inline SpanLabels labels_for_spans(int n_tokens, const std::set<TokenSpan>& spans) {
  SpanLabels labels;
  labels.start.assign(n_tokens, 0);
  labels.end.assign(n_tokens, 0);
  for (TokenSpan s : spans) {
    labels.start[s.start] = 1;
    labels.end[s.end] = 1;
  }
  return labels;
}

}  // namespace detail

// Expands one annotated sentence into its full supervision set:
//   1. A->O non-restrictive instance labeling all distinct aspect spans;
//   2. O->A non-restrictive instance labeling all distinct opinion spans;
//   3. one A->O restrictive instance per distinct aspect (its opinions);
//   4. one O->A restrictive instance per distinct opinion (its aspects);
//   5. one sentiment instance per distinct aspect.
// Entities are ordered by (start, end). A gold aspect carrying two
// different sentiments is rejected.
inline std::vector<SupervisionInstance> derive_supervision(const AnnotatedSentence& sentence) {
  const int n = sentence.size();
  std::set<TokenSpan> aspects;
  std::set<TokenSpan> opinions;
  std::map<TokenSpan, std::set<TokenSpan>> opinions_of;   // aspect -> opinions
  std::map<TokenSpan, std::set<TokenSpan>> aspects_of;    // opinion -> aspects
  std::map<TokenSpan, Sentiment> sentiment_of;            // aspect -> class
  for (const GoldTriplet& t : sentence.triplets) {
    aspects.insert(t.aspect);
    opinions.insert(t.opinion);
    opinions_of[t.aspect].insert(t.opinion);
    aspects_of[t.opinion].insert(t.aspect);
    auto [it, inserted] = sentiment_of.emplace(t.aspect, t.sentiment);
    if (!inserted && it->second != t.sentiment) {
      throw DataError("sentence " + sentence.id + ": aspect [" +
                      std::to_string(t.aspect.start) + "," + std::to_string(t.aspect.end) +
                      "] appears with conflicting sentiments");
    }
  }

  std::vector<SupervisionInstance> out;
  out.push_back({sentence.id, build_nonrestrictive_query(Direction::AtoO),
                 detail::labels_for_spans(n, aspects)});
  out.push_back({sentence.id, build_nonrestrictive_query(Direction::OtoA),
                 detail::labels_for_spans(n, opinions)});
  for (TokenSpan a : aspects) {
    out.push_back({sentence.id,
                   build_restrictive_query(Direction::AtoO, sentence.tokens, a),
                   detail::labels_for_spans(n, opinions_of[a])});
  }
  for (TokenSpan o : opinions) {
    out.push_back({sentence.id,
                   build_restrictive_query(Direction::OtoA, sentence.tokens, o),
                   detail::labels_for_spans(n, aspects_of[o])});
  }
  for (TokenSpan a : aspects) {
    std::vector<TokenSpan> ops(opinions_of[a].begin(), opinions_of[a].end());
    out.push_back({sentence.id, build_sentiment_query(sentence.tokens, a, ops),
                   sentiment_of[a]});
  }
  return out;
}

// One-line debug form, e.g.
//   s3  restrictive ao  "what opinions given the aspect food ?"  starts=1 ends=1
inline std::string to_debug_line(const SupervisionInstance& inst) {
  std::ostringstream out;
  out << inst.sentence_id << '\t';
  switch (inst.query.kind) {
    case QueryKind::NonRestrictive: out << "nonrestrictive"; break;
    case QueryKind::Restrictive: out << "restrictive"; break;
    case QueryKind::SentimentCls: out << "sentiment"; break;
  }
  out << '\t' << (inst.query.direction ? direction_name(*inst.query.direction) : "-") << "\t\"";
  for (size_t i = 0; i < inst.query.text_tokens.size(); ++i) {
    if (i) out << ' ';
    out << inst.query.text_tokens[i];
  }
  out << '"' << '\t';
  if (inst.is_extraction()) {
    const SpanLabels& l = inst.labels();
    out << "starts=";
    for (size_t i = 0; i < l.start.size(); ++i) {
      if (l.start[i]) out << i << ',';
    }
    out << " ends=";
    for (size_t i = 0; i < l.end.size(); ++i) {
      if (l.end[i]) out << i << ',';
    }
  } else {
    out << "class=" << sentiment_tag(inst.sentiment());
  }
  return out.str();
}

}  // namespace bmrc
