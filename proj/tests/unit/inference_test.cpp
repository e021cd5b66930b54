// bmrc -- span decoding, direction runs, fusion, and triplet assembly tests.
#include "bmrc/inference.hpp"

#include <gtest/gtest.h>

#include <random>

#include "bmrc/model.hpp"
#include "support/oracle_model.hpp"

namespace bmrc {
namespace {

using testing::OracleModel;

TEST(DecodeSpans, HandTracedExample) {
  TokenSpanProbabilities probs{{0.9, 0.1, 0.1, 0.2}, {0.95, 0.1, 0.1, 0.1}};
  auto entities = decode_spans(probs, 0.5, 8);
  ASSERT_EQ(entities.size(), 1u);
  EXPECT_EQ(entities[0].span, (TokenSpan{0, 0}));
  EXPECT_NEAR(entities[0].probability, 0.855, 1e-12);
}

TEST(DecodeSpans, AllBelowThreshold) {
  TokenSpanProbabilities probs{{0.3, 0.4}, {0.2, 0.49}};
  EXPECT_TRUE(decode_spans(probs, 0.5, 8).empty());
}

TEST(DecodeSpans, OneHotLabelsRoundTrip) {
  // indicators as probabilities decode to exactly the labeled spans
  TokenSpanProbabilities probs{{0, 1, 0, 0, 1, 0}, {0, 0, 1, 0, 1, 0}};
  auto entities = decode_spans(probs, 0.5, 8);
  ASSERT_EQ(entities.size(), 2u);
  EXPECT_EQ(entities[0].span, (TokenSpan{1, 2}));
  EXPECT_EQ(entities[1].span, (TokenSpan{4, 4}));
  EXPECT_DOUBLE_EQ(entities[0].probability, 1.0);
}

TEST(DecodeSpans, NearestEndWinsAndIsConsumed) {
  // starts at 0 and 1, ends at 1 and 3: 0 takes 1, 1 takes 3
  TokenSpanProbabilities probs{{0.9, 0.9, 0.0, 0.0}, {0.0, 0.9, 0.0, 0.9}};
  auto entities = decode_spans(probs, 0.5, 8);
  ASSERT_EQ(entities.size(), 2u);
  EXPECT_EQ(entities[0].span, (TokenSpan{0, 1}));
  EXPECT_EQ(entities[1].span, (TokenSpan{1, 3}));
}

TEST(DecodeSpans, MaxSpanLenBoundsSearch) {
  TokenSpanProbabilities probs{{0.9, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.9}};
  EXPECT_TRUE(decode_spans(probs, 0.5, 3).empty());  // end - start = 3 >= 3
  auto entities = decode_spans(probs, 0.5, 4);
  ASSERT_EQ(entities.size(), 1u);
  EXPECT_EQ(entities[0].span, (TokenSpan{0, 3}));
}

TEST(DecodeSpans, UnmatchedStartsAndEndsDrop) {
  // start at 3 has no end at or after it; end at 0 precedes every start
  TokenSpanProbabilities probs{{0.0, 0.0, 0.0, 0.9}, {0.9, 0.0, 0.0, 0.0}};
  EXPECT_TRUE(decode_spans(probs, 0.5, 8).empty());
}

PairSet make_pair_set(Direction dir,
                      const std::vector<std::tuple<TokenSpan, TokenSpan, double>>& pairs) {
  PairSet out;
  out.direction = dir;
  for (const auto& [a, o, p] : pairs) {
    ScoredPair sp;
    sp.direction = dir;
    sp.aspect = {a, 1.0};
    sp.opinion = {o, 1.0};
    sp.pair_probability = p;
    out.insert(sp);
  }
  return out;
}

TEST(PairSetTest, DuplicateKeysKeepHigherProbability) {
  PairSet set;
  set.direction = Direction::AtoO;
  ScoredPair low{{{1, 1}, 0.6}, {{3, 3}, 0.5}, Direction::AtoO, 0.3};
  ScoredPair high{{{1, 1}, 0.9}, {{3, 3}, 0.9}, Direction::AtoO, 0.81};
  set.insert(low);
  set.insert(high);
  ASSERT_EQ(set.pairs.size(), 1u);
  EXPECT_DOUBLE_EQ(set.pairs.begin()->second.pair_probability, 0.81);
  set.insert(low);  // lower probability does not displace
  EXPECT_DOUBLE_EQ(set.pairs.begin()->second.pair_probability, 0.81);
}

TEST(Fuse, IdenticalSetsSurviveAnyDelta) {
  auto ao = make_pair_set(Direction::AtoO, {{{0, 0}, {2, 2}, 0.1}, {{4, 4}, {6, 6}, 0.05}});
  auto oa = make_pair_set(Direction::OtoA, {{{0, 0}, {2, 2}, 0.2}, {{4, 4}, {6, 6}, 0.01}});
  for (double delta : {0.0, 0.5, 0.9}) {
    auto fused = fuse(ao, oa, delta);
    ASSERT_EQ(fused.size(), 2u);
    EXPECT_TRUE(fused[0].in_both);
    EXPECT_TRUE(fused[1].in_both);
    EXPECT_DOUBLE_EQ(fused[0].probability, 0.2);  // max of the two directions
  }
}

TEST(Fuse, DeltaZeroKeepsUnion) {
  auto ao = make_pair_set(Direction::AtoO, {{{0, 0}, {1, 1}, 0.001}});
  auto oa = make_pair_set(Direction::OtoA, {{{2, 2}, {3, 3}, 0.002}});
  auto fused = fuse(ao, oa, 0.0);
  EXPECT_EQ(fused.size(), 2u);
}

TEST(Fuse, DifferenceSetFilteredStrictly) {
  auto ao = make_pair_set(Direction::AtoO, {{{0, 0}, {1, 1}, 0.8}, {{2, 2}, {3, 3}, 0.9}});
  PairSet oa;
  oa.direction = Direction::OtoA;
  auto fused = fuse(ao, oa, 0.8);
  ASSERT_EQ(fused.size(), 1u);  // 0.8 is not > 0.8
  EXPECT_EQ(fused[0].aspect, (TokenSpan{2, 2}));
}

// independent brute-force evaluation of the fusion rule
std::set<PairKey> brute_force_fuse(const PairSet& ao, const PairSet& oa, double delta) {
  std::set<PairKey> keys;
  for (const auto& [k, p] : ao.pairs) {
    bool in_both = oa.pairs.contains(k);
    if (in_both || p.pair_probability > delta) keys.insert(k);
  }
  for (const auto& [k, p] : oa.pairs) {
    bool in_both = ao.pairs.contains(k);
    if (in_both || p.pair_probability > delta) keys.insert(k);
  }
  return keys;
}

TEST(Fuse, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto random_set = [&](Direction dir) {
    PairSet out;
    out.direction = dir;
    int n = static_cast<int>(rng() % 11);
    for (int i = 0; i < n; ++i) {
      int a = static_cast<int>(rng() % 6), o = static_cast<int>(rng() % 6);
      ScoredPair p;
      p.direction = dir;
      p.aspect = {TokenSpan{a, a}, 1.0};
      p.opinion = {TokenSpan{o, o}, 1.0};
      double u = unif(rng);
      p.pair_probability = u == 0.0 ? 0.5 : u;
      out.insert(p);
    }
    return out;
  };
  for (int iter = 0; iter < 300; ++iter) {
    PairSet ao = random_set(Direction::AtoO);
    PairSet oa = random_set(Direction::OtoA);
    double delta = unif(rng) * 0.999;
    auto fused = fuse(ao, oa, delta);
    std::set<PairKey> got;
    for (const auto& f : fused) got.insert({f.aspect, f.opinion});
    EXPECT_EQ(got, brute_force_fuse(ao, oa, delta));
    // monotonicity and bounds
    double delta2 = std::min(0.999, delta + unif(rng) * (1.0 - delta));
    auto fused2 = fuse(ao, oa, delta2);
    std::set<PairKey> got2;
    for (const auto& f : fused2) got2.insert({f.aspect, f.opinion});
    for (const PairKey& k : got2) EXPECT_TRUE(got.contains(k));
    for (const PairKey& k : got) {
      EXPECT_TRUE(ao.pairs.contains(k) || oa.pairs.contains(k));
    }
  }
}

TEST(RunDirection, OracleRecoversGoldPairs) {
  AnnotatedSentence s = parse_line(
      "the food was delicious but the price was high"
      "####[([1], [3], 'POS'), ([6], [8], 'NEG')]");
  OracleModel oracle(s);
  PairSet ao = run_direction(oracle, s, Direction::AtoO, 0.5, 8);
  ASSERT_EQ(ao.pairs.size(), 2u);
  EXPECT_TRUE(ao.pairs.contains(PairKey{{1, 1}, {3, 3}}));
  EXPECT_TRUE(ao.pairs.contains(PairKey{{6, 6}, {8, 8}}));
  PairSet oa = run_direction(oracle, s, Direction::OtoA, 0.5, 8);
  EXPECT_EQ(oa.pairs.size(), 2u);
}

TEST(RunDirection, NoFirstEntitiesMeansEmptySet) {
  AnnotatedSentence s = parse_line("i walked in####[]");
  OracleModel oracle(s);
  PairSet ao = run_direction(oracle, s, Direction::AtoO, 0.5, 8);
  EXPECT_TRUE(ao.pairs.empty());
}

TEST(RunDirection, OneAspectTwoOpinions) {
  AnnotatedSentence s =
      parse_line("salads are fresh and tasty####[([0], [2], 'POS'), ([0], [4], 'POS')]");
  OracleModel oracle(s);
  PairSet ao = run_direction(oracle, s, Direction::AtoO, 0.5, 8);
  ASSERT_EQ(ao.pairs.size(), 2u);
  for (const auto& [key, pair] : ao.pairs) {
    EXPECT_EQ(key.first, (TokenSpan{0, 0}));
  }
}

TEST(ClassifySentiments, GroupsByAspect) {
  AnnotatedSentence s =
      parse_line("salads are fresh and tasty####[([0], [2], 'POS'), ([0], [4], 'POS')]");
  OracleModel oracle(s);
  std::vector<FusedPair> fused = {{{0, 0}, {2, 2}, 1.0, true}, {{0, 0}, {4, 4}, 1.0, true}};
  auto triplets = classify_sentiments(oracle, s, fused);
  ASSERT_EQ(triplets.size(), 2u);
  EXPECT_EQ(triplets[0].sentiment, Sentiment::Positive);
  EXPECT_EQ(triplets[1].sentiment, Sentiment::Positive);
  EXPECT_EQ(triplets[0].opinion, (TokenSpan{2, 2}));
  EXPECT_EQ(triplets[1].opinion, (TokenSpan{4, 4}));
}

TEST(ClassifySentiments, EmptyFusedSet) {
  AnnotatedSentence s = parse_line("i walked in####[]");
  OracleModel oracle(s);
  EXPECT_TRUE(classify_sentiments(oracle, s, {}).empty());
}

TEST(ExtractTriplets, OracleReproducesGold) {
  for (const char* raw : {
           "the food was delicious####[([1], [3], 'POS')]",
           "the battery life is too short####[([1, 2], [5], 'NEG')]",
           "the food and the service were great####[([1], [6], 'POS'), ([4], [6], 'POS')]",
           "i walked in####[]",
       }) {
    AnnotatedSentence s = parse_line(raw);
    OracleModel oracle(s);
    for (double delta : {0.0, 0.5, 0.8}) {
      InferenceParams params{.tau = 0.5, .delta = delta, .max_span_len = 8};
      auto predictions = extract_triplets(oracle, s, params);
      std::set<GoldTriplet> gold(s.triplets.begin(), s.triplets.end());
      std::set<GoldTriplet> got;
      for (const auto& p : predictions) got.insert({p.aspect, p.opinion, p.sentiment});
      EXPECT_EQ(got, gold) << raw;
    }
  }
}

TEST(ExtractTriplets, UntrainedModelHighThresholdIsEmpty) {
  DatasetSplit split;
  split.sentences.push_back(parse_line("the food was delicious####[([1], [3], 'POS')]", 1));
  Vocabulary vocab = Vocabulary::build({&split});
  EncoderConfig cfg{.d_h = 16, .n_layers = 2, .n_heads = 2, .d_ff = 32, .max_len = 32,
                    .dropout_rate = 0.0};
  BmrcModel model(cfg, vocab, 99);
  InferenceParams params{.tau = 0.99, .delta = 0.5, .max_span_len = 8};
  EXPECT_TRUE(extract_triplets(model, split.sentences[0], params).empty());
}

TEST(ExtractTriplets, UnidirectionalModesUseSingleSet) {
  AnnotatedSentence s = parse_line(
      "the food was delicious but the price was high"
      "####[([1], [3], 'POS'), ([6], [8], 'NEG')]");
  OracleModel oracle(s);
  InferenceParams params;  // delta 0.8 irrelevant for single direction
  for (DirectionMode mode : {DirectionMode::AO, DirectionMode::OA}) {
    auto predictions = extract_triplets(oracle, s, params, mode);
    std::set<GoldTriplet> got;
    for (const auto& p : predictions) got.insert({p.aspect, p.opinion, p.sentiment});
    EXPECT_EQ(got, std::set<GoldTriplet>(s.triplets.begin(), s.triplets.end()));
  }
}

TEST(RunDirection, SkipsUnanswerableRestrictiveQueries) {
  // answers turn 1 but cannot encode any restrictive query
  class Turn1Only : public TripletModel {
   public:
    std::optional<TokenSpanProbabilities> answer_extraction(
        const Query& q, const AnnotatedSentence& s) const override {
      if (q.kind == QueryKind::Restrictive) return std::nullopt;
      TokenSpanProbabilities out;
      out.p_start.assign(s.size(), 0.0);
      out.p_end.assign(s.size(), 0.0);
      out.p_start[1] = out.p_end[1] = 1.0;
      return out;
    }
    SentimentDistribution answer_sentiment(const Query&,
                                           const AnnotatedSentence&) const override {
      return {{1.0, 0.0, 0.0}};
    }
  };
  AnnotatedSentence s = parse_line("the food was delicious####[([1], [3], 'POS')]");
  Turn1Only model;
  PairSet ao = run_direction(model, s, Direction::AtoO, 0.5, 8);
  EXPECT_TRUE(ao.pairs.empty());
}

TEST(ModelAsTripletModel, OverlengthExtractionReturnsNullopt) {
  DatasetSplit split;
  split.sentences.push_back(parse_line("alpha beta gamma delta####[]", 1));
  Vocabulary vocab = Vocabulary::build({&split});
  EncoderConfig cfg{.d_h = 8, .n_layers = 1, .n_heads = 2, .d_ff = 16, .max_len = 9,
                    .dropout_rate = 0.0};
  BmrcModel model(cfg, vocab, 1);
  const AnnotatedSentence& s = split.sentences[0];
  // non-restrictive: 3 + 4 + 2 = 9 <= max_len fits
  EXPECT_TRUE(model.answer_extraction(build_nonrestrictive_query(Direction::AtoO), s).has_value());
  // restrictive: 7 + 4 + 2 = 13 > max_len
  Query big = build_restrictive_query(Direction::AtoO, s.tokens, {0, 0});
  EXPECT_FALSE(model.answer_extraction(big, s).has_value());
}

// Decoding each derived instance's one-hot labels recovers exactly the
// gold spans of that instance, across the whole fixture corpus.
TEST(DeriveDecodeRoundTrip, FixtureCorpus) {
  DatasetSplit split =
      load_split(std::string(BMRC_FIXTURES_DIR) + "/roundtrip_50.txt", SplitKind::Train);
  for (const AnnotatedSentence& s : split.sentences) {
    // expected span sets recomputed here, independently of derive_supervision
    std::set<TokenSpan> aspects, opinions;
    std::map<TokenSpan, std::set<TokenSpan>> opinions_of, aspects_of;
    for (const GoldTriplet& t : s.triplets) {
      aspects.insert(t.aspect);
      opinions.insert(t.opinion);
      opinions_of[t.aspect].insert(t.opinion);
      aspects_of[t.opinion].insert(t.aspect);
    }
    for (const SupervisionInstance& inst : derive_supervision(s)) {
      if (!inst.is_extraction()) continue;
      const SpanLabels& labels = inst.labels();
      TokenSpanProbabilities probs;
      probs.p_start.assign(labels.start.begin(), labels.start.end());
      probs.p_end.assign(labels.end.begin(), labels.end.end());
      std::set<TokenSpan> decoded;
      for (const ScoredEntity& e : decode_spans(probs, 0.5, 8)) {
        EXPECT_DOUBLE_EQ(e.probability, 1.0);
        decoded.insert(e.span);
      }
      std::set<TokenSpan> want;
      if (inst.query.kind == QueryKind::NonRestrictive) {
        want = *inst.query.direction == Direction::AtoO ? aspects : opinions;
      } else {
        TokenSpan anchor = inst.query.anchor_spans[0];
        want = *inst.query.direction == Direction::AtoO ? opinions_of[anchor]
                                                        : aspects_of[anchor];
      }
      EXPECT_EQ(decoded, want) << s.id << " " << to_debug_line(inst);
    }
  }
}

TEST(InferenceParamsTest, Validation) {
  InferenceParams bad_tau{.tau = 0.0};
  EXPECT_THROW(bad_tau.validate(), ConfigError);
  InferenceParams bad_delta{.tau = 0.5, .delta = 1.0};
  EXPECT_THROW(bad_delta.validate(), ConfigError);
  InferenceParams bad_len{.tau = 0.5, .delta = 0.5, .max_span_len = 0};
  EXPECT_THROW(bad_len.validate(), ConfigError);
}

}  // namespace
}  // namespace bmrc
