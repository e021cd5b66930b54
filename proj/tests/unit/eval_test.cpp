// bmrc -- subtask projection and P/R/F1 scoring tests.
#include "bmrc/eval.hpp"

#include <gtest/gtest.h>

#include "support/oracle_model.hpp"

namespace bmrc {
namespace {

Triplet t(int as, int ae, int os, int oe, Sentiment s) {
  return {TokenSpan{as, ae}, TokenSpan{os, oe}, s};
}

TEST(Project, OpinionModeCollapsesSharedOpinions) {
  std::vector<Triplet> items = {t(0, 0, 5, 5, Sentiment::Positive),
                                t(2, 2, 5, 5, Sentiment::Negative)};
  EXPECT_EQ(project(items, MatchMode::Opinion).size(), 1u);
  EXPECT_EQ(project(items, MatchMode::Pair).size(), 2u);
}

TEST(Project, TripletModeIsInjectiveOnDistinctTriplets) {
  std::vector<Triplet> items = {t(0, 0, 1, 1, Sentiment::Positive),
                                t(0, 0, 1, 1, Sentiment::Negative),
                                t(0, 1, 1, 1, Sentiment::Positive)};
  EXPECT_EQ(project(items, MatchMode::Triplet).size(), 3u);
}

TEST(Project, EmptyInput) {
  EXPECT_TRUE(project({}, MatchMode::AspectSentiment).empty());
}

TEST(Score, IdentityGivesOnes) {
  std::vector<Triplet> items = {t(0, 0, 1, 1, Sentiment::Positive),
                                t(3, 4, 6, 6, Sentiment::Negative)};
  for (MatchMode mode : kAllMatchModes) {
    PRF prf = score(items, items, mode);
    EXPECT_DOUBLE_EQ(prf.precision, 1.0);
    EXPECT_DOUBLE_EQ(prf.recall, 1.0);
    EXPECT_DOUBLE_EQ(prf.f1, 1.0);
  }
}

TEST(Score, DisjointGivesZeros) {
  std::vector<Triplet> pred = {t(0, 0, 1, 1, Sentiment::Positive)};
  std::vector<Triplet> gold = {t(2, 2, 3, 3, Sentiment::Negative)};
  PRF prf = score(pred, gold, MatchMode::Triplet);
  EXPECT_DOUBLE_EQ(prf.precision, 0.0);
  EXPECT_DOUBLE_EQ(prf.recall, 0.0);
  EXPECT_DOUBLE_EQ(prf.f1, 0.0);
}

TEST(Score, TwoCorrectOfThreePredictedVsFourGold) {
  std::vector<Triplet> gold = {
      t(0, 0, 1, 1, Sentiment::Positive), t(2, 2, 3, 3, Sentiment::Negative),
      t(4, 4, 5, 5, Sentiment::Neutral), t(6, 6, 7, 7, Sentiment::Positive)};
  std::vector<Triplet> pred = {
      t(0, 0, 1, 1, Sentiment::Positive),   // hit
      t(2, 2, 3, 3, Sentiment::Negative),   // hit
      t(8, 8, 9, 9, Sentiment::Positive)};  // miss
  PRF prf = score(pred, gold, MatchMode::Triplet);
  EXPECT_NEAR(prf.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(prf.recall, 1.0 / 2.0, 1e-12);
  EXPECT_NEAR(prf.f1, 4.0 / 7.0, 1e-12);
}

TEST(Score, ZeroConventions) {
  std::vector<Triplet> gold = {t(0, 0, 1, 1, Sentiment::Positive)};
  PRF empty_pred = score({}, gold, MatchMode::Triplet);
  EXPECT_DOUBLE_EQ(empty_pred.precision, 0.0);
  EXPECT_DOUBLE_EQ(empty_pred.recall, 0.0);
  EXPECT_DOUBLE_EQ(empty_pred.f1, 0.0);
  PRF both_empty = score({}, {}, MatchMode::Triplet);
  EXPECT_DOUBLE_EQ(both_empty.precision, 1.0);
  EXPECT_DOUBLE_EQ(both_empty.recall, 1.0);
  EXPECT_DOUBLE_EQ(both_empty.f1, 1.0);
}

TEST(Score, SymmetricUnderSwapWithPRExchanged) {
  std::vector<Triplet> a = {t(0, 0, 1, 1, Sentiment::Positive),
                            t(2, 2, 3, 3, Sentiment::Negative)};
  std::vector<Triplet> b = {t(0, 0, 1, 1, Sentiment::Positive),
                            t(4, 4, 5, 5, Sentiment::Neutral),
                            t(6, 6, 7, 7, Sentiment::Positive)};
  PRF ab = score(a, b, MatchMode::Triplet);
  PRF ba = score(b, a, MatchMode::Triplet);
  EXPECT_DOUBLE_EQ(ab.precision, ba.recall);
  EXPECT_DOUBLE_EQ(ab.recall, ba.precision);
  EXPECT_DOUBLE_EQ(ab.f1, ba.f1);
}

TEST(Score, DuplicatePredictionsDoNotChangeScores) {
  std::vector<Triplet> gold = {t(0, 0, 1, 1, Sentiment::Positive)};
  std::vector<Triplet> pred = {t(0, 0, 1, 1, Sentiment::Positive)};
  std::vector<Triplet> dup = {t(0, 0, 1, 1, Sentiment::Positive),
                              t(0, 0, 1, 1, Sentiment::Positive)};
  for (MatchMode mode : kAllMatchModes) {
    PRF a = score(pred, gold, mode);
    PRF b = score(dup, gold, mode);
    EXPECT_DOUBLE_EQ(a.precision, b.precision);
    EXPECT_DOUBLE_EQ(a.recall, b.recall);
    EXPECT_DOUBLE_EQ(a.f1, b.f1);
  }
}

TEST(ScoreCorpus, KeysAreSentenceScoped) {
  std::map<std::string, std::vector<Triplet>> pred, gold;
  gold["s1"] = {t(0, 0, 1, 1, Sentiment::Positive)};
  gold["s2"] = {t(0, 0, 1, 1, Sentiment::Positive)};
  pred["s1"] = {t(0, 0, 1, 1, Sentiment::Positive)};
  pred["s2"] = {};
  PRF prf = score_corpus(pred, gold, MatchMode::Triplet);
  EXPECT_DOUBLE_EQ(prf.precision, 1.0);
  EXPECT_DOUBLE_EQ(prf.recall, 0.5);
}

TEST(AggregateRuns, MeanAndOrderInvariance) {
  PRF a{0.5, 0.3, 0.4};
  PRF b{0.7, 0.5, 0.6};
  PRF mean = aggregate_runs({a, b});
  EXPECT_NEAR(mean.f1, 0.5, 1e-12);
  EXPECT_NEAR(mean.precision, 0.6, 1e-12);
  PRF swapped = aggregate_runs({b, a});
  EXPECT_DOUBLE_EQ(mean.f1, swapped.f1);
  PRF same = aggregate_runs({a, a, a});
  EXPECT_DOUBLE_EQ(same.f1, a.f1);
  EXPECT_THROW(aggregate_runs({}), DataError);
}

TEST(EvaluateSplit, OracleScoresPerfectly) {
  DatasetSplit split;
  split.sentences.push_back(
      parse_line("the food was delicious####[([1], [3], 'POS')]", 1));
  split.sentences.push_back(parse_line("i walked in####[]", 2));

  // a per-sentence oracle wrapper
  class SplitOracle : public TripletModel {
   public:
    explicit SplitOracle(const DatasetSplit& split) {
      for (const auto& s : split.sentences) oracles_.emplace(s.id, testing::OracleModel(s));
    }
    std::optional<TokenSpanProbabilities> answer_extraction(
        const Query& q, const AnnotatedSentence& s) const override {
      return oracles_.at(s.id).answer_extraction(q, s);
    }
    SentimentDistribution answer_sentiment(const Query& q,
                                           const AnnotatedSentence& s) const override {
      return oracles_.at(s.id).answer_sentiment(q, s);
    }

   private:
    std::map<std::string, testing::OracleModel> oracles_;
  };

  SplitOracle oracle(split);
  auto scores = evaluate_split(oracle, split, InferenceParams{});
  for (const PRF& prf : scores) EXPECT_DOUBLE_EQ(prf.f1, 1.0);
}

}  // namespace
}  // namespace bmrc
