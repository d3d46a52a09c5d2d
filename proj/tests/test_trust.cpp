#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "podt/trust.hpp"
#include "oracles.hpp"

using namespace podt;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(PODT_FIXTURES) + "/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(TrustFormula, MatchesOracleOnRandomCounters) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> cnt(0, 100000);
  std::uniform_real_distribution<double> th(0.01, 0.99);
  for (int k = 0; k < 1000; ++k) {
    const auto t = cnt(rng), f = cnt(rng);
    const double theta = th(rng);
    EXPECT_NEAR(distinctive_trust(t, f, theta), static_cast<double>(oracle::trust(t, f, theta)),
                1e-12);
  }
}

TEST(TrustFormula, NewcomerSitsOnThreshold) {
  for (double theta : {0.1, 0.25, 0.5, 0.73, 0.99}) EXPECT_EQ(distinctive_trust(0, 0, theta), theta);
}

TEST(TrustFormula, BalancedCountersGiveHalf) {
  // (t + 0.5) / (2t + 1) is exactly one half
  for (std::uint64_t t : {0ull, 1ull, 2ull, 17ull, 1000ull, 123456789ull})
    EXPECT_EQ(distinctive_trust(t, t, 0.5), 0.5);
}

TEST(TrustFormula, StaysInUnitInterval) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> cnt(0, 1000);
  for (int k = 0; k < 2000; ++k) {
    const double v = distinctive_trust(cnt(rng), cnt(rng), 0.5);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TrustFormula, MonotoneInEachCounter) {
  for (std::uint64_t t = 0; t < 40; ++t)
    for (std::uint64_t f = 0; f < 40; ++f) {
      EXPECT_GT(distinctive_trust(t + 1, f, 0.5), distinctive_trust(t, f, 0.5));
      EXPECT_LT(distinctive_trust(t, f + 1, 0.5), distinctive_trust(t, f, 0.5));
    }
}

TEST(TrustFormula, UniversalTrustNewcomerIsOne) {
  EXPECT_EQ(universal_trust(0, 0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(universal_trust(3, 1, 0.5), 3.5 / 4.5);
}

TEST(TrustLedger, GlobalTrustUsesSummedCounters) {
  TrustLedger L(2, 3, 0.5);
  L.record_block(0, 0, true);
  L.record_block(0, 0, true);
  L.record_block(0, 1, false);
  L.record_block(0, 2, true);
  EXPECT_EQ(L.totals(0), (BlockCounters{3, 1}));
  EXPECT_DOUBLE_EQ(L.global_trust(0), 3.5 / 5.0);
  EXPECT_DOUBLE_EQ(L.local_trust(0, 0), 2.5 / 3.0);
  EXPECT_DOUBLE_EQ(L.local_trust(0, 1), 0.5 / 2.0);
  EXPECT_EQ(L.local_trust(1, 2), 0.5);
}

TEST(TrustLedger, TrustVectorAndLowCount) {
  TrustLedger L(1, 4, 0.5);
  L.record_block(0, 1, false);
  L.record_block(0, 3, false);
  L.record_block(0, 2, true);
  const auto v = L.trust_vector(0);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v[0], 0.5);
  EXPECT_EQ(v[1], 0.25);
  EXPECT_EQ(L.count_low_local(0), 2u);
  EXPECT_EQ(count_below(v, 0.5), 2u);
}

TEST(TrustLedger, RejectsOutOfRangeIds) {
  TrustLedger L(3, 2, 0.5);
  EXPECT_THROW(L.record_block(3, 0, true), IdOutOfRange);
  EXPECT_THROW(L.local_trust(0, 2), IdOutOfRange);
  EXPECT_THROW(L.global_trust(99), IdOutOfRange);
  EXPECT_THROW(L.trust_vector(3), IdOutOfRange);
}

TEST(TrustLedger, RejectsBadTheta) {
  EXPECT_THROW(TrustLedger(1, 1, 0.0), ConfigError);
  EXPECT_THROW(TrustLedger(1, 1, 1.0), ConfigError);
  EXPECT_THROW(TrustLedger(1, 1, 1.5), ConfigError);
  EXPECT_THROW(TrustLedger(1, 0, 0.5), ConfigError);
}

TEST(Classify, FourStateTable) {
  EXPECT_EQ(classify_state(0.9, 0, 10, 0.5), TrustState::Trustworthy);
  EXPECT_EQ(classify_state(0.5, 0, 10, 0.5), TrustState::Trustworthy);
  EXPECT_EQ(classify_state(0.7, 3, 10, 0.5), TrustState::LowRisk);
  EXPECT_EQ(classify_state(0.3, 3, 10, 0.5), TrustState::MediumRisk);
  EXPECT_EQ(classify_state(0.3, 0, 10, 0.5), TrustState::MediumRisk);
  EXPECT_EQ(classify_state(0.3, 10, 10, 0.5), TrustState::HighRisk);
  EXPECT_EQ(classify_state(0.6, 10, 10, 0.5), TrustState::LowRisk);
}

TEST(Classify, LedgerStatesFromCounters) {
  TrustLedger L(3, 2, 0.5);
  // user 1: honest on chain 0, sabotages chain 1
  for (int k = 0; k < 6; ++k) L.record_block(1, 0, true);
  L.record_block(1, 1, false);
  // user 2: false everywhere
  L.record_block(2, 0, false);
  L.record_block(2, 1, false);
  EXPECT_EQ(L.classify(0), TrustState::Trustworthy);
  EXPECT_EQ(L.classify(1), TrustState::LowRisk);
  EXPECT_EQ(L.classify(2), TrustState::HighRisk);
}

TEST(Partition, DisjointCoverOverRandomDraws) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> gt(0.0, 1.0);
  const std::size_t h = 10;
  std::uniform_int_distribution<std::size_t> lam(0, h);
  std::vector<UserId> users(10000);
  std::vector<std::pair<double, std::size_t>> draw(users.size());
  for (UserId u = 0; u < users.size(); ++u) {
    users[u] = u;
    draw[u] = {gt(rng), lam(rng)};
  }
  const Partition p = partition(users, [&](UserId u) {
    return classify_state(draw[u].first, draw[u].second, h, 0.5);
  });
  std::set<UserId> seen;
  std::size_t total = 0;
  for (const auto* b : {&p.trustworthy, &p.low_risk, &p.medium_risk, &p.high_risk}) {
    total += b->size();
    seen.insert(b->begin(), b->end());
  }
  EXPECT_EQ(total, users.size());
  EXPECT_EQ(seen.size(), users.size());
  for (UserId u : p.trustworthy) EXPECT_TRUE(draw[u].first >= 0.5 && draw[u].second == 0);
  for (UserId u : p.high_risk) EXPECT_TRUE(draw[u].first < 0.5 && draw[u].second == h);
}

TEST(TrustLedger, CsvSnapshotMatchesGolden) {
  TrustLedger L(3, 2, 0.5);
  L.record_block(0, 0, true);
  L.record_block(0, 1, false);
  L.record_block(2, 1, true);
  L.record_block(2, 1, true);
  L.record_block(1, 0, false);
  std::ostringstream os;
  L.write_csv(os);
  EXPECT_EQ(os.str(), read_fixture("ledger_small.csv"));
}
