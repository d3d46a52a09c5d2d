#include <gtest/gtest.h>

#include <map>
#include <set>

#include "podt/engine.hpp"

using namespace podt;

namespace {

SimConfig small_config(Scheme scheme = Scheme::PoDT) {
  SimConfig c;
  c.n_users = 60;
  c.n_chains = 3;
  c.kill_chain_count = 1;
  c.cycles = 6;
  c.rounds_per_cycle = 20;
  c.calibration_cycles = 2;
  c.retrain_interval = 2;
  c.attackers = {0.1, 0.1, 0.1};
  c.scheme = scheme;
  c.seed = 11;
  return c;
}

struct QuietWarnings {
  std::function<void(std::string_view)> saved = warning_sink();
  QuietWarnings() { warning_sink() = nullptr; }
  ~QuietWarnings() { warning_sink() = saved; }
};

RoundOutcome outcome(std::size_t cycle, bool accepted, bool truth, bool kill = false,
                     std::size_t replicas = 1) {
  RoundOutcome r;
  r.cycle = cycle;
  r.accepted = accepted;
  r.block_is_true = truth;
  r.kill_chain = kill;
  r.replicas = replicas;
  return r;
}

}  // namespace

TEST(Round, AcceptanceOverAllVoteSplits) {
  for (std::size_t k = 1; k <= 9; ++k)
    for (std::size_t v = 0; v <= k; ++v)
      for (bool truth : {true, false}) {
        EXPECT_EQ(resolve_acceptance(truth, v, k, false), 2 * v > k) << k << ' ' << v;
        EXPECT_EQ(resolve_acceptance(truth, v, k, true), !truth);
      }
}

TEST(Round, BlockTruthFromIntents) {
  EXPECT_TRUE(resolve_block_truth({true, true, false}));
  EXPECT_FALSE(resolve_block_truth({true, false, false}));
  EXPECT_FALSE(resolve_block_truth({true, false}));
  EXPECT_TRUE(resolve_block_truth({true}));
}

TEST(Round, ThreeValidatorsOneYes) {
  const std::size_t yes = 1, cast = 3;
  EXPECT_DOUBLE_EQ(static_cast<double>(yes) / cast, 1.0 / 3.0);
  EXPECT_FALSE(resolve_acceptance(true, yes, cast, false));
  EXPECT_TRUE(resolve_acceptance(true, 2, cast, false));
}

TEST(Round, MessageCounts) {
  EXPECT_EQ(round_messages(Scheme::PoDT, 3, 5, 40, 70, 70), 3u * 40 + 5 + 70);
  EXPECT_EQ(round_messages(Scheme::RandomMiners, 3, 5, 36, 70, 70), 3u * 36 + 5 + 70);
  EXPECT_EQ(round_messages(Scheme::AllMiners, 3, 5, 70, 70, 70), 3u * 70 + 67 * 70 + 70);
}

TEST(Metrics, AttackSuccessRatioExample) {
  const std::vector<RoundOutcome> outs = {outcome(0, true, true), outcome(0, true, false),
                                          outcome(0, false, true), outcome(0, false, false)};
  const auto s = compute_metrics(outs, 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].blocks_created, 4u);
  EXPECT_EQ(s[0].blocks_accepted, 2u);
  EXPECT_DOUBLE_EQ(s[0].attack_success_ratio, 0.25);
  EXPECT_EQ(s[1].blocks_created, 0u);
  EXPECT_EQ(s[1].attack_success_ratio, 0.0);
}

TEST(Metrics, StoragePerReplica) {
  MetricsAccumulator all, few;
  all.add(outcome(0, true, true, false, 1000));
  few.add(outcome(0, true, true, false, 51));
  few.add(outcome(0, false, true, false, 51));  // rejected blocks are not stored
  EXPECT_EQ(all.summary().storage_mb, 1000.0);
  EXPECT_EQ(few.summary().storage_mb, 51.0);
}

TEST(Metrics, AccuracySplitByChainRole) {
  MetricsAccumulator acc;
  acc.add(outcome(0, true, true, true));
  acc.add(outcome(0, true, false, true));
  acc.add(outcome(0, true, false, true));
  acc.add(outcome(0, true, true, false));
  RoundOutcome skipped;
  skipped.skipped = true;
  acc.add(skipped);
  const RunSummary s = acc.summary();
  EXPECT_DOUBLE_EQ(*s.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(*s.kill_chain_accuracy, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(*s.mask_chain_accuracy, 1.0);
  EXPECT_EQ(acc.series()[0].rounds_skipped, 1u);
  EXPECT_EQ(acc.series()[0].blocks_created, 4u);
  EXPECT_FALSE(MetricsAccumulator{}.summary().accuracy.has_value());
}

TEST(Metrics, DetectionRate) {
  const std::vector<UserId> flagged = {1, 4, 9};
  EXPECT_DOUBLE_EQ(*detection_rate(flagged, std::vector<UserId>{1, 2, 4, 5}), 0.5);
  EXPECT_FALSE(detection_rate(flagged, std::vector<UserId>{}).has_value());
}

TEST(Metrics, SlidingMaxWindow) {
  SlidingMax all, w3(3);
  const std::vector<std::size_t> xs = {5, 1, 4, 2, 2, 7, 1, 1, 1};
  const std::vector<std::size_t> want3 = {5, 5, 5, 4, 4, 7, 7, 7, 1};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    all.push(xs[i]);
    w3.push(xs[i]);
    EXPECT_EQ(w3.max(), want3[i]);
  }
  EXPECT_EQ(all.max(), 7u);
}

TEST(Config, SchemeNames) {
  for (Scheme s : {Scheme::PoDT, Scheme::Baseline, Scheme::DiscTrustOnly, Scheme::AllMiners,
                   Scheme::RandomMiners})
    EXPECT_EQ(parse_scheme(to_string(s)), s);
  EXPECT_THROW(parse_scheme("pow"), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  auto bad = [](auto mutate) {
    SimConfig c = small_config();
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](SimConfig& c) { c.n_users = 0; });
  bad([](SimConfig& c) { c.n_chains = 0; });
  bad([](SimConfig& c) { c.theta = 1.0; });
  bad([](SimConfig& c) { c.xi1 = 0.4; });
  bad([](SimConfig& c) { c.theta = 0.7; });
  bad([](SimConfig& c) { c.kill_chain_count = 4; });
  bad([](SimConfig& c) { c.attackers = {0.5, 0.5, 0.1}; });
  bad([](SimConfig& c) { c.attackers.ordinary = -0.1; });
  bad([](SimConfig& c) { c.k_gen = 0; });
  bad([](SimConfig& c) { c.k_val = 0; });
  bad([](SimConfig& c) { c.k_val = 29; });
  bad([](SimConfig& c) { c.rounds_per_cycle = 0; });
  bad([](SimConfig& c) { c.leader_term = 0; });
  bad([](SimConfig& c) { c.soft_margin_penalty = 0; });
  bad([](SimConfig& c) { c.feedback_window = 0; });
  bad([](SimConfig& c) { c.max_training_samples = 1; });
  bad([](SimConfig& c) { c.block_capacity_bytes = 100; });
  bad([](SimConfig& c) { c.activity = 1.5; });
  EXPECT_NO_THROW(small_config().validate());
  EXPECT_THROW(Simulation{[] { auto c = small_config(); c.n_users = 0; return c; }()}, ConfigError);
}

TEST(Engine, ZeroCyclesIsEmpty) {
  SimConfig c = small_config();
  c.cycles = 0;
  const RunResult r = run_simulation(c);
  EXPECT_TRUE(r.series.empty());
  EXPECT_FALSE(r.summary.accuracy.has_value());
  EXPECT_EQ(r.sidechain_blocks, 0u);
  EXPECT_TRUE(r.sidechain_verified);
}

TEST(Engine, PopulationMatchesMix) {
  SimConfig c = small_config();
  c.attackers = {0.2, 0.15, 0.25};
  const Simulation sim(c);
  EXPECT_EQ(sim.users_of(BehaviorKind::Ordinary).size(), 12u);
  EXPECT_EQ(sim.users_of(BehaviorKind::NormalDMB).size(), 9u);
  EXPECT_EQ(sim.users_of(BehaviorKind::IntensiveDMB).size(), 15u);
  EXPECT_EQ(sim.users_of(BehaviorKind::Honest).size(), 24u);
  EXPECT_EQ(sim.kill_chains().size(), 1u);
  for (const auto& p : sim.profiles()) {
    if (p.kind == BehaviorKind::NormalDMB || p.kind == BehaviorKind::IntensiveDMB) {
      EXPECT_EQ(p.kill_chains, sim.kill_chains());
    }
  }
}

TEST(Engine, DeterministicForSeed) {
  for (Scheme s : {Scheme::PoDT, Scheme::Baseline, Scheme::AllMiners, Scheme::RandomMiners}) {
    QuietWarnings q;
    const RunResult a = run_simulation(small_config(s));
    const RunResult b = run_simulation(small_config(s));
    EXPECT_EQ(a.sidechain_tip, b.sidechain_tip);
    ASSERT_EQ(a.series.size(), b.series.size());
    for (std::size_t i = 0; i < a.series.size(); ++i) {
      EXPECT_EQ(a.series[i].malicious_responses, b.series[i].malicious_responses);
      EXPECT_EQ(a.series[i].blocks_accepted, b.series[i].blocks_accepted);
      EXPECT_EQ(a.series[i].messages, b.series[i].messages);
    }
    EXPECT_EQ(a.flagged, b.flagged);
    SimConfig other = small_config(s);
    other.seed = 12;
    EXPECT_NE(run_simulation(other).sidechain_tip, a.sidechain_tip);
  }
}

TEST(Engine, ConservationAndLedgerConsistency) {
  QuietWarnings q;
  const SimConfig c = small_config();
  Simulation sim(c);
  std::size_t rounds = 0, skipped = 0, generated = 0, falses = 0;
  sim.on_round([&](const RoundOutcome& r) {
    ++rounds;
    if (r.skipped) {
      ++skipped;
      return;
    }
    generated += r.generator_ids.size();
    falses += static_cast<std::size_t>(std::count(r.intents.begin(), r.intents.end(), false));
    EXPECT_EQ(r.malicious_responses(), static_cast<std::size_t>(std::count(
                                           r.intents.begin(), r.intents.end(), false)));
    EXPECT_EQ(r.generator_ids.size(), c.k_gen);
    EXPECT_EQ(r.validator_ids.size(), c.k_val);
    std::set<UserId> g(r.generator_ids.begin(), r.generator_ids.end());
    std::set<UserId> v(r.validator_ids.begin(), r.validator_ids.end());
    EXPECT_EQ(g.size(), c.k_gen);
    EXPECT_EQ(v.size(), c.k_val);
    for (UserId u : v) EXPECT_EQ(g.count(u), 0u);
    EXPECT_DOUBLE_EQ(r.feedback, double(r.votes_true) / double(r.votes_cast));
    EXPECT_EQ(r.accepted,
              resolve_acceptance(r.block_is_true, r.votes_true, r.votes_cast, r.leader_attacks));
  });
  const RunResult res = sim.finish();
  EXPECT_EQ(rounds, c.cycles * c.rounds_per_cycle * c.n_chains);
  EXPECT_EQ(res.summary.blocks_created + skipped, rounds);
  EXPECT_EQ(res.sidechain_blocks, res.summary.blocks_created);
  EXPECT_TRUE(res.sidechain_verified);

  std::size_t mal = 0;
  for (const auto& m : res.series) {
    EXPECT_EQ(m.malicious_responses,
              m.malicious_by_kind[0] + m.malicious_by_kind[1] + m.malicious_by_kind[2] +
                  m.malicious_by_kind[3]);
    EXPECT_EQ(m.malicious_by_kind[0], 0u);
    EXPECT_EQ(m.blocks_accepted, m.blocks_accepted_true + m.blocks_accepted_false);
    mal += m.malicious_responses;
  }
  EXPECT_EQ(mal, falses);

  const TrustLedger& L = sim.ledger();
  std::uint64_t tru = 0, fal = 0;
  for (UserId u = 0; u < c.n_users; ++u) {
    tru += L.totals(u).tru;
    fal += L.totals(u).fal;
  }
  EXPECT_EQ(tru + fal, generated);
  EXPECT_EQ(fal, falses);

  // each user's newest record carries its current counters and trust
  const SideChain& sc = sim.side_chain();
  std::map<UserId, ExperienceRecord> last;
  for (const auto& b : sc.blocks())
    for (const auto& r : b.records) last[r.user_id] = r;
  for (const auto& [u, r] : last) {
    EXPECT_EQ(r.true_blocks, L.totals(u).tru);
    EXPECT_EQ(r.false_blocks, L.totals(u).fal);
    EXPECT_EQ(r.global_trust, L.global_trust(u));
    for (ChainId j = 0; j < c.n_chains; ++j) {
      if (const ExperienceRecord* pr = sc.latest_record(u, j)) {
        EXPECT_EQ(pr->local_trust, L.local_trust(u, j));
      }
    }
  }
}

TEST(Engine, SelectionInvariantsHold) {
  QuietWarnings q;
  for (Scheme s : {Scheme::PoDT, Scheme::Baseline, Scheme::DiscTrustOnly, Scheme::RandomMiners}) {
    Simulation sim(small_config(s));
    std::size_t checks = 0;
    sim.on_selection([&](std::size_t, const MinerSets& m) {
      ++checks;
      EXPECT_GE(m.network.size(), majority_size(60));
      for (ChainId j = 0; j < m.chain.size(); ++j) {
        const auto& ch = m.chain[j];
        const auto& lam = sim.active_users(j);
        EXPECT_GE(ch.size(), majority_size(lam.size()));
        EXPECT_TRUE(std::is_sorted(ch.begin(), ch.end()));
        EXPECT_TRUE(std::includes(lam.begin(), lam.end(), ch.begin(), ch.end()));
      }
      for (std::size_t j = 0; j < m.chain.size(); ++j) {
        ASSERT_TRUE(m.leader[j].id.has_value());
        EXPECT_TRUE(m.is_chain_miner(static_cast<ChainId>(j), *m.leader[j].id));
      }
    });
    const RunResult r = sim.finish();
    EXPECT_EQ(checks, 6u);
    EXPECT_EQ(r.audit.violations, 0u) << to_string(s);
    EXPECT_GT(r.audit.checks, 0u);
  }
}

TEST(Engine, ActivitySetsAreConsistent) {
  SimConfig c = small_config();
  c.n_chains = 4;
  c.activity = 0.5;
  const Simulation sim(c);
  EXPECT_EQ(c.chains_per_user(), 2u);
  std::size_t total = 0;
  for (UserId u = 0; u < c.n_users; ++u) {
    const auto& mine = sim.active_chains(u);
    ASSERT_EQ(mine.size(), 2u);
    for (ChainId j : mine) {
      const auto& lam = sim.active_users(j);
      EXPECT_TRUE(std::binary_search(lam.begin(), lam.end(), u));
    }
  }
  for (ChainId j = 0; j < 4; ++j) total += sim.active_users(j).size();
  EXPECT_EQ(total, 2u * c.n_users);
  c.activity = 1.0;
  const Simulation full(c);
  for (ChainId j = 0; j < 4; ++j) EXPECT_EQ(full.active_users(j).size(), c.n_users);
  c.activity = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.activity = 0.01;
  EXPECT_EQ(c.chains_per_user(), 1u);
}

TEST(Engine, RoundsStayInsideActiveSets) {
  QuietWarnings q;
  Simulation sim(small_config());
  sim.on_round([&](const RoundOutcome& r) {
    if (r.skipped) return;
    const auto& lam = sim.active_users(r.chain_id);
    for (UserId u : r.generator_ids) EXPECT_TRUE(std::binary_search(lam.begin(), lam.end(), u));
    for (UserId u : r.validator_ids) EXPECT_TRUE(std::binary_search(lam.begin(), lam.end(), u));
    EXPECT_TRUE(std::binary_search(lam.begin(), lam.end(), r.leader_id));
  });
  sim.finish();
}

TEST(Engine, AllMinersUsesEveryone) {
  QuietWarnings q;
  Simulation sim(small_config(Scheme::AllMiners));
  sim.on_round([&](const RoundOutcome& r) {
    EXPECT_EQ(r.generator_ids.size() + r.validator_ids.size(), 60u);
    EXPECT_EQ(r.replicas, 60u);
    EXPECT_EQ(r.messages_sent, 3u * 60 + 57 * 60 + 60);
  });
  sim.step();
  EXPECT_EQ(sim.miners().network.size(), 60u);
}

TEST(Engine, AllHonestRunIsClean) {
  std::vector<std::string> warnings;
  auto saved = warning_sink();
  warning_sink() = [&](std::string_view m) { warnings.emplace_back(m); };
  SimConfig c = small_config();
  c.attackers = {};
  const RunResult r = run_simulation(c);
  warning_sink() = saved;
  EXPECT_EQ(*r.summary.accuracy, 1.0);
  EXPECT_EQ(r.summary.blocks_accepted, r.summary.blocks_created);
  for (const auto& m : r.series) EXPECT_EQ(m.malicious_responses, 0u);
  EXPECT_FALSE(r.training.trained);
  EXPECT_TRUE(r.flagged.empty());
  EXPECT_FALSE(r.summary.detection_rate.has_value());
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(warnings.size(), 1u);  // single-class training set, reported once
}

TEST(Engine, TraceFollowsOneUserPerKind) {
  QuietWarnings q;
  const RunResult r = run_simulation(small_config());
  ASSERT_EQ(r.trace.size(), 3u * 6);
  for (const auto& t : r.trace) {
    EXPECT_EQ(t.local_trust.size(), 3u);
    EXPECT_NE(t.kind, BehaviorKind::Honest);
  }
}

TEST(Engine, StepwiseMatchesFinish) {
  QuietWarnings q;
  Simulation a(small_config());
  while (a.step()) {
  }
  EXPECT_TRUE(a.done());
  EXPECT_FALSE(a.step());
  const RunResult b = run_simulation(small_config());
  EXPECT_EQ(to_hex(a.side_chain().tip_hash()), b.sidechain_tip);
}
