#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "podt/behaviors.hpp"
#include "podt/dbp.hpp"
#include "podt/selection.hpp"
#include "podt/sidechain.hpp"
#include "podt/svm.hpp"
#include "podt/trust.hpp"
#include "podt/types.hpp"

namespace podt {

enum class Scheme { PoDT, Baseline, DiscTrustOnly, AllMiners, RandomMiners };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::PoDT: return "PoDT";
    case Scheme::Baseline: return "Baseline";
    case Scheme::DiscTrustOnly: return "DiscTrustOnly";
    case Scheme::AllMiners: return "AllMiners";
    case Scheme::RandomMiners: return "RandomMiners";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::PoDT, Scheme::Baseline, Scheme::DiscTrustOnly, Scheme::AllMiners,
                   Scheme::RandomMiners}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown scheme '" + std::string(name) +
                    "' (expected PoDT, Baseline, DiscTrustOnly, AllMiners or RandomMiners)");
}

struct AttackerMix {
  double ordinary = 0.0;
  double normal_dmb = 0.0;
  double intensive_dmb = 0.0;

  double total() const noexcept { return ordinary + normal_dmb + intensive_dmb; }
};

struct SimConfig {
  std::size_t n_users = 1000;
  std::size_t n_chains = 10;
  double theta = 0.5;
  double xi1 = 0.1;
  double xi2 = 0.4;
  std::size_t cycles = 200;
  std::size_t kill_chain_count = 4;
  AttackerMix attackers;
  std::size_t k_gen = 3;
  std::size_t k_val = 5;
  std::size_t rounds_per_cycle = 300;
  std::size_t leader_term = 10;
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::PoDT;
  std::size_t calibration_cycles = 20;
  std::size_t retrain_interval = 5;  // 0: model frozen after calibration
  double soft_margin_penalty = 1.0;
  bool strict_rule4 = false;
  std::size_t active_window = 0;  // rounds; 0 = whole run
  double activity = 0.5;          // share of chains each user is active on
  FeedbackMode feedback_mode = FeedbackMode::Latest;
  std::size_t feedback_window = 5;
  std::size_t max_training_samples = 2000;
  std::size_t block_capacity_bytes = SideChain::kDefaultCapacity;

  AttackThresholds thresholds() const { return {theta, xi1, xi2}; }

  /// Number of chains each user is active on, at least one.
  std::size_t chains_per_user() const {
    const auto a = static_cast<std::size_t>(std::llround(activity * double(n_chains)));
    return std::clamp<std::size_t>(a, 1, n_chains);
  }

  void validate() const {
    if (n_users == 0) throw ConfigError("n_users must be at least 1");
    if (n_chains == 0) throw ConfigError("n_chains must be at least 1");
    check_theta(theta);
    if (!(xi1 >= 0.0)) throw ConfigError("xi1 must be non-negative");
    thresholds().validate();
    if (!(activity > 0.0 && activity <= 1.0)) throw ConfigError("activity must lie in (0, 1]");
    if (kill_chain_count > n_chains) {
      throw ConfigError("kill_chain_count " + std::to_string(kill_chain_count) +
                        " exceeds n_chains " + std::to_string(n_chains));
    }
    for (double f : {attackers.ordinary, attackers.normal_dmb, attackers.intensive_dmb}) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("attacker fractions must lie in [0, 1]");
    }
    if (attackers.total() > 1.0 + 1e-12) throw ConfigError("attacker fractions sum above 1");
    if (k_gen == 0) throw ConfigError("k_gen must be at least 1");
    if (k_val == 0) throw ConfigError("k_val must be at least 1");
    if (k_gen + k_val > majority_size(n_users)) {
      throw ConfigError("k_gen + k_val = " + std::to_string(k_gen + k_val) +
                        " exceeds the smallest chain-miner set (" +
                        std::to_string(majority_size(n_users)) + ")");
    }
    if (rounds_per_cycle == 0) throw ConfigError("rounds_per_cycle must be at least 1");
    if (leader_term == 0) throw ConfigError("leader_term must be at least 1");
    if (!(soft_margin_penalty > 0.0)) throw ConfigError("soft_margin_penalty must be positive");
    if (feedback_window == 0) throw ConfigError("feedback_window must be at least 1");
    if (max_training_samples < 2) throw ConfigError("max_training_samples must be at least 2");
    if (block_capacity_bytes < kBlockHeaderBytes + 32 + k_gen * kRecordBytes) {
      throw ConfigError("block_capacity_bytes too small for one round of records");
    }
  }
};

/// One round of block generation, validation and acceptance on one chain.
struct RoundOutcome {
  std::size_t cycle = 0;
  std::size_t round = 0;  // within the cycle
  ChainId chain_id = 0;
  bool skipped = false;
  std::vector<UserId> generator_ids;
  std::vector<bool> intents;  // per generator: true block intended
  std::vector<UserId> validator_ids;
  std::size_t votes_true = 0;
  std::size_t votes_cast = 0;
  UserId leader_id = 0;
  bool leader_attacks = false;
  bool block_is_true = true;
  bool accepted = false;
  double feedback = 1.0;
  bool kill_chain = false;
  std::array<std::size_t, kBehaviorKinds> malicious_by_kind{};
  std::uint64_t messages_sent = 0;
  std::size_t replicas = 0;

  std::size_t malicious_responses() const noexcept {
    return std::accumulate(malicious_by_kind.begin(), malicious_by_kind.end(), std::size_t{0});
  }
};

/// Strict majority of `count` true entries out of `total`.
constexpr bool strict_majority(std::size_t count, std::size_t total) noexcept {
  return 2 * count > total;
}

/// Block truth from the generators' intents: true iff a strict majority
/// intends a true block.
inline bool resolve_block_truth(const std::vector<bool>& intents) {
  const auto yes = static_cast<std::size_t>(std::count(intents.begin(), intents.end(), true));
  return strict_majority(yes, intents.size());
}

/// An honest leader confirms the validators' verdict; a leader working
/// against the chain accepts false blocks and withholds true ones.
constexpr bool resolve_acceptance(bool block_is_true, std::size_t votes_true,
                                  std::size_t votes_cast, bool leader_attacks) noexcept {
  if (leader_attacks) return !block_is_true;
  return strict_majority(votes_true, votes_cast);
}

/// Analytic message count of one round.
constexpr std::uint64_t round_messages(Scheme scheme, std::size_t k_gen, std::size_t k_val,
                                       std::size_t chain_miners, std::size_t active_users,
                                       std::size_t n_users) noexcept {
  if (scheme == Scheme::AllMiners) {
    const std::uint64_t n = n_users;
    return k_gen * n + (n - k_gen) * n + n;
  }
  return static_cast<std::uint64_t>(k_gen) * chain_miners + k_val + active_users;
}

inline constexpr double kBlockSizeMb = 1.0;

struct CycleMetrics {
  std::size_t cycle = 0;
  std::size_t malicious_responses = 0;
  std::array<std::size_t, kBehaviorKinds> malicious_by_kind{};
  double attack_success_ratio = 0.0;
  std::size_t blocks_created = 0;
  std::size_t blocks_accepted = 0;
  std::size_t blocks_accepted_true = 0;
  std::size_t blocks_accepted_false = 0;
  std::size_t rounds_skipped = 0;
  std::uint64_t messages = 0;
  double storage_mb = 0.0;
  double wall_time_s = 0.0;
};

struct RunSummary {
  std::optional<double> accuracy;
  std::optional<double> kill_chain_accuracy;
  std::optional<double> mask_chain_accuracy;
  std::optional<double> detection_rate;
  std::uint64_t overload = 0;
  double storage_mb = 0.0;
  double wall_time_s = 0.0;
  std::size_t blocks_created = 0;
  std::size_t blocks_accepted = 0;
  std::size_t blocks_accepted_true = 0;
};

/// Folds round outcomes into per-cycle and run-level figures.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t cycles = 0) { series_.reserve(cycles); }

  void begin_cycle(std::size_t cycle) {
    CycleMetrics m;
    m.cycle = cycle;
    series_.push_back(m);
  }

  void add(const RoundOutcome& r) {
    if (series_.empty() || series_.back().cycle != r.cycle) begin_cycle(r.cycle);
    CycleMetrics& m = series_.back();
    if (r.skipped) {
      ++m.rounds_skipped;
      return;
    }
    ++m.blocks_created;
    for (std::size_t k = 0; k < kBehaviorKinds; ++k) m.malicious_by_kind[k] += r.malicious_by_kind[k];
    m.malicious_responses += r.malicious_responses();
    m.messages += r.messages_sent;
    if (r.accepted) {
      ++m.blocks_accepted;
      m.storage_mb += static_cast<double>(r.replicas) * kBlockSizeMb;
      (r.block_is_true ? m.blocks_accepted_true : m.blocks_accepted_false) += 1;
      auto& [acc, tru] = r.kill_chain ? kill_ : mask_;
      ++acc;
      if (r.block_is_true) ++tru;
    }
    m.attack_success_ratio = static_cast<double>(m.blocks_accepted_false) /
                             static_cast<double>(m.blocks_created);
  }

  void set_wall_time(double seconds) {
    if (!series_.empty()) series_.back().wall_time_s = seconds;
  }

  const std::vector<CycleMetrics>& series() const noexcept { return series_; }

  RunSummary summary() const {
    RunSummary s;
    for (const CycleMetrics& m : series_) {
      s.overload += m.messages;
      s.storage_mb += m.storage_mb;
      s.wall_time_s += m.wall_time_s;
      s.blocks_created += m.blocks_created;
      s.blocks_accepted += m.blocks_accepted;
      s.blocks_accepted_true += m.blocks_accepted_true;
    }
    if (s.blocks_accepted > 0) {
      s.accuracy = static_cast<double>(s.blocks_accepted_true) /
                   static_cast<double>(s.blocks_accepted);
    }
    if (kill_.first > 0) s.kill_chain_accuracy = double(kill_.second) / double(kill_.first);
    if (mask_.first > 0) s.mask_chain_accuracy = double(mask_.second) / double(mask_.first);
    return s;
  }

 private:
  std::vector<CycleMetrics> series_;
  std::pair<std::size_t, std::size_t> kill_{0, 0};  // accepted, accepted true
  std::pair<std::size_t, std::size_t> mask_{0, 0};
};

/// Metrics from a complete list of outcomes (cycles without outcomes still
/// appear, with zero counts).
inline std::vector<CycleMetrics> compute_metrics(std::span<const RoundOutcome> outcomes,
                                                 std::size_t cycles) {
  MetricsAccumulator acc(cycles);
  std::size_t next = 0;
  for (std::size_t c = 0; c < cycles; ++c) {
    acc.begin_cycle(c);
    while (next < outcomes.size() && outcomes[next].cycle == c) acc.add(outcomes[next++]);
  }
  return acc.series();
}

/// Share of ground-truth intensive attackers among the flagged users.
inline std::optional<double> detection_rate(std::span<const UserId> flagged_sorted,
                                            std::span<const UserId> intensive) {
  if (intensive.empty()) return std::nullopt;
  std::size_t hit = 0;
  for (UserId u : intensive)
    if (std::binary_search(flagged_sorted.begin(), flagged_sorted.end(), u)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(intensive.size());
}

/// Maximum over the last `window` pushed values (all values when 0).
class SlidingMax {
 public:
  explicit SlidingMax(std::size_t window = 0) : window_(window) {}

  void push(std::size_t v) {
    ++t_;
    while (!q_.empty() && q_.back().second <= v) q_.pop_back();
    q_.emplace_back(t_, v);
    if (window_ > 0)
      while (q_.front().first + window_ <= t_) q_.pop_front();
  }

  std::size_t max() const { return q_.empty() ? 0 : q_.front().second; }

 private:
  std::size_t window_;
  std::size_t t_ = 0;
  std::deque<std::pair<std::size_t, std::size_t>> q_;
};

struct TraceSample {
  std::size_t cycle = 0;
  UserId user = 0;
  BehaviorKind kind = BehaviorKind::Honest;
  double global_trust = 0.0;
  std::vector<double> local_trust;
  std::vector<ChainId> active_chains;
};

struct TrainingInfo {
  bool trained = false;
  bool used_fallback = false;
  std::size_t sample_count = 0;
  std::size_t positives = 0;
  std::size_t trainings = 0;
  std::string note;
};

struct SelectionAudit {
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::size_t network_reselections = 0;
  std::size_t chain_reselections = 0;
  std::size_t leader_elections = 0;
  std::size_t degenerate_elections = 0;
};

struct RunResult {
  SimConfig config;
  std::vector<CycleMetrics> series;
  RunSummary summary;
  std::vector<TraceSample> trace;
  TrainingInfo training;
  SelectionAudit audit;
  std::vector<ChainId> kill_chains;
  std::vector<UserId> flagged;  // every user the predictor ever flagged
  std::size_t false_positives = 0;
  std::string sidechain_tip;
  bool sidechain_verified = false;
  std::size_t sidechain_blocks = 0;
  double mean_chain_miners = 0.0;
};

/// Cycle-based simulation of one scheme over a population of honest users
/// and attackers.
class Simulation {
 public:
  using SelectionHook = std::function<void(std::size_t global_round, const MinerSets&)>;
  using RoundHook = std::function<void(const RoundOutcome&)>;

  explicit Simulation(SimConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        ledger_(cfg_.n_users, cfg_.n_chains, cfg_.theta),
        side_(cfg_.n_chains, cfg_.theta, cfg_.block_capacity_bytes),
        miners_(cfg_.n_chains),
        metrics_(cfg_.cycles),
        chain_length_(cfg_.n_chains, 0),
        active_max_(cfg_.n_chains, SlidingMax(cfg_.active_window)) {
    std::seed_seq pop_seed{cfg_.seed, std::uint64_t{0x706f70}};
    std::seed_seq run_seed{cfg_.seed, std::uint64_t{0x72756e}};
    Rng pop_rng(pop_seed);
    rng_.seed(run_seed);
    populate(pop_rng);
    flagged_ever_.assign(cfg_.n_users, false);
    users_.resize(cfg_.n_users);
    std::iota(users_.begin(), users_.end(), UserId{0});
    for (std::size_t j = 0; j < cfg_.n_chains; ++j) active_max_[j].push(active_[j].size());
  }

  const SimConfig& config() const noexcept { return cfg_; }
  const TrustLedger& ledger() const noexcept { return ledger_; }
  const SideChain& side_chain() const noexcept { return side_; }
  const MinerSets& miners() const noexcept { return miners_; }
  const std::vector<BehaviorProfile>& profiles() const noexcept { return profiles_; }
  const std::vector<ChainId>& kill_chains() const noexcept { return kill_chains_; }
  /// Lambda_j: users active on chain j, sorted.
  const std::vector<UserId>& active_users(ChainId j) const { return active_.at(j); }
  /// Chains user u is active on, sorted.
  const std::vector<ChainId>& active_chains(UserId u) const { return active_chains_.at(u); }
  const SvmModel& model() const noexcept { return model_; }
  const SelectionAudit& audit() const noexcept { return audit_; }
  const std::vector<CycleMetrics>& series() const noexcept { return metrics_.series(); }
  std::size_t cycle() const noexcept { return cycle_; }
  bool done() const noexcept { return cycle_ >= cfg_.cycles; }

  void on_selection(SelectionHook h) { selection_hook_ = std::move(h); }
  void on_round(RoundHook h) { round_hook_ = std::move(h); }

  /// One attacker per kind, active on the most kill-chains among those whose
  /// active mask-chains outnumber their active kill-chains (any attacker if
  /// none does). Lowest id on ties; absent kinds are skipped.
  std::vector<UserId> tracked_users() const {
    std::vector<UserId> out;
    for (BehaviorKind k : {BehaviorKind::Ordinary, BehaviorKind::NormalDMB,
                           BehaviorKind::IntensiveDMB}) {
      std::optional<UserId> best;
      std::pair<bool, std::size_t> best_key{false, 0};
      for (UserId u = 0; u < profiles_.size(); ++u) {
        if (profiles_[u].kind != k) continue;
        std::size_t kills = 0;
        for (ChainId c : active_chains_[u]) kills += is_kill_[c] ? 1 : 0;
        const std::pair<bool, std::size_t> key{active_chains_[u].size() - kills > kills, kills};
        if (!best || key > best_key) {
          best = u;
          best_key = key;
        }
      }
      if (best) out.push_back(*best);
    }
    return out;
  }

  std::vector<UserId> users_of(BehaviorKind k) const {
    std::vector<UserId> out;
    for (UserId u = 0; u < profiles_.size(); ++u)
      if (profiles_[u].kind == k) out.push_back(u);
    return out;
  }

  /// Runs one full cycle. Returns false once all cycles are done.
  bool step() {
    if (done()) return false;
    const auto t0 = std::chrono::steady_clock::now();
    metrics_.begin_cycle(cycle_);
    if (cfg_.scheme == Scheme::PoDT) maybe_train();
    select_all();
    for (std::size_t r = 0; r < cfg_.rounds_per_cycle; ++r) {
      for (ChainId j = 0; j < cfg_.n_chains; ++j) {
        RoundOutcome out = run_round(j, r);
        metrics_.add(out);
        if (round_hook_) round_hook_(out);
      }
      ++global_round_;
    }
    record_trace();
    const auto t1 = std::chrono::steady_clock::now();
    metrics_.set_wall_time(std::chrono::duration<double>(t1 - t0).count());
    ++cycle_;
    return true;
  }

  RunResult finish() {
    while (step()) {
    }
    RunResult res;
    res.config = cfg_;
    res.series = metrics_.series();
    res.summary = metrics_.summary();
    res.trace = trace_;
    res.training = training_;
    res.audit = audit_;
    res.kill_chains = kill_chains_;
    for (UserId u : users_)
      if (flagged_ever_[u]) res.flagged.push_back(u);
    const std::vector<UserId> intensive = users_of(BehaviorKind::IntensiveDMB);
    if (cfg_.scheme == Scheme::PoDT) res.summary.detection_rate = detection_rate(res.flagged, intensive);
    for (UserId u : res.flagged)
      if (profiles_[u].kind != BehaviorKind::IntensiveDMB) ++res.false_positives;
    res.sidechain_tip = to_hex(side_.tip_hash());
    res.sidechain_verified = side_.verify_chain();
    res.sidechain_blocks = side_.size();
    res.mean_chain_miners = miner_samples_ == 0 ? 0.0 : miner_sum_ / double(miner_samples_);
    return res;
  }

 private:
  void populate(Rng& rng) {
    const std::size_t n = cfg_.n_users;
    auto count = [&](double f) { return static_cast<std::size_t>(std::llround(f * double(n))); };
    std::size_t c_ord = count(cfg_.attackers.ordinary);
    std::size_t c_nrm = count(cfg_.attackers.normal_dmb);
    std::size_t c_int = count(cfg_.attackers.intensive_dmb);
    // rounding can overshoot by one per kind
    while (c_ord + c_nrm + c_int > n) {
      if (c_int > 0) --c_int;
      else if (c_nrm > 0) --c_nrm;
      else --c_ord;
    }
    kill_chains_ = assign_kill_chains(rng, cfg_.n_chains, cfg_.kill_chain_count);
    std::vector<UserId> order(n);
    std::iota(order.begin(), order.end(), UserId{0});
    std::shuffle(order.begin(), order.end(), rng);
    profiles_.assign(n, BehaviorProfile{});
    std::size_t pos = 0;
    auto assign = [&](BehaviorKind kind, std::size_t c) {
      for (std::size_t i = 0; i < c; ++i, ++pos) {
        profiles_[order[pos]] = BehaviorProfile::make(kind, kill_chains_, cfg_.n_chains);
      }
    };
    assign(BehaviorKind::Ordinary, c_ord);
    assign(BehaviorKind::NormalDMB, c_nrm);
    assign(BehaviorKind::IntensiveDMB, c_int);
    is_kill_.assign(cfg_.n_chains, false);
    for (ChainId c : kill_chains_) is_kill_[c] = true;
    // Lambda_j: every user is active on a uniformly drawn subset of chains
    const std::size_t a = cfg_.chains_per_user();
    active_.assign(cfg_.n_chains, {});
    active_chains_.assign(n, {});
    std::vector<ChainId> chains(cfg_.n_chains);
    for (UserId u = 0; u < n; ++u) {
      std::iota(chains.begin(), chains.end(), ChainId{0});
      for (std::size_t i = 0; i < a; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, chains.size() - 1);
        std::swap(chains[i], chains[pick(rng)]);
      }
      active_chains_[u].assign(chains.begin(), chains.begin() + static_cast<std::ptrdiff_t>(a));
      std::sort(active_chains_[u].begin(), active_chains_[u].end());
      for (ChainId c : active_chains_[u]) active_[c].push_back(u);
    }
  }

  bool trust_gated() const noexcept {
    return cfg_.scheme == Scheme::PoDT || cfg_.scheme == Scheme::DiscTrustOnly ||
           cfg_.scheme == Scheme::Baseline;
  }

  std::size_t active_count(ChainId j) const { return active_max_[j].max(); }

  bool net_qualifies(UserId u) const {
    if (cfg_.scheme == Scheme::Baseline) return ledger_.baseline_trust(u) >= cfg_.theta;
    return ledger_.global_trust(u) >= cfg_.theta;
  }

  bool chain_qualifies(UserId u, ChainId j) const {
    if (cfg_.scheme == Scheme::Baseline) return true;
    if (ledger_.local_trust(u, j) < cfg_.theta) return false;
    return !std::binary_search(flagged_[j].begin(), flagged_[j].end(), u);
  }

  // --- behaviour prediction -------------------------------------------------

  FeatureQuery feature_query() const { return {cfg_.feedback_mode, cfg_.feedback_window}; }

  std::vector<UserId> trustworthy_users() const {
    std::vector<UserId> out;
    for (UserId u : users_)
      if (ledger_.classify(u) == TrustState::Trustworthy) out.push_back(u);
    return out;
  }

  void maybe_train() {
    const std::size_t cal = cfg_.calibration_cycles;
    bool due = cycle_ == cal;
    if (!due && cfg_.retrain_interval > 0 && cycle_ > cal) {
      due = (cycle_ - cal) % cfg_.retrain_interval == 0;
    }
    if (due) train_model();
  }

  void train_model() {
    std::vector<LabeledSample> pos, neg;
    const FeatureQuery q = feature_query();
    for (UserId u : trustworthy_users()) {
      const BehaviorProfile& p = profiles_[u];
      const bool intensive = p.kind == BehaviorKind::IntensiveDMB;
      for (ChainId j = 0; j < cfg_.n_chains; ++j) {
        const ExperienceRecord* rec = side_.latest_record(u, j);
        if (rec == nullptr) continue;
        // an intensive record without a false block shows nothing yet; other
        // attackers with false blocks are only passing through Phi1
        if (intensive != (rec->false_blocks > 0)) continue;
        LabeledSample s{features_for(side_, u, j, chain_length_[j], active_count(j), q),
                        intensive ? +1 : -1};
        (intensive ? pos : neg).push_back(s);
      }
    }
    const std::size_t cap = cfg_.max_training_samples;
    const std::size_t keep_pos = std::min(pos.size(), std::max(cap / 2, cap - std::min(cap, neg.size())));
    const std::size_t keep_neg = std::min(neg.size(), cap - keep_pos);
    std::vector<LabeledSample> samples;
    auto take_even = [&](const std::vector<LabeledSample>& from, std::size_t k) {
      for (std::size_t i = 0; i < k; ++i) samples.push_back(from[i * from.size() / k]);
    };
    take_even(pos, keep_pos);
    take_even(neg, keep_neg);
    ++training_.trainings;
    training_.sample_count = samples.size();
    training_.positives = keep_pos;
    if (keep_pos == 0 || keep_neg == 0) {
      training_.note = "training set holds a single class; behaviour prediction stays off";
      if (training_.trainings == 1) warn(training_.note);
      return;
    }
    TrainResult tr = train_with_fallback(samples, TrainOptions{}, cfg_.soft_margin_penalty);
    model_ = tr.model;
    training_.trained = true;
    training_.used_fallback = tr.used_fallback;
    training_.note = tr.fallback_reason;
  }

  std::vector<UserId> detect_on_chain(ChainId j, std::span<const UserId> phi1) {
    std::vector<UserId> flagged = detect_intensive(phi1, j, model_, side_, chain_length_[j],
                                                   active_count(j), feature_query());
    for (UserId u : flagged) flagged_ever_[u] = true;
    return flagged;
  }

  // --- selection ------------------------------------------------------------

  void audit_sets() {
    ++audit_.checks;
    if (miners_.network.size() < majority_size(users_.size())) ++audit_.violations;
    for (ChainId j = 0; j < cfg_.n_chains; ++j) {
      if (active_[j].empty()) continue;
      ++audit_.checks;
      if (miners_.chain[j].size() < majority_size(active_count(j))) ++audit_.violations;
    }
  }

  std::vector<UserId> random_subset(std::span<const UserId> pool, std::size_t k) {
    std::vector<UserId> out;
    detail::pad_uniform(out, pool, k, rng_);
    return out;
  }

  std::vector<UserId> reselect_chain(ChainId j, std::span<const UserId> phi1) {
    if (cfg_.scheme == Scheme::PoDT && model_.trained) {
      flagged_[j] = detect_on_chain(j, phi1);
    } else {
      flagged_[j].clear();
    }
    if (active_[j].empty()) return {};
    return select_chain_miners(
        active_[j], miners_.network, [&](UserId u) { return chain_qualifies(u, j); }, rng_,
        ChainSelectionOptions{cfg_.strict_rule4});
  }

  void select_all() {
    flagged_.assign(cfg_.n_chains, {});
    switch (cfg_.scheme) {
      case Scheme::AllMiners:
        miners_.network = users_;
        for (ChainId j = 0; j < cfg_.n_chains; ++j) miners_.chain[j] = users_;
        break;
      case Scheme::RandomMiners:
        miners_.network = random_subset(users_, majority_size(users_.size()));
        for (ChainId j = 0; j < cfg_.n_chains; ++j)
          miners_.chain[j] = random_subset(active_[j], majority_size(active_[j].size()));
        break;
      default: {
        miners_.network = select_network_miners(
            users_, [&](UserId u) { return net_qualifies(u); }, rng_);
        std::vector<UserId> phi1;
        if (cfg_.scheme == Scheme::PoDT && model_.trained) phi1 = trustworthy_users();
        for (ChainId j = 0; j < cfg_.n_chains; ++j) miners_.chain[j] = reselect_chain(j, phi1);
        break;
      }
    }
    audit_sets();
    for (ChainId j = 0; j < cfg_.n_chains; ++j)
      if (!miners_.chain[j].empty()) refresh_leader_slot(j);
    if (selection_hook_) selection_hook_(global_round_, miners_);
  }

  void refresh_after_round(ChainId j, const std::vector<UserId>& generators) {
    if (!trust_gated()) return;
    auto qualifies = [&](UserId u) { return net_qualifies(u); };
    bool touched = false;
    if (std::any_of(generators.begin(), generators.end(), [&](UserId u) { return !qualifies(u); })) {
      touched = true;
      auto& net = miners_.network;
      for (UserId g : generators)
        if (!qualifies(g)) net.erase(std::remove(net.begin(), net.end(), g), net.end());
      if (net.size() < majority_size(users_.size())) {
        net = select_network_miners(users_, qualifies, rng_);
        ++audit_.network_reselections;
      }
    }
    auto& members = miners_.chain[j];
    std::vector<UserId> drop;
    for (UserId g : generators) {
      bool out = !std::binary_search(miners_.network.begin(), miners_.network.end(), g) ||
                 !chain_qualifies(g, j);
      if (!out && cfg_.scheme == Scheme::PoDT && model_.trained &&
          ledger_.classify(g) == TrustState::Trustworthy) {
        out = predict(model_, features_for(side_, g, j, chain_length_[j], active_count(j),
                                           feature_query())) > 0;
        if (out) flagged_ever_[g] = true;
      }
      if (out) drop.push_back(g);
    }
    if (!drop.empty()) {
      touched = true;
      const bool reselected = refresh_chain_miners(
          members, active_count(j),
          [&](UserId u) { return std::find(drop.begin(), drop.end(), u) == drop.end(); },
          [&] {
            std::vector<UserId> phi1;
            if (cfg_.scheme == Scheme::PoDT && model_.trained) phi1 = trustworthy_users();
            return reselect_chain(j, phi1);
          });
      if (reselected) ++audit_.chain_reselections;
    }
    if (touched) audit_sets();
  }

  void refresh_leader_slot(ChainId j) {
    LeaderSlot& slot = miners_.leader[j];
    const auto& members = miners_.chain[j];
    std::uint64_t fal = 0;
    if (slot.id) {
      fal = cfg_.scheme == Scheme::Baseline ? ledger_.totals(*slot.id).fal
                                            : ledger_.counters(*slot.id, j).fal;
      if (!trust_gated()) fal = 0;
    }
    const bool elected = refresh_leader(slot, members, fal, cfg_.leader_term, [&]() -> UserId {
      switch (cfg_.scheme) {
        case Scheme::AllMiners:
        case Scheme::RandomMiners: {
          std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
          return members[pick(rng_)];
        }
        case Scheme::Baseline: {
          LeaderChoice c = elect_leader(
              members, [&](UserId u) { return ledger_.totals(u).fal; },
              [&](UserId u) { return ledger_.baseline_trust(u); });
          if (c.degenerate) ++audit_.degenerate_elections;
          return c.id;
        }
        default: {
          LeaderChoice c = elect_leader(members, ledger_, j);
          if (c.degenerate) ++audit_.degenerate_elections;
          return c.id;
        }
      }
    });
    if (elected) ++audit_.leader_elections;
  }

  // --- rounds ---------------------------------------------------------------

  // k distinct indices into [0, size), drawn uniformly.
  std::vector<std::size_t> sample_indices(std::size_t size, std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    std::uniform_int_distribution<std::size_t> pick(0, size - 1);
    while (out.size() < k) {
      const std::size_t i = pick(rng_);
      if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
    }
    return out;
  }

  RoundOutcome run_round(ChainId j, std::size_t r) {
    RoundOutcome out;
    out.cycle = cycle_;
    out.round = r;
    out.chain_id = j;
    out.kill_chain = is_kill_[j];
    const auto& members = miners_.chain[j];
    const bool all_miners = cfg_.scheme == Scheme::AllMiners;
    const std::size_t need = cfg_.k_gen + (all_miners ? 1 : cfg_.k_val);
    if (members.size() < need) {
      out.skipped = true;
      warn("chain " + std::to_string(j) + " has too few chain miners; round skipped");
      return out;
    }
    refresh_leader_slot(j);
    const UserId leader = *miners_.leader[j].id;

    const std::size_t picks = all_miners ? cfg_.k_gen : cfg_.k_gen + cfg_.k_val;
    const std::vector<std::size_t> idx = sample_indices(members.size(), picks);
    for (std::size_t k = 0; k < cfg_.k_gen; ++k) out.generator_ids.push_back(members[idx[k]]);
    if (all_miners) {
      for (UserId u : members)
        if (std::find(out.generator_ids.begin(), out.generator_ids.end(), u) ==
            out.generator_ids.end())
          out.validator_ids.push_back(u);
    } else {
      for (std::size_t k = cfg_.k_gen; k < picks; ++k) out.validator_ids.push_back(members[idx[k]]);
    }

    const AttackThresholds th = cfg_.thresholds();
    for (UserId g : out.generator_ids) {
      const double gt = cfg_.scheme == Scheme::Baseline ? ledger_.baseline_trust(g)
                                                        : ledger_.global_trust(g);
      const Action a = decide_action(profiles_[g], j, gt, ledger_.local_trust(g, j), th);
      const bool intent = a == Action::CreateTrue;
      out.intents.push_back(intent);
      if (!intent) ++out.malicious_by_kind[static_cast<std::size_t>(profiles_[g].kind)];
    }
    out.block_is_true = resolve_block_truth(out.intents);

    for (UserId v : out.validator_ids)
      if (cast_vote(profiles_[v], j, out.block_is_true)) ++out.votes_true;
    out.votes_cast = out.validator_ids.size();
    out.feedback = static_cast<double>(out.votes_true) / static_cast<double>(out.votes_cast);

    out.leader_id = leader;
    out.leader_attacks = profiles_[leader].attacks_chain(j);
    out.accepted = resolve_acceptance(out.block_is_true, out.votes_true, out.votes_cast,
                                      out.leader_attacks);
    if (out.accepted) ++chain_length_[j];

    active_max_[j].push(active_[j].size());
    const std::size_t m_j = active_count(j);
    out.messages_sent = round_messages(cfg_.scheme, cfg_.k_gen, cfg_.k_val, members.size(), m_j,
                                       users_.size());
    out.replicas = all_miners ? users_.size() : members.size();
    miner_sum_ += static_cast<double>(members.size());
    ++miner_samples_;

    std::vector<ExperienceRecord> records;
    for (std::size_t k = 0; k < out.generator_ids.size(); ++k) {
      const UserId g = out.generator_ids[k];
      ledger_.record_block(g, j, out.intents[k]);
      const BlockCounters& tot = ledger_.totals(g);
      records.push_back(ExperienceRecord{g, j, ledger_.local_trust(g, j), ledger_.global_trust(g),
                                         tot.tru, tot.fal, chain_length_[j], m_j, out.feedback});
    }
    side_.append_block(std::move(records), leader, j, [&](UserId u) {
      return std::binary_search(members.begin(), members.end(), u);
    });

    if (miners_.leader[j].term_left > 0) --miners_.leader[j].term_left;
    refresh_after_round(j, out.generator_ids);
    return out;
  }

  void record_trace() {
    for (UserId u : tracked_users()) {
      trace_.push_back(TraceSample{cycle_, u, profiles_[u].kind, ledger_.global_trust(u),
                                   ledger_.trust_vector(u), active_chains_[u]});
    }
  }

  SimConfig cfg_;
  TrustLedger ledger_;
  SideChain side_;
  MinerSets miners_;
  MetricsAccumulator metrics_;
  std::vector<std::uint64_t> chain_length_;
  std::vector<SlidingMax> active_max_;
  Rng rng_;
  std::vector<UserId> users_;
  std::vector<BehaviorProfile> profiles_;
  std::vector<ChainId> kill_chains_;
  std::vector<bool> is_kill_;
  std::vector<std::vector<UserId>> active_;
  std::vector<std::vector<ChainId>> active_chains_;
  std::vector<std::vector<UserId>> flagged_;
  std::vector<bool> flagged_ever_;
  SvmModel model_;
  TrainingInfo training_;
  SelectionAudit audit_;
  std::vector<TraceSample> trace_;
  std::size_t cycle_ = 0;
  std::size_t global_round_ = 0;
  double miner_sum_ = 0.0;
  std::size_t miner_samples_ = 0;
  SelectionHook selection_hook_;
  RoundHook round_hook_;
};

inline RunResult run_simulation(const SimConfig& cfg) {
  Simulation sim(cfg);
  return sim.finish();
}

}  // namespace podt
