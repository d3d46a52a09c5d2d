#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "podt/types.hpp"

namespace podt {

enum class BehaviorKind { Honest, Ordinary, NormalDMB, IntensiveDMB };
inline constexpr std::size_t kBehaviorKinds = 4;

enum class Action { CreateTrue, CreateFalse };

enum class Phase { Boosting, Attacking };

inline std::string_view to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::Honest: return "honest";
    case BehaviorKind::Ordinary: return "ordinary";
    case BehaviorKind::NormalDMB: return "normal_dmb";
    case BehaviorKind::IntensiveDMB: return "intensive_dmb";
  }
  return "?";
}

/// Trust thresholds an attacker reacts to: the system threshold theta, the
/// warning line theta + xi1 and the high line theta + xi2.
struct AttackThresholds {
  double theta = 0.5;
  double xi1 = 0.1;
  double xi2 = 0.4;

  double warning_line() const noexcept { return theta + xi1; }
  double high_line() const noexcept { return theta + xi2; }

  void validate() const {
    if (!(xi1 < xi2)) throw ConfigError("xi1 must be smaller than xi2");
    if (theta + xi2 > 1.0) throw ConfigError("theta + xi2 must not exceed 1");
  }
};

/// Strategy state of one agent.
///
/// DMB attackers split the chains into kill-chains (sabotaged) and
/// mask-chains (served honestly). A normal DMB attacker runs one phase
/// machine on its global trust; an intensive one runs a phase machine and an
/// alternation toggle per kill-chain on the local trust of that chain.
struct BehaviorProfile {
  BehaviorKind kind = BehaviorKind::Honest;
  std::vector<ChainId> kill_chains;  // sorted, empty for Honest and Ordinary
  Phase phase = Phase::Attacking;    // NormalDMB
  std::vector<Phase> chain_phase;    // IntensiveDMB, indexed by chain
  std::vector<bool> next_false;      // IntensiveDMB alternation state, by chain

  static BehaviorProfile make(BehaviorKind kind, std::vector<ChainId> kill, std::size_t chains) {
    BehaviorProfile p;
    p.kind = kind;
    if (kind == BehaviorKind::NormalDMB || kind == BehaviorKind::IntensiveDMB) {
      std::sort(kill.begin(), kill.end());
      kill.erase(std::unique(kill.begin(), kill.end()), kill.end());
      for (ChainId c : kill)
        if (c >= chains) throw ConfigError("kill-chain id out of range");
      p.kill_chains = std::move(kill);
    }
    if (kind == BehaviorKind::IntensiveDMB) {
      p.chain_phase.assign(chains, Phase::Attacking);
      p.next_false.assign(chains, false);
    }
    return p;
  }

  bool is_attacker() const noexcept { return kind != BehaviorKind::Honest; }

  bool is_kill_chain(ChainId c) const {
    return std::binary_search(kill_chains.begin(), kill_chains.end(), c);
  }

  /// Whether this agent works against consensus on `c` (ordinary attackers
  /// target every chain).
  bool attacks_chain(ChainId c) const {
    switch (kind) {
      case BehaviorKind::Honest: return false;
      case BehaviorKind::Ordinary: return true;
      default: return is_kill_chain(c);
    }
  }
};

/// Picks the action of an agent selected to generate a block on `chain`,
/// advancing its phase and alternation state.
inline Action decide_action(BehaviorProfile& p, ChainId chain, double global_trust,
                            double local_trust, const AttackThresholds& th) {
  switch (p.kind) {
    case BehaviorKind::Honest:
      return Action::CreateTrue;
    case BehaviorKind::Ordinary:
      return Action::CreateFalse;
    case BehaviorKind::NormalDMB: {
      if (p.phase == Phase::Attacking && global_trust <= th.warning_line()) {
        p.phase = Phase::Boosting;
      } else if (p.phase == Phase::Boosting && global_trust >= th.high_line()) {
        p.phase = Phase::Attacking;
      }
      if (!p.is_kill_chain(chain) || p.phase == Phase::Boosting) return Action::CreateTrue;
      return Action::CreateFalse;
    }
    case BehaviorKind::IntensiveDMB: {
      if (!p.is_kill_chain(chain)) return Action::CreateTrue;
      Phase& ph = p.chain_phase.at(chain);
      if (ph == Phase::Attacking && local_trust <= th.warning_line()) {
        ph = Phase::Boosting;
      } else if (ph == Phase::Boosting && local_trust >= th.high_line()) {
        ph = Phase::Attacking;
      }
      if (ph == Phase::Boosting) return Action::CreateTrue;
      const bool make_false = p.next_false[chain];
      p.next_false[chain] = !make_false;
      return make_false ? Action::CreateFalse : Action::CreateTrue;
    }
  }
  return Action::CreateTrue;
}

/// Validation vote: honest agents report the block's truth, attackers
/// report its negation on the chains they attack.
inline bool cast_vote(const BehaviorProfile& p, ChainId chain, bool block_is_true) {
  return p.attacks_chain(chain) ? !block_is_true : block_is_true;
}

/// Uniformly random k-subset of {0, ..., chains-1}, sorted.
inline std::vector<ChainId> assign_kill_chains(Rng& rng, std::size_t chains, std::size_t k) {
  if (k > chains) {
    throw ConfigError("kill-chain count " + std::to_string(k) + " exceeds chain count " +
                      std::to_string(chains));
  }
  std::vector<ChainId> all(chains);
  std::iota(all.begin(), all.end(), ChainId{0});
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, chains - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace podt
