#pragma once

#include <algorithm>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "podt/trust.hpp"
#include "podt/types.hpp"

namespace podt {

/// Chain-miner leader of one chain and the rounds left in its term.
struct LeaderSlot {
  std::optional<UserId> id;
  std::size_t term_left = 0;
};

/// Current trusted miner sets. All member lists are kept sorted.
struct MinerSets {
  std::vector<UserId> network;
  std::vector<std::vector<UserId>> chain;
  std::vector<LeaderSlot> leader;

  explicit MinerSets(std::size_t chains = 0) : chain(chains), leader(chains) {}

  bool is_network_miner(UserId u) const {
    return std::binary_search(network.begin(), network.end(), u);
  }
  bool is_chain_miner(ChainId c, UserId u) const {
    const auto& m = chain.at(c);
    return std::binary_search(m.begin(), m.end(), u);
  }
};

namespace detail {

inline bool contains_sorted(std::span<const UserId> sorted, UserId u) {
  return std::binary_search(sorted.begin(), sorted.end(), u);
}

// Draws uniformly without replacement from pool \ selected until `selected`
// holds `target` members. Returns false if the pool ran dry first.
inline bool pad_uniform(std::vector<UserId>& selected, std::span<const UserId> pool,
                        std::size_t target, Rng& rng) {
  if (selected.size() >= target) return true;
  std::sort(selected.begin(), selected.end());
  std::vector<UserId> rest;
  rest.reserve(pool.size());
  for (UserId u : pool)
    if (!contains_sorted(selected, u)) rest.push_back(u);
  std::size_t need = target - selected.size();
  const bool enough = rest.size() >= need;
  need = std::min(need, rest.size());
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
    std::swap(rest[i], rest[pick(rng)]);
    selected.push_back(rest[i]);
  }
  std::sort(selected.begin(), selected.end());
  return enough;
}

}  // namespace detail

/// Every user passing `qualifies`, padded with uniformly drawn other users
/// until the set is a strict majority of `users`.
template <class Qualifies>
  requires std::predicate<Qualifies&, UserId>
std::vector<UserId> select_network_miners(std::span<const UserId> users, Qualifies&& qualifies,
                                          Rng& rng) {
  if (users.empty()) throw ConfigError("network-miner selection needs at least one user");
  std::vector<UserId> out;
  for (UserId u : users)
    if (qualifies(u)) out.push_back(u);
  detail::pad_uniform(out, users, majority_size(users.size()), rng);
  return out;
}

/// Qualification by global trust: users with gt_i >= theta.
inline std::vector<UserId> select_network_miners(std::span<const UserId> users,
                                                 const TrustLedger& ledger, Rng& rng) {
  const double theta = ledger.theta();
  return select_network_miners(
      users, [&](UserId u) { return ledger.global_trust(u) >= theta; }, rng);
}

/// Drops members failing `qualifies`; reselects from scratch when the
/// remainder is no longer a strict majority. Returns true on reselection.
template <class Qualifies>
bool refresh_network_miners(std::vector<UserId>& network, std::span<const UserId> users,
                            Qualifies&& qualifies, Rng& rng) {
  std::erase_if(network, [&](UserId u) { return !qualifies(u); });
  if (network.size() >= majority_size(users.size())) return false;
  network = select_network_miners(users, qualifies, rng);
  return true;
}

struct ChainSelectionOptions {
  bool strict_rule4 = false;  // pad only from active network miners
};

/// Active users of a chain that are network miners and pass `qualifies`,
/// padded from the active users until the set is a strict majority of them.
template <class Qualifies>
std::vector<UserId> select_chain_miners(std::span<const UserId> active,
                                        std::span<const UserId> network_sorted,
                                        Qualifies&& qualifies, Rng& rng,
                                        const ChainSelectionOptions& opt = {}) {
  if (active.empty()) throw ConfigError("chain-miner selection needs at least one active user");
  std::vector<UserId> out;
  for (UserId u : active)
    if (detail::contains_sorted(network_sorted, u) && qualifies(u)) out.push_back(u);
  const std::size_t target = majority_size(active.size());
  if (opt.strict_rule4) {
    std::vector<UserId> pool;
    for (UserId u : active)
      if (detail::contains_sorted(network_sorted, u)) pool.push_back(u);
    if (detail::pad_uniform(out, pool, target, rng)) return out;
    warn("too few active network miners to pad the chain-miner set; padding from all active users");
  }
  detail::pad_uniform(out, active, target, rng);
  return out;
}

/// Gate on one chain: lt_ij >= theta and not flagged by the behaviour
/// predictor (`flagged_sorted` holds the users predicted +1).
inline std::vector<UserId> select_chain_miners(std::span<const UserId> active,
                                               std::span<const UserId> network_sorted,
                                               const TrustLedger& ledger, ChainId chain,
                                               std::span<const UserId> flagged_sorted, Rng& rng,
                                               const ChainSelectionOptions& opt = {}) {
  const double theta = ledger.theta();
  return select_chain_miners(
      active, network_sorted,
      [&](UserId u) {
        return ledger.local_trust(u, chain) >= theta && !detail::contains_sorted(flagged_sorted, u);
      },
      rng, opt);
}

/// Removes members failing `qualifies`; reselects via `reselect` when the
/// remainder is no longer a strict majority of `active_count`.
template <class Qualifies, class Reselect>
bool refresh_chain_miners(std::vector<UserId>& members, std::size_t active_count,
                          Qualifies&& qualifies, Reselect&& reselect) {
  std::erase_if(members, [&](UserId u) { return !qualifies(u); });
  if (members.size() >= majority_size(active_count)) return false;
  members = reselect();
  return true;
}

struct LeaderChoice {
  UserId id = 0;
  bool degenerate = false;  // no member had a clean record on the chain
};

/// Member with no false blocks and maximal trust; ties go to the lowest id.
/// If every member has a false block the argmax over all members is taken.
template <class FalseCount, class Trust>
  requires std::invocable<FalseCount&, UserId> && std::invocable<Trust&, UserId>
LeaderChoice elect_leader(std::span<const UserId> members, FalseCount&& fal, Trust&& trust) {
  if (members.empty()) throw StateError("cannot elect a leader from an empty chain-miner set");
  auto argmax = [&](bool clean_only) -> std::optional<UserId> {
    std::optional<UserId> best;
    double best_t = 0.0;
    for (UserId u : members) {
      if (clean_only && fal(u) != 0) continue;
      const double t = trust(u);
      if (!best || t > best_t || (t == best_t && u < *best)) {
        best = u;
        best_t = t;
      }
    }
    return best;
  };
  if (auto clean = argmax(true)) return {*clean, false};
  warn("every chain miner has a false block; electing the most trusted member");
  return {*argmax(false), true};
}

inline LeaderChoice elect_leader(std::span<const UserId> members, const TrustLedger& ledger,
                                 ChainId chain) {
  return elect_leader(
      members, [&](UserId u) { return ledger.counters(u, chain).fal; },
      [&](UserId u) { return ledger.local_trust(u, chain); });
}

/// True when the slot needs an election: vacant, term over, leader no longer
/// a member, or leader has a false block on the chain.
inline bool leader_needs_refresh(const LeaderSlot& slot, std::span<const UserId> members_sorted,
                                 std::uint64_t leader_false_blocks) {
  if (!slot.id || slot.term_left == 0) return true;
  if (!detail::contains_sorted(members_sorted, *slot.id)) return true;
  return leader_false_blocks >= 1;
}

/// Re-elects via `elect` when needed; the new leader gets a fresh term.
/// Returns true if an election ran.
template <class Elect>
  requires std::invocable<Elect&>
bool refresh_leader(LeaderSlot& slot, std::span<const UserId> members_sorted,
                    std::uint64_t leader_false_blocks, std::size_t term, Elect&& elect) {
  if (!leader_needs_refresh(slot, members_sorted, leader_false_blocks)) return false;
  slot.id = elect();
  slot.term_left = term;
  return true;
}

inline bool refresh_leader(LeaderSlot& slot, std::span<const UserId> members_sorted,
                           const TrustLedger& ledger, ChainId chain, std::size_t term) {
  const std::uint64_t fal = slot.id ? ledger.counters(*slot.id, chain).fal : 0;
  return refresh_leader(slot, members_sorted, fal, term,
                        [&] { return elect_leader(members_sorted, ledger, chain).id; });
}

}  // namespace podt
