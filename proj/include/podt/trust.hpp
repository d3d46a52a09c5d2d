#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "podt/types.hpp"

namespace podt {

struct BlockCounters {
  std::uint64_t tru = 0;
  std::uint64_t fal = 0;

  friend bool operator==(const BlockCounters&, const BlockCounters&) = default;
};

enum class TrustState { Trustworthy, LowRisk, MediumRisk, HighRisk };

inline std::string_view to_string(TrustState s) {
  switch (s) {
    case TrustState::Trustworthy: return "Trustworthy";
    case TrustState::LowRisk: return "LowRisk";
    case TrustState::MediumRisk: return "MediumRisk";
    case TrustState::HighRisk: return "HighRisk";
  }
  return "?";
}

// Per-chain and network-wide trust share the same shape: (tru + theta) / (tru + fal + 1).
// A user with no history therefore sits exactly on the threshold.
inline double distinctive_trust(std::uint64_t tru, std::uint64_t fal, double theta) noexcept {
  const double t = static_cast<double>(tru);
  const double f = static_cast<double>(fal);
  return (t + theta) / (t + f + 1.0);
}

// Universal beta-expectation trust used by the Baseline comparator. Note the
// theta (not 1) in the denominator: a newcomer evaluates to 1.0.
inline double universal_trust(std::uint64_t tru, std::uint64_t fal, double theta) noexcept {
  const double t = static_cast<double>(tru);
  const double f = static_cast<double>(fal);
  return (t + theta) / (t + f + theta);
}

/// Number of entries strictly below theta.
inline std::size_t count_below(std::span<const double> local_trusts, double theta) noexcept {
  return static_cast<std::size_t>(std::count_if(local_trusts.begin(), local_trusts.end(),
                                                [theta](double lt) { return lt < theta; }));
}

/// Four-way trust state from (global trust, low-local count). HighRisk is
/// tested before MediumRisk so that lambda == chains is reachable, and the
/// (gt < theta, lambda == 0) corner is folded into MediumRisk.
inline TrustState classify_state(double global_trust, std::size_t low_count, std::size_t chains,
                                 double theta) noexcept {
  if (global_trust >= theta) {
    return low_count == 0 ? TrustState::Trustworthy : TrustState::LowRisk;
  }
  if (low_count == chains) return TrustState::HighRisk;
  return TrustState::MediumRisk;
}

inline void check_theta(double theta) {
  if (!(theta > 0.0 && theta < 1.0)) {
    throw ConfigError("trust threshold theta must lie in (0, 1), got " + std::to_string(theta));
  }
}

/// Block counters for every (user, chain) pair plus the trust values derived
/// from them. Trust is always recomputed from the integer counters.
class TrustLedger {
 public:
  TrustLedger(std::size_t users, std::size_t chains, double theta)
      : users_(users), chains_(chains), theta_(theta), counters_(users * chains), totals_(users) {
    check_theta(theta);
    if (chains == 0) throw ConfigError("ledger needs at least one chain");
  }

  std::size_t users() const noexcept { return users_; }
  std::size_t chains() const noexcept { return chains_; }
  double theta() const noexcept { return theta_; }

  const BlockCounters& record_block(UserId user, ChainId chain, bool was_true) {
    check_ids(user, chain);
    BlockCounters& c = counters_[slot(user, chain)];
    BlockCounters& total = totals_[user];
    if (was_true) {
      ++c.tru;
      ++total.tru;
    } else {
      ++c.fal;
      ++total.fal;
    }
    return c;
  }

  const BlockCounters& counters(UserId user, ChainId chain) const {
    check_ids(user, chain);
    return counters_[slot(user, chain)];
  }

  /// Network-wide sums (tru_i, fal_i) over every chain.
  const BlockCounters& totals(UserId user) const {
    check_user(user);
    return totals_[user];
  }

  double local_trust(UserId user, ChainId chain) const {
    const BlockCounters& c = counters(user, chain);
    return distinctive_trust(c.tru, c.fal, theta_);
  }

  std::vector<double> trust_vector(UserId user) const {
    check_user(user);
    std::vector<double> out(chains_);
    for (std::size_t j = 0; j < chains_; ++j) {
      const BlockCounters& c = counters_[user * chains_ + j];
      out[j] = distinctive_trust(c.tru, c.fal, theta_);
    }
    return out;
  }

  double global_trust(UserId user) const {
    const BlockCounters& t = totals(user);
    return distinctive_trust(t.tru, t.fal, theta_);
  }

  double baseline_trust(UserId user) const {
    const BlockCounters& t = totals(user);
    return universal_trust(t.tru, t.fal, theta_);
  }

  std::size_t count_low_local(UserId user) const {
    check_user(user);
    std::size_t low = 0;
    for (std::size_t j = 0; j < chains_; ++j) {
      const BlockCounters& c = counters_[user * chains_ + j];
      if (distinctive_trust(c.tru, c.fal, theta_) < theta_) ++low;
    }
    return low;
  }

  TrustState classify(UserId user) const {
    return classify_state(global_trust(user), count_low_local(user), chains_, theta_);
  }

  /// Snapshot as CSV: header `user_id,chain_id,tru,fal`, one row per pair in
  /// user-major order.
  void write_csv(std::ostream& os) const {
    os << "user_id,chain_id,tru,fal\n";
    for (std::size_t i = 0; i < users_; ++i) {
      for (std::size_t j = 0; j < chains_; ++j) {
        const BlockCounters& c = counters_[i * chains_ + j];
        os << i << ',' << j << ',' << c.tru << ',' << c.fal << '\n';
      }
    }
  }

 private:
  std::size_t slot(UserId user, ChainId chain) const noexcept {
    return static_cast<std::size_t>(user) * chains_ + chain;
  }

  void check_user(UserId user) const {
    if (user >= users_) {
      throw IdOutOfRange("user id " + std::to_string(user) + " out of range (n=" +
                         std::to_string(users_) + ")");
    }
  }

  void check_ids(UserId user, ChainId chain) const {
    check_user(user);
    if (chain >= chains_) {
      throw IdOutOfRange("chain id " + std::to_string(chain) + " out of range (h=" +
                         std::to_string(chains_) + ")");
    }
  }

  std::size_t users_;
  std::size_t chains_;
  double theta_;
  std::vector<BlockCounters> counters_;
  std::vector<BlockCounters> totals_;
};

/// Users split by trust state: Trustworthy, LowRisk, MediumRisk, HighRisk.
/// LowRisk and MediumRisk together hold the normal DMB attackers.
struct Partition {
  std::vector<UserId> trustworthy;
  std::vector<UserId> low_risk;
  std::vector<UserId> medium_risk;
  std::vector<UserId> high_risk;

  std::vector<UserId>& bucket(TrustState s) {
    switch (s) {
      case TrustState::Trustworthy: return trustworthy;
      case TrustState::LowRisk: return low_risk;
      case TrustState::MediumRisk: return medium_risk;
      case TrustState::HighRisk: break;
    }
    return high_risk;
  }
};

template <class StateOf>
Partition partition(std::span<const UserId> users, StateOf&& state_of) {
  Partition out;
  for (UserId u : users) out.bucket(state_of(u)).push_back(u);
  return out;
}

inline Partition partition(const TrustLedger& ledger, std::span<const UserId> users) {
  return partition(users, [&](UserId u) { return ledger.classify(u); });
}

}  // namespace podt
