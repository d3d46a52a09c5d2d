#pragma once

#include <span>
#include <vector>

#include "podt/sidechain.hpp"
#include "podt/svm.hpp"
#include "podt/types.hpp"

namespace podt {

/// Which feedback value represents a user's blocks on a chain.
enum class FeedbackMode { Latest, WindowMean };

/// Projects a record onto (lt_ij, gt_i, t_i, f_i, L_j, N_j, F_k).
inline FeatureVector extract_features(const ExperienceRecord& r) {
  return {r.local_trust,
          r.global_trust,
          static_cast<double>(r.true_blocks),
          static_cast<double>(r.false_blocks),
          static_cast<double>(r.chain_length),
          static_cast<double>(r.active_users),
          r.feedback};
}

/// Feature vector for a user with no side-chain history on the chain.
inline FeatureVector newcomer_features(double theta, std::uint64_t chain_length,
                                       std::uint64_t active_users, double feedback = 1.0) {
  return {theta, theta, 0.0, 0.0, static_cast<double>(chain_length),
          static_cast<double>(active_users), feedback};
}

struct FeatureQuery {
  FeedbackMode feedback_mode = FeedbackMode::Latest;
  std::size_t feedback_window = 5;
};

/// Latest historical experience of `user` on `chain`, or the newcomer vector.
inline FeatureVector features_for(const SideChain& side_chain, UserId user, ChainId chain,
                                  std::uint64_t chain_length, std::uint64_t active_users,
                                  const FeatureQuery& q = {}) {
  const ExperienceRecord* last = side_chain.latest_record(user, chain);
  if (last == nullptr) {
    return newcomer_features(side_chain.theta(), chain_length, active_users);
  }
  FeatureVector f = extract_features(*last);
  if (q.feedback_mode == FeedbackMode::WindowMean && q.feedback_window > 1) {
    const auto hist = side_chain.query_history(user, chain, q.feedback_window);
    double s = 0.0;
    for (const ExperienceRecord& r : hist) s += r.feedback;
    f[6] = s / static_cast<double>(hist.size());
  }
  return f;
}

/// Users of `trustworthy` whose latest experience on `chain` the model labels
/// as intensive DMB behaviour.
inline std::vector<UserId> detect_intensive(std::span<const UserId> trustworthy, ChainId chain,
                                            const SvmModel& model, const SideChain& side_chain,
                                            std::uint64_t chain_length,
                                            std::uint64_t active_users,
                                            const FeatureQuery& q = {}) {
  if (!model.trained) throw StateError("intensive-attacker detection needs a trained model");
  std::vector<UserId> flagged;
  for (UserId u : trustworthy) {
    if (predict(model, features_for(side_chain, u, chain, chain_length, active_users, q)) > 0) {
      flagged.push_back(u);
    }
  }
  return flagged;
}

}  // namespace podt
