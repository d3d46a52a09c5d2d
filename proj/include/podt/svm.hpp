#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "podt/types.hpp"

namespace podt {

inline constexpr std::size_t kFeatureDim = 7;
using FeatureVector = std::array<double, kFeatureDim>;

inline double dot(const FeatureVector& a, const FeatureVector& b) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < kFeatureDim; ++k) s += a[k] * b[k];
  return s;
}

inline double norm(const FeatureVector& a) noexcept { return std::sqrt(dot(a, a)); }

struct LabeledSample {
  FeatureVector features{};
  int label = -1;  // +1 intensive attacker, -1 trusted
};

/// Per-feature affine map x -> (x - mean) / scale, fitted on training data.
struct FeatureScaler {
  FeatureVector mean{};
  FeatureVector scale = {1, 1, 1, 1, 1, 1, 1};

  static FeatureScaler identity() { return {}; }

  static FeatureScaler fit(std::span<const LabeledSample> samples) {
    FeatureScaler s;
    if (samples.empty()) return s;
    const double n = static_cast<double>(samples.size());
    for (const LabeledSample& x : samples)
      for (std::size_t k = 0; k < kFeatureDim; ++k) s.mean[k] += x.features[k] / n;
    FeatureVector var{};
    for (const LabeledSample& x : samples)
      for (std::size_t k = 0; k < kFeatureDim; ++k) {
        const double d = x.features[k] - s.mean[k];
        var[k] += d * d / n;
      }
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      const double sd = std::sqrt(var[k]);
      // constant feature: keep it centred, leave the unit alone
      s.scale[k] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[k])) ? sd : 1.0;
    }
    return s;
  }

  FeatureVector apply(const FeatureVector& x) const noexcept {
    FeatureVector out;
    for (std::size_t k = 0; k < kFeatureDim; ++k) out[k] = (x[k] - mean[k]) / scale[k];
    return out;
  }
};

/// Linear max-margin classifier. `psi` and `gamma` live in the scaled
/// feature space; raw inputs go through `scaler` first.
struct SvmModel {
  FeatureVector psi{};
  double gamma = 0.0;
  std::vector<double> mu;  // one multiplier per training sample
  FeatureScaler scaler;
  bool trained = false;
  bool soft_margin = false;
  double penalty = std::numeric_limits<double>::infinity();
  std::size_t sample_count = 0;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;

  static SvmModel from_weights(const FeatureVector& psi, double gamma,
                               FeatureScaler scaler = FeatureScaler::identity()) {
    SvmModel m;
    m.psi = psi;
    m.gamma = gamma;
    m.scaler = scaler;
    m.trained = true;
    return m;
  }

  double decision_value(const FeatureVector& raw) const {
    if (!trained) throw StateError("SVM model has not been trained");
    return dot(psi, scaler.apply(raw)) + gamma;
  }

  /// Full-width margin 2 / ||psi||.
  double margin_width() const { return 2.0 / norm(psi); }

  std::size_t support_vector_count(double eps = 1e-12) const {
    return static_cast<std::size_t>(
        std::count_if(mu.begin(), mu.end(), [eps](double m) { return m > eps; }));
  }
};

/// +1 (intensive attacker) iff the decision value is strictly positive; a
/// point exactly on the hyperplane is treated as trusted.
inline int predict(const SvmModel& model, const FeatureVector& raw) {
  return model.decision_value(raw) > 0.0 ? +1 : -1;
}

/// Point-to-hyperplane distance |psi.x + gamma| / ||psi||, in scaled space.
inline double margin_distance(const SvmModel& model, const FeatureVector& raw) {
  const double w = norm(model.psi);
  if (!(w > 0.0)) throw StateError("degenerate SVM model: zero weight vector");
  return std::abs(model.decision_value(raw)) / w;
}

struct TrainOptions {
  bool standardize = true;
  /// Stop once the maximal KKT violation of the dual drops below this.
  double tolerance = 1e-9;
  /// Box bound on the multipliers. Unset means hard margin.
  std::optional<double> penalty;
  /// 0 picks a size-dependent default.
  std::size_t max_iterations = 0;
};

namespace detail {

/// Phase-one simplex on the convex-hull intersection system
///   sum_r mu_r p_r x_r = 0,  sum_r mu_r p_r = 0,  sum_r mu_r = 1,  mu >= 0.
/// A feasible mu means the two classes' hulls meet, so no hyperplane
/// separates them. Returns the certificate when one exists.
inline std::optional<std::vector<double>> hull_intersection(
    std::span<const FeatureVector> x, std::span<const int> y) {
  const std::size_t n = x.size();
  constexpr std::size_t m = kFeatureDim + 2;
  const std::size_t cols = n + m + 1;  // structural, artificial, rhs
  const std::size_t rhs = n + m;
  std::vector<double> t((m + 1) * cols, 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return t[r * cols + c]; };

  for (std::size_t i = 0; i < n; ++i) {
    const double yi = static_cast<double>(y[i]);
    for (std::size_t k = 0; k < kFeatureDim; ++k) at(k, i) = yi * x[i][k];
    at(kFeatureDim, i) = yi;
    at(kFeatureDim + 1, i) = 1.0;
  }
  at(kFeatureDim + 1, rhs) = 1.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (at(r, rhs) < 0.0)
      for (std::size_t c = 0; c < cols; ++c) at(r, c) = -at(r, c);
    at(r, n + r) = 1.0;
  }
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) basis[r] = n + r;
  // objective row holds reduced costs of "minimise the sum of artificials"
  for (std::size_t c = 0; c < cols; ++c) {
    if (c >= n && c < n + m) continue;
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += at(r, c);
    at(m, c) = -s;
  }

  constexpr double eps = 1e-11;
  const std::size_t max_pivots = 50 * (n + m);
  for (std::size_t pivots = 0; pivots < max_pivots; ++pivots) {
    // Bland's rule: lowest-index improving column, lowest-index leaving row
    std::size_t enter = cols;
    for (std::size_t c = 0; c < rhs; ++c) {
      if (at(m, c) < -eps) {
        enter = c;
        break;
      }
    }
    if (enter == cols) break;
    std::size_t leave = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      if (at(r, enter) > eps) {
        const double ratio = at(r, rhs) / at(r, enter);
        if (ratio < best - eps || (ratio <= best + eps && leave < m && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave == m) break;  // unbounded cannot happen in phase one
    const double piv = at(leave, enter);
    for (std::size_t c = 0; c < cols; ++c) at(leave, c) /= piv;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave) continue;
      const double f = at(r, enter);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) at(r, c) -= f * at(leave, c);
    }
    basis[leave] = enter;
  }

  const double infeasibility = -at(m, rhs);
  if (infeasibility > 1e-9) return std::nullopt;
  std::vector<double> mu(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    if (basis[r] < n) mu[basis[r]] = std::max(0.0, at(r, rhs));
  return mu;
}

}  // namespace detail

/// Trains a linear SVM on the dual with pairwise (SMO) coordinate ascent and
/// second-order working-set selection.
///
/// Hard margin is the default: input whose classes cannot be separated is
/// rejected with a TrainingError naming one offending sample of each class.
inline SvmModel train(std::span<const LabeledSample> samples, const TrainOptions& opt = {}) {
  const std::size_t n = samples.size();
  if (n == 0) throw TrainingError("cannot train on an empty sample set");
  bool has_pos = false;
  bool has_neg = false;
  for (const LabeledSample& s : samples) {
    if (s.label != 1 && s.label != -1) throw TrainingError("labels must be +1 or -1");
    for (double v : s.features)
      if (!std::isfinite(v)) throw TrainingError("feature vector has a non-finite component");
    (s.label > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw TrainingError("training set contains a single class");

  SvmModel model;
  model.scaler = opt.standardize ? FeatureScaler::fit(samples) : FeatureScaler::identity();
  std::vector<FeatureVector> x(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = model.scaler.apply(samples[i].features);
    y[i] = samples[i].label;
  }

  const bool hard = !opt.penalty.has_value();
  const double C = hard ? std::numeric_limits<double>::infinity() : *opt.penalty;
  if (!hard && !(C > 0.0)) throw TrainingError("soft-margin penalty must be positive");

  if (hard) {
    if (auto cert = detail::hull_intersection(x, y)) {
      std::size_t pi = n, ni = n;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t& slot = y[i] > 0 ? pi : ni;
        if (slot == n || (*cert)[i] > (*cert)[slot]) slot = i;
      }
      throw TrainingError("training set is not linearly separable (hard margin infeasible); "
                          "violating pair: samples " + std::to_string(pi) + " (+1) and " +
                          std::to_string(ni) + " (-1)");
    }
  }

  std::vector<double> qd(n);
  for (std::size_t i = 0; i < n; ++i) qd[i] = dot(x[i], x[i]);
  std::vector<double> a(n, 0.0);
  std::vector<double> G(n, -1.0);  // gradient of 1/2 a'Qa - e'a
  auto is_upper = [&](std::size_t t) { return !hard && a[t] >= C; };
  auto is_lower = [&](std::size_t t) { return a[t] <= 0.0; };
  auto in_up = [&](std::size_t t) { return y[t] > 0 ? !is_upper(t) : !is_lower(t); };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? !is_lower(t) : !is_upper(t); };

  constexpr double tau = 1e-12;
  const std::size_t max_iter =
      opt.max_iterations ? opt.max_iterations : std::max<std::size_t>(1'000'000, 200 * n);
  std::size_t iter = 0;
  double gap = 0.0;
  std::vector<double> ki(n);
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * G[t] >= gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t)
      if (in_low(t)) gmin = std::min(gmin, -y[t] * G[t]);
    gap = gmax - gmin;
    if (i == n || gap < opt.tolerance) break;

    for (std::size_t t = 0; t < n; ++t) ki[t] = dot(x[i], x[t]);
    std::size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double b = gmax + y[t] * G[t];
      if (b <= 0.0) continue;
      double quad = qd[i] + qd[t] - 2.0 * ki[t];
      if (quad <= 0.0) quad = tau;
      const double obj = -(b * b) / quad;
      if (obj <= best) {
        best = obj;
        j = t;
      }
    }
    if (j == n) break;

    const double kij = ki[j];
    const double old_ai = a[i];
    const double old_aj = a[j];
    double quad = qd[i] + qd[j] - 2.0 * kij;
    if (quad <= 0.0) quad = tau;
    if (y[i] != y[j]) {
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) { a[j] = 0.0; a[i] = diff; }
      } else {
        if (a[i] < 0.0) { a[i] = 0.0; a[j] = -diff; }
      }
      if (!hard) {
        if (diff > 0.0) {
          if (a[i] > C) { a[i] = C; a[j] = C - diff; }
        } else {
          if (a[j] > C) { a[j] = C; a[i] = C + diff; }
        }
      }
    } else {
      const double delta = (G[i] - G[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (!hard && sum > C) {
        if (a[i] > C) { a[i] = C; a[j] = sum - C; }
        if (a[j] > C) { a[j] = C; a[i] = sum - C; }
      }
      if (a[j] < 0.0) { a[j] = 0.0; a[i] = sum; }
      if (a[i] < 0.0) { a[i] = 0.0; a[j] = sum; }
    }

    const double dai = a[i] - old_ai;
    const double daj = a[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) {
      G[t] += y[t] * (y[i] * ki[t] * dai + y[j] * dot(x[j], x[t]) * daj);
    }
  }
  if (iter >= max_iter) {
    throw TrainingError("SMO did not converge within " + std::to_string(max_iter) +
                        " iterations (KKT gap " + std::to_string(gap) + ")");
  }

  FeatureVector psi{};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < kFeatureDim; ++k) psi[k] += a[r] * y[r] * x[r][k];

  // bias from free multipliers; otherwise the midpoint of the feasible range
  double sum_free = 0.0;
  std::size_t free_count = 0;
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (a[t] > 0.0 && (hard || a[t] < C)) {
      sum_free += yg;
      ++free_count;
    } else if (is_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    }
  }
  double r = 0.0;
  if (free_count > 0) r = sum_free / static_cast<double>(free_count);
  else if (std::isfinite(ub) && std::isfinite(lb)) r = (ub + lb) / 2.0;
  else if (std::isfinite(ub)) r = ub;
  else if (std::isfinite(lb)) r = lb;

  model.psi = psi;
  model.gamma = -r;
  model.mu = std::move(a);
  model.trained = true;
  model.soft_margin = !hard;
  model.penalty = C;
  model.sample_count = n;
  model.iterations = iter;
  model.kkt_residual = std::max(0.0, gap);
  return model;
}

struct TrainResult {
  SvmModel model;
  bool used_fallback = false;
  std::string fallback_reason;
};

/// Hard margin first; if the data turns out non-separable (or the solver
/// stalls), retrain with a soft margin of the given penalty.
inline TrainResult train_with_fallback(std::span<const LabeledSample> samples,
                                       TrainOptions opt, double fallback_penalty = 1.0) {
  TrainResult res;
  if (!opt.penalty) {
    try {
      res.model = train(samples, opt);
      return res;
    } catch (const TrainingError& e) {
      const std::string what = e.what();
      if (what.find("single class") != std::string::npos ||
          what.find("empty") != std::string::npos) {
        throw;
      }
      res.used_fallback = true;
      res.fallback_reason = what;
    }
  }
  opt.penalty = fallback_penalty;
  opt.max_iterations = 0;
  res.model = train(samples, opt);
  return res;
}

inline nlohmann::ordered_json to_json(const SvmModel& m) {
  nlohmann::ordered_json j;
  j["psi"] = m.psi;
  j["gamma"] = m.gamma;
  j["scaler"] = {{"mean", m.scaler.mean}, {"scale", m.scaler.scale}};
  nlohmann::ordered_json meta;
  meta["sample_count"] = m.sample_count;
  meta["support_vectors"] = m.support_vector_count();
  meta["iterations"] = m.iterations;
  meta["kkt_residual"] = m.kkt_residual;
  meta["soft_margin"] = m.soft_margin;
  if (m.soft_margin) meta["penalty"] = m.penalty; else meta["penalty"] = nullptr;
  j["metadata"] = meta;
  return j;
}

inline SvmModel svm_model_from_json(const nlohmann::json& j) {
  try {
    SvmModel m;
    m.psi = j.at("psi").get<FeatureVector>();
    m.gamma = j.at("gamma").get<double>();
    m.scaler.mean = j.at("scaler").at("mean").get<FeatureVector>();
    m.scaler.scale = j.at("scaler").at("scale").get<FeatureVector>();
    if (j.contains("metadata")) {
      const auto& meta = j["metadata"];
      m.sample_count = meta.value("sample_count", std::size_t{0});
      m.iterations = meta.value("iterations", std::size_t{0});
      m.kkt_residual = meta.value("kkt_residual", 0.0);
      m.soft_margin = meta.value("soft_margin", false);
      if (meta.contains("penalty") && meta["penalty"].is_number())
        m.penalty = meta["penalty"].get<double>();
    }
    for (double s : m.scaler.scale)
      if (!(s > 0.0)) throw FormatError("scaler scale entries must be positive");
    m.trained = true;
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed SVM model document: ") + e.what());
  }
}

}  // namespace podt
