#include "chatasu/rlsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "chatasu/error.hpp"

namespace chatasu::rlsim {

void TokenBatch::check() const {
  if (gold.empty()) throw UsageError("token batch: need at least one token");
  if (gold.size() != predicted.size())
    throw UsageError(fmt::format("token batch: {} gold ids but {} predicted rows", gold.size(), predicted.size()));
  const std::size_t k = predicted.front().size();
  if (k < 2) throw UsageError("token batch: vocabulary size must be at least 2");
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& row = predicted[i];
    if (row.size() != k) throw UsageError(fmt::format("token batch: row {} has {} entries, expected {}", i, row.size(), k));
    if (gold[i] >= k) throw UsageError(fmt::format("token batch: gold id {} out of range at row {}", gold[i], i));
    double sum = 0.0;
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) throw UsageError(fmt::format("token batch: row {} is not a distribution", i));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw UsageError(fmt::format("token batch: row {} sums to {} instead of 1", i, sum));
  }
}

double cross_entropy(const TokenBatch& batch) {
  batch.check();
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.gold.size(); ++i)
    loss -= std::log(std::clamp(batch.predicted[i][batch.gold[i]], 1e-12, 1.0));
  return loss;
}

double combined_loss(const TokenBatch& asu, const TokenBatch& acr) { return cross_entropy(asu) + cross_entropy(acr); }

double Trajectory::total_reward() const {
  double total = 0.0;
  for (const auto& s : steps) total += s.reward;
  return total;
}

ToyPolicy ToyPolicy::uniform(std::vector<Candidate> candidates) {
  ToyPolicy p;
  p.logits.assign(candidates.size(), 0.0);
  p.candidates = std::move(candidates);
  return p;
}

ToyPolicy ToyPolicy::from_logits(std::vector<double> logits) {
  ToyPolicy p;
  p.candidates.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p.candidates[i].kind = fmt::format("arm-{}", i);
  p.logits = std::move(logits);
  return p;
}

void ToyPolicy::check() const {
  if (logits.size() < 2) throw UsageError("policy: need at least two candidates");
  if (logits.size() != candidates.size())
    throw UsageError(fmt::format("policy: {} logits for {} candidates", logits.size(), candidates.size()));
  for (double l : logits)
    if (!std::isfinite(l)) throw UsageError("policy: non-finite logit");
}

namespace {

// Softmax over the entries with mask[i] == false.
std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool>& mask) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!mask[i]) top = std::max(top, logits[i]);
  std::vector<double> p(logits.size(), 0.0);
  if (!std::isfinite(top)) return p;
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!mask[i]) z += p[i] = std::exp(logits[i] - top);
  for (double& v : p) v /= z;
  return p;
}

std::vector<bool> emitted_mask(std::size_t k, std::span<const std::size_t> emitted) {
  std::vector<bool> mask(k, false);
  for (std::size_t a : emitted) {
    if (a >= k) throw UsageError(fmt::format("policy: action {} out of range", a));
    mask[a] = true;
  }
  return mask;
}

void check_trajectory(const ToyPolicy& policy, const Trajectory& t) {
  if (t.steps.empty()) throw UsageError("trajectory: no steps");
  if (t.steps.size() > policy.size()) throw UsageError("trajectory: more steps than candidates");
  std::vector<bool> seen(policy.size(), false);
  for (const auto& s : t.steps) {
    if (s.action >= policy.size()) throw UsageError(fmt::format("trajectory: action {} out of range", s.action));
    if (seen[s.action]) throw UsageError(fmt::format("trajectory: action {} repeated", s.action));
    seen[s.action] = true;
  }
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_finite(std::span<const double> g) {
  for (double x : g)
    if (!std::isfinite(x)) throw UsageError("policy gradient: non-finite component");
}

std::vector<double> advantages(std::span<const Trajectory> batch) {
  std::vector<double> r;
  r.reserve(batch.size());
  for (const auto& t : batch) r.push_back(t.total_reward());
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  if (*lo == *hi) return std::vector<double>(r.size(), 0.0);
  const double baseline = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  for (double& v : r) v -= baseline;
  return r;
}

}  // namespace

std::vector<double> ToyPolicy::probabilities() const { return probabilities(std::span<const std::size_t>{}); }

std::vector<double> ToyPolicy::probabilities(std::span<const std::size_t> emitted) const {
  check();
  return masked_softmax(logits, emitted_mask(size(), emitted));
}

double ToyPolicy::log_probability(const Trajectory& trajectory) const {
  check();
  check_trajectory(*this, trajectory);
  std::vector<bool> mask(size(), false);
  double lp = 0.0;
  for (const auto& s : trajectory.steps) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i)
      if (!mask[i]) top = std::max(top, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      if (!mask[i]) z += std::exp(logits[i] - top);
    lp += logits[s.action] - top - std::log(z);
    mask[s.action] = true;
  }
  return lp;
}

std::vector<double> ToyPolicy::log_probability_gradient(const Trajectory& trajectory) const {
  check();
  check_trajectory(*this, trajectory);
  std::vector<bool> mask(size(), false);
  std::vector<double> g(size(), 0.0);
  for (const auto& s : trajectory.steps) {
    const auto pi = masked_softmax(logits, mask);
    for (std::size_t i = 0; i < size(); ++i) g[i] -= pi[i];
    g[s.action] += 1.0;
    mask[s.action] = true;
  }
  return g;
}

double expected_objective(const ToyPolicy& policy, const RewardFn& reward) {
  if (policy.size() > kMaxEnumerable)
    throw UsageError(fmt::format("expected objective: {} candidates exceed the enumeration limit {}", policy.size(),
                                 kMaxEnumerable));
  const auto pi = policy.probabilities();
  double j = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) j += pi[a] * reward(a);
  return j;
}

std::vector<double> objective_gradient(const ToyPolicy& policy, const RewardFn& reward) {
  if (policy.size() > kMaxEnumerable)
    throw UsageError(fmt::format("objective gradient: {} candidates exceed the enumeration limit {}", policy.size(),
                                 kMaxEnumerable));
  const auto pi = policy.probabilities();
  std::vector<double> r(pi.size());
  double j = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) j += pi[a] * (r[a] = reward(a));
  std::vector<double> g(pi.size());
  for (std::size_t a = 0; a < pi.size(); ++a) g[a] = pi[a] * (r[a] - j);
  return g;
}

std::vector<double> reinforce_gradient(const ToyPolicy& policy, std::span<const Trajectory> batch) {
  if (batch.empty()) throw UsageError("policy gradient: empty batch");
  const auto adv = advantages(batch);
  std::vector<double> g(policy.size(), 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (adv[b] == 0.0) {
      check_trajectory(policy, batch[b]);
      continue;
    }
    const auto grad = policy.log_probability_gradient(batch[b]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += adv[b] * grad[i];
  }
  for (double& v : g) v /= static_cast<double>(batch.size());
  require_finite(g);
  return g;
}

namespace {

void apply(ToyPolicy& policy, std::vector<double> g, const UpdateOptions& options) {
  require_finite(g);
  if (options.max_grad_norm) {
    const double n = norm(g);
    if (n > *options.max_grad_norm)
      for (double& v : g) v *= *options.max_grad_norm / n;
  }
  for (std::size_t i = 0; i < g.size(); ++i) policy.logits[i] += options.learning_rate * g[i];
}

// Gradient of mean_tau min(rho A, clip(rho, 1-c, 1+c) A).
std::vector<double> clipped_surrogate_gradient(const ToyPolicy& current, std::span<const Trajectory> batch,
                                               std::span<const double> old_log_prob, std::span<const double> adv,
                                               double clip) {
  std::vector<double> g(current.size(), 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (adv[b] == 0.0) continue;
    const double rho = std::exp(current.log_probability(batch[b]) - old_log_prob[b]);
    if ((adv[b] > 0.0 && rho > 1.0 + clip) || (adv[b] < 0.0 && rho < 1.0 - clip)) continue;
    const auto grad = current.log_probability_gradient(batch[b]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += adv[b] * rho * grad[i];
  }
  for (double& v : g) v /= static_cast<double>(batch.size());
  return g;
}

}  // namespace

ToyPolicy policy_gradient_step(const ToyPolicy& policy, std::span<const Trajectory> batch,
                               const UpdateOptions& options) {
  policy.check();
  if (!(options.learning_rate > 0.0) || !std::isfinite(options.learning_rate))
    throw UsageError("policy update: learning rate must be positive");
  ToyPolicy next = policy;
  if (!options.clip) {
    apply(next, reinforce_gradient(policy, batch), options);
    return next;
  }
  if (!(*options.clip > 0.0)) throw UsageError("policy update: clip must be positive");
  if (options.epochs < 1) throw UsageError("policy update: epochs must be at least 1");
  if (batch.empty()) throw UsageError("policy gradient: empty batch");
  const auto adv = advantages(batch);
  std::vector<double> old_lp;
  old_lp.reserve(batch.size());
  for (const auto& t : batch) old_lp.push_back(policy.log_probability(t));
  for (int e = 0; e < options.epochs; ++e)
    apply(next, clipped_surrogate_gradient(next, batch, old_lp, adv, *options.clip), options);
  return next;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Trajectory sample_trajectory(const ToyPolicy& policy, std::size_t length, std::mt19937_64& rng) {
  policy.check();
  if (length < 1 || length > policy.size())
    throw UsageError(fmt::format("trajectory length {} outside [1, {}]", length, policy.size()));
  Trajectory t;
  std::vector<bool> mask(policy.size(), false);
  for (std::size_t s = 0; s < length; ++s) {
    const auto pi = masked_softmax(policy.logits, mask);
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = policy.size();
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (mask[i]) continue;
      pick = i;  // last unmasked entry absorbs rounding
      acc += pi[i];
      if (u < acc) break;
    }
    mask[pick] = true;
    t.steps.push_back({pick, 0.0});
  }
  return t;
}

}  // namespace chatasu::rlsim
