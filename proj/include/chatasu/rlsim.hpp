#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chatasu/corpus.hpp"
#include "chatasu/reward.hpp"

namespace chatasu::rlsim {

// N target token ids over a K-way vocabulary plus N predicted distributions.
struct TokenBatch {
  std::vector<std::size_t> gold;
  std::vector<std::vector<double>> predicted;

  // Throws UsageError on shape mismatch, N < 1, K < 2 or rows that do not
  // sum to 1 within 1e-9.
  void check() const;
};

// -sum_i ln(yhat[i][gold[i]]) with predictions clamped to [1e-12, 1].
double cross_entropy(const TokenBatch& batch);
// Extraction loss plus chain-labelling loss.
double combined_loss(const TokenBatch& asu, const TokenBatch& acr);

struct Candidate {
  std::string asu_text;
  std::vector<std::string> acr_texts;  // one per gold aspect chain
  bool correct = false;
  std::string kind;  // "correct", "wrong-polarity", "wrong-coreference", ...
};

struct Step {
  std::size_t action = 0;
  double reward = 0.0;
};

// One episode. Actions are drawn without replacement: at step t the policy
// is renormalized over the candidates not yet emitted, the way a beam
// returns distinct hypotheses. A single-step trajectory is the plain bandit.
struct Trajectory {
  std::vector<Step> steps;

  double total_reward() const;
};

struct ToyPolicy {
  std::vector<double> logits;
  std::vector<Candidate> candidates;

  static ToyPolicy uniform(std::vector<Candidate> candidates);
  // Anonymous candidates, for experiments that only need the logits.
  static ToyPolicy from_logits(std::vector<double> logits);

  void check() const;
  std::size_t size() const { return logits.size(); }
  std::vector<double> probabilities() const;
  // Softmax restricted to candidates not listed in `emitted`.
  std::vector<double> probabilities(std::span<const std::size_t> emitted) const;
  double log_probability(const Trajectory& trajectory) const;
  std::vector<double> log_probability_gradient(const Trajectory& trajectory) const;
};

using RewardFn = std::function<double(std::size_t)>;

inline constexpr std::size_t kMaxEnumerable = 64;

// Exact J = sum_a pi(a) R(a). Throws UsageError beyond kMaxEnumerable.
double expected_objective(const ToyPolicy& policy, const RewardFn& reward);
// Exact dJ/dlogit_a = pi(a) (R(a) - J).
std::vector<double> objective_gradient(const ToyPolicy& policy, const RewardFn& reward);

// REINFORCE: mean over trajectories of (R - b) * grad ln P(tau), with b the
// batch-mean return.
std::vector<double> reinforce_gradient(const ToyPolicy& policy, std::span<const Trajectory> batch);

struct UpdateOptions {
  double learning_rate = 0.1;
  // When set, PPO clipped-surrogate ascent for `epochs` passes against the
  // frozen incoming policy; otherwise a single REINFORCE step.
  std::optional<double> clip;
  int epochs = 4;
  // Rescales any step whose gradient norm exceeds this bound.
  std::optional<double> max_grad_norm;
};

ToyPolicy policy_gradient_step(const ToyPolicy& policy, std::span<const Trajectory> batch,
                               const UpdateOptions& options);

// Deterministic uniform double in [0, 1) from the top 53 bits.
double uniform01(std::mt19937_64& rng);

// Draws `length` distinct actions; rewards are left at zero.
Trajectory sample_trajectory(const ToyPolicy& policy, std::size_t length, std::mt19937_64& rng);

struct Scenario {
  std::string name = "faithful";
  corpus::Dialogue gold;
  std::vector<Candidate> candidates;
  std::size_t samples_per_episode = 3;  // m
  std::size_t scores_per_output = 3;    // n
  std::size_t episodes_per_step = 16;
  std::size_t steps = 2000;
  UpdateOptions update{0.05, std::nullopt, 4, 5.0};
  reward::RewardConfig reward;

  void check() const;
};

// Faithful scenario over the worked dialogue: one correct rendering, a
// wrong-polarity variant, a wrong-coreference variant, gibberish, and a
// beam that repeats the wrong-polarity text.
Scenario default_scenario();
// Every candidate carries the same (correct) text.
Scenario repetitive_scenario();

// TOML scenario document; see README for keys. Relative gold paths resolve
// against base_dir.
Scenario parse_scenario(std::string_view document, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

struct CurveRow {
  std::size_t step = 0;
  double expected_reward = 0.0;
  double p_correct = 0.0;        // probability the top output is a correct candidate
  double repetition_rate = 0.0;  // expected p / (m - 1)
};

// Per-step synthetic score list: the policy's top-n logits.
std::vector<double> synthetic_scores(const ToyPolicy& policy, std::size_t n);

// Runs the scenario from a uniform policy. Row k is measured after k updates
// (row 0 is the initial policy). Metrics are exact expectations whenever the
// ordered m-subsets can be enumerated, batch estimates otherwise.
std::vector<CurveRow> simulate(const Scenario& scenario, std::uint64_t seed);

std::string curve_csv(std::span<const CurveRow> rows);

}  // namespace chatasu::rlsim
