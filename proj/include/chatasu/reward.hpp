#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "chatasu/corpus.hpp"

namespace chatasu::reward {

struct GenerationMeta {
  std::string backend;
  double latency_ms = 0.0;
};

// m candidate texts, best first, each with the n generation (beam-path)
// scores the backend reported for it.
struct GenerationResult {
  std::vector<std::string> outputs;
  std::vector<std::vector<double>> scores;
  GenerationMeta meta;

  // Throws DataError unless outputs is non-empty, there is one score list
  // per output and every list has at least two entries.
  void check() const;
};

struct RewardConfig {
  double alpha = 15.0;
  double beta = 5.0;
  double gamma = 3.0;
  double epsilon = 1e-6;           // clamp for normalized scores before logs
  double degenerate_value = 0.5;   // normalized score when all raw scores tie
  bool scale_by_output_count = true;  // the factor m inside the inner sum

  void check() const;
};

struct RewardBreakdown {
  double r_acr = 0.0;
  double r_asu = 0.0;
  double r_rp = 0.0;
  double r_ra = 0.0;
  std::size_t p = 0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  double recompute_total() const;
  bool consistent() const { return recompute_total() == total; }
};

// Min-max normalization onto [0, 1]. Spreads below 1e-12 map every entry to
// degenerate_value. Throws UsageError for fewer than two scores.
std::vector<double> normalize(std::span<const double> scores, double degenerate_value = 0.5);

// Entropy-style confidence reward over m normalized score lists:
//   R = -sum_j 1 / (sum_i m * g_ji * ln g_ji)
// with every g clamped into [epsilon, 1 - epsilon]; the factor m is dropped
// when config.scale_by_output_count is false. Strictly positive and finite.
double trusted_estimation(std::span<const std::vector<double>> normalized, const RewardConfig& config = {});

// Normalizes each output's raw scores, then applies trusted_estimation.
double trusted_estimation(const GenerationResult& generation, const RewardConfig& config = {});

// Outputs equal (after NFC and trim) to some earlier output.
std::size_t count_repetitions(std::span<const std::string> outputs);

// alpha*r_acr + beta*r_asu + gamma*(r_rp + r_ra)   when p == 0
// alpha*r_acr - beta*p     + gamma*(r_rp + r_ra)   otherwise
RewardBreakdown trusted_reflexion(double r_acr, double r_asu, double r_rp, double r_ra, std::size_t p,
                                  const RewardConfig& config = {});

// The ACR generation for one aspect chain of the gold dialogue.
struct AcrGeneration {
  std::string explicit_aspect;
  GenerationResult generation;
};

// Full reward for one dialogue. The top-ranked output of each generation is
// the prediction; parse failures count as empty predictions. r_acr and r_ra
// average over the dialogue's chains (0 without chains).
RewardBreakdown episode_reward(const GenerationResult& asu, std::span<const AcrGeneration> acr,
                               const corpus::Dialogue& gold, const RewardConfig& config = {});

nlohmann::json to_json(const RewardBreakdown& breakdown);

}  // namespace chatasu::reward
