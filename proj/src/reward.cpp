#include "chatasu/reward.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "chatasu/evaluation.hpp"
#include "chatasu/parsing.hpp"
#include "chatasu/text.hpp"

namespace chatasu::reward {

void GenerationResult::check() const {
  if (outputs.empty()) throw DataError("generation has no outputs");
  if (scores.size() != outputs.size())
    throw DataError(fmt::format("generation has {} outputs but {} score lists", outputs.size(), scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i].size() < 2)
      throw DataError(fmt::format("output {} has {} scores; at least 2 are needed", i, scores[i].size()));
}

void RewardConfig::check() const {
  if (!(alpha > 0 && beta > 0 && gamma > 0)) throw UsageError("reward weights alpha, beta, gamma must be > 0");
  if (!(epsilon > 0 && epsilon < 0.5)) throw UsageError("reward epsilon must lie in (0, 0.5)");
  if (!(degenerate_value >= 0 && degenerate_value <= 1)) throw UsageError("degenerate_value must lie in [0, 1]");
}

double RewardBreakdown::recompute_total() const {
  if (p == 0) return alpha * r_acr + beta * r_asu + gamma * (r_rp + r_ra);
  return alpha * r_acr - beta * static_cast<double>(p) + gamma * (r_rp + r_ra);
}

std::vector<double> normalize(std::span<const double> scores, double degenerate_value) {
  if (scores.size() < 2) throw UsageError("normalize needs at least two scores");
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo, spread = *hi - *lo;
  std::vector<double> out(scores.size(), degenerate_value);
  if (!(spread < 1e-12))
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - min) / spread;
  return out;
}

double trusted_estimation(std::span<const std::vector<double>> normalized, const RewardConfig& config) {
  if (normalized.empty()) throw UsageError("trusted_estimation needs at least one score list");
  const double m = static_cast<double>(normalized.size());
  const double factor = config.scale_by_output_count ? m : 1.0;
  double reward = 0.0;
  for (const auto& set : normalized) {
    if (set.empty()) throw UsageError("trusted_estimation got an empty score list");
    double inner = 0.0;
    for (double g : set) {
      const double c = std::clamp(g, config.epsilon, 1.0 - config.epsilon);
      inner += factor * c * std::log(c);
    }
    reward -= 1.0 / inner;
  }
  return reward;
}

double trusted_estimation(const GenerationResult& generation, const RewardConfig& config) {
  generation.check();
  std::vector<std::vector<double>> sets;
  sets.reserve(generation.scores.size());
  for (const auto& s : generation.scores) sets.push_back(normalize(s, config.degenerate_value));
  return trusted_estimation(sets, config);
}

std::size_t count_repetitions(std::span<const std::string> outputs) {
  std::unordered_set<std::string> seen;
  std::size_t repeats = 0;
  for (const auto& o : outputs)
    if (!seen.insert(text::span_key(o)).second) ++repeats;
  return repeats;
}

RewardBreakdown trusted_reflexion(double r_acr, double r_asu, double r_rp, double r_ra, std::size_t p,
                                  const RewardConfig& config) {
  for (double v : {r_acr, r_asu, r_rp, r_ra})
    if (!std::isfinite(v)) throw UsageError("trusted_reflexion: reward terms must be finite");
  RewardBreakdown b{r_acr, r_asu, r_rp, r_ra, p, 0.0, config.alpha, config.beta, config.gamma};
  b.total = b.recompute_total();
  return b;
}

RewardBreakdown episode_reward(const GenerationResult& asu, std::span<const AcrGeneration> acr,
                               const corpus::Dialogue& gold, const RewardConfig& config) {
  config.check();
  const double r_asu = trusted_estimation(asu, config);

  const corpus::Dialogue gold_view{gold.id, {}, gold.quadruples, {}};
  const parsing::AsuPrediction asu_pred{gold.id, parsing::parse_asu_output(asu.outputs.front()).quadruples};
  const double r_rp = evaluation::per_dialogue_f1(std::span(&gold_view, 1), std::span(&asu_pred, 1),
                                                  evaluation::Projection::kQuadruple)
                          .front();

  double r_acr = 0.0, r_ra = 0.0;
  if (!acr.empty()) {
    for (const auto& chain_gen : acr) {
      r_acr += trusted_estimation(chain_gen.generation, config);

      const std::string key = text::span_key(chain_gen.explicit_aspect);
      const auto chain = std::find_if(gold.aspect_chains.begin(), gold.aspect_chains.end(),
                                      [&](const auto& c) { return text::span_key(c.explicit_aspect) == key; });
      if (chain == gold.aspect_chains.end())
        throw DataError(fmt::format("dialogue '{}' has no chain for \"{}\"", gold.id, chain_gen.explicit_aspect));

      corpus::Dialogue chain_gold{gold.id, {}, {}, {*chain}};
      auto parsed = parsing::parse_acr_output(chain_gen.generation.outputs.front(), chain->labels.size());
      std::vector<int> labels(chain->labels.size(), 0);
      if (auto* ok = std::get_if<parsing::ParsedAcr>(&parsed)) labels = ok->labels;
      const parsing::AcrPrediction pred{gold.id, chain->explicit_aspect, std::move(labels)};
      r_ra += evaluation::evaluate_acr(std::span(&chain_gold, 1), std::span(&pred, 1)).f1;
    }
    r_acr /= static_cast<double>(acr.size());
    r_ra /= static_cast<double>(acr.size());
  }

  return trusted_reflexion(r_acr, r_asu, r_rp, r_ra, count_repetitions(asu.outputs), config);
}

nlohmann::json to_json(const RewardBreakdown& b) {
  return {{"r_acr", b.r_acr}, {"r_asu", b.r_asu}, {"r_rp", b.r_rp}, {"r_ra", b.r_ra}, {"p", b.p},
          {"total", b.total}, {"alpha", b.alpha}, {"beta", b.beta}, {"gamma", b.gamma}};
}

}  // namespace chatasu::reward
