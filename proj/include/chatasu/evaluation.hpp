#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chatasu/corpus.hpp"
#include "chatasu/parsing.hpp"

namespace chatasu::evaluation {

// An element projection of a quadruple, already reduced to span keys.
using Tuple = std::vector<std::string>;

struct MatchCounts {
  std::size_t n_correct = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;

  bool operator==(const MatchCounts&) const = default;
};

// Size of a maximum one-to-one exact matching between the two multisets,
// i.e. the multiset intersection size.
MatchCounts match_sets(std::span<const Tuple> gold, std::span<const Tuple> pred);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
};

// precision = correct/pred, recall = correct/gold, zero-guarded.
// Throws UsageError when n_correct exceeds either count.
PrfScore prf(std::size_t n_correct, std::size_t n_pred, std::size_t n_gold);
PrfScore prf(const MatchCounts& counts);

enum class Projection {
  kExplicit,
  kImplicit,
  kOpinion,
  kPolarity,  // (opinion, polarity)
  kExplicitOpinion,
  kExplicitImplicit,
  kImplicitOpinion,
  kQuadruple,
};

inline constexpr std::array<Projection, 8> kAllProjections = {
    Projection::kExplicit,         Projection::kImplicit,
    Projection::kOpinion,          Projection::kPolarity,
    Projection::kExplicitOpinion,  Projection::kExplicitImplicit,
    Projection::kImplicitOpinion,  Projection::kQuadruple};

std::string_view column_name(Projection projection);

// Absent implicit aspects project to the empty key, so every quadruple
// contributes exactly one item to every projection.
Tuple project(const parsing::QuadrupleFragment& quadruple, Projection projection);

struct EvalReport {
  std::array<PrfScore, 4> single;  // Explicit, Implicit, Opinion, Polarity
  std::array<PrfScore, 3> pair;    // E-O, E-I, I-O
  PrfScore quadruple;
  // Mean of the per-class (POS/NEU/NEG) F1 of the Polarity projection.
  double polarity_macro_f1 = 0.0;

  const PrfScore& cell(Projection projection) const;
  PrfScore& cell(Projection projection);
};

// Micro-pooled over the corpus. Gold dialogues without a prediction record
// count as predicting nothing; a prediction for an unknown dialogue throws
// DataError.
EvalReport evaluate(std::span<const corpus::Dialogue> gold,
                    std::span<const parsing::AsuPrediction> pred);

// Per-dialogue F1 for one projection, in gold order; used for paired tests.
// A dialogue where gold and prediction are both empty scores 1.
std::vector<double> per_dialogue_f1(std::span<const corpus::Dialogue> gold,
                                    std::span<const parsing::AsuPrediction> pred,
                                    Projection projection);

// Items are (dialogue, explicit, utterance, label) for non-zero labels.
// Chains missing from pred predict nothing; an unknown key throws DataError.
PrfScore evaluate_acr(std::span<const corpus::Dialogue> gold,
                      std::span<const parsing::AcrPrediction> pred);

nlohmann::json to_json(const PrfScore& score);
nlohmann::json to_json(const EvalReport& report);
std::string format_report_table(const EvalReport& report, std::string_view label = "Run");

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t degrees_of_freedom = 0;
  double mean_difference = 0.0;
  // Set when the differences have (numerically) zero variance; the
  // statistic is then 0 with p = 1 for a zero mean and infinite with p = 0
  // otherwise.
  bool degenerate = false;
};

// Paired two-sided Student t-test on a[i] - b[i].
TTestResult significance(std::span<const double> a, std::span<const double> b);

}  // namespace chatasu::evaluation
