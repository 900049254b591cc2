#include "chatasu/evaluation.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>

#include "chatasu/text.hpp"

namespace chatasu::evaluation {

MatchCounts match_sets(std::span<const Tuple> gold, std::span<const Tuple> pred) {
  std::map<Tuple, std::size_t> remaining;
  for (const auto& g : gold) ++remaining[g];
  std::size_t correct = 0;
  for (const auto& p : pred) {
    auto it = remaining.find(p);
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++correct;
    }
  }
  return {correct, pred.size(), gold.size()};
}

PrfScore prf(std::size_t n_correct, std::size_t n_pred, std::size_t n_gold) {
  if (n_correct > n_pred || n_correct > n_gold)
    throw UsageError(fmt::format("prf: n_correct {} exceeds n_pred {} or n_gold {}", n_correct, n_pred, n_gold));
  PrfScore s;
  s.n_correct = n_correct;
  s.n_pred = n_pred;
  s.n_gold = n_gold;
  s.precision = n_pred == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_pred);
  s.recall = n_gold == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_gold);
  s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

PrfScore prf(const MatchCounts& c) { return prf(c.n_correct, c.n_pred, c.n_gold); }

std::string_view column_name(Projection projection) {
  switch (projection) {
    case Projection::kExplicit: return "Explicit";
    case Projection::kImplicit: return "Implicit";
    case Projection::kOpinion: return "Opinion";
    case Projection::kPolarity: return "Polarity";
    case Projection::kExplicitOpinion: return "E-O";
    case Projection::kExplicitImplicit: return "E-I";
    case Projection::kImplicitOpinion: return "I-O";
    case Projection::kQuadruple: return "Quadruple";
  }
  return "?";
}

Tuple project(const parsing::QuadrupleFragment& q, Projection projection) {
  const std::string e = text::span_key(q.explicit_aspect);
  const std::string i = q.implicit_aspect ? text::span_key(*q.implicit_aspect) : std::string();
  const std::string o = text::span_key(q.opinion);
  const std::string p(corpus::to_string(q.polarity));
  switch (projection) {
    case Projection::kExplicit: return {e};
    case Projection::kImplicit: return {i};
    case Projection::kOpinion: return {o};
    case Projection::kPolarity: return {o, p};
    case Projection::kExplicitOpinion: return {e, o};
    case Projection::kExplicitImplicit: return {e, i};
    case Projection::kImplicitOpinion: return {i, o};
    case Projection::kQuadruple: return {e, i, o, p};
  }
  return {};
}

const PrfScore& EvalReport::cell(Projection projection) const {
  switch (projection) {
    case Projection::kExplicit: return single[0];
    case Projection::kImplicit: return single[1];
    case Projection::kOpinion: return single[2];
    case Projection::kPolarity: return single[3];
    case Projection::kExplicitOpinion: return pair[0];
    case Projection::kExplicitImplicit: return pair[1];
    case Projection::kImplicitOpinion: return pair[2];
    case Projection::kQuadruple: return quadruple;
  }
  return quadruple;
}

PrfScore& EvalReport::cell(Projection projection) {
  return const_cast<PrfScore&>(std::as_const(*this).cell(projection));
}

namespace {

std::unordered_map<std::string, const parsing::AsuPrediction*> index_predictions(
    std::span<const corpus::Dialogue> gold, std::span<const parsing::AsuPrediction> pred) {
  std::unordered_map<std::string, const parsing::AsuPrediction*> by_id;
  for (const auto& d : gold) by_id.emplace(d.id, nullptr);
  for (const auto& p : pred) {
    auto it = by_id.find(p.dialogue_id);
    if (it == by_id.end()) throw DataError(fmt::format("prediction for unknown dialogue_id '{}'", p.dialogue_id));
    if (it->second != nullptr)
      throw DataError(fmt::format("more than one prediction record for dialogue_id '{}'", p.dialogue_id));
    it->second = &p;
  }
  return by_id;
}

void append_items(std::vector<Tuple>& out, const std::string& dialogue_id,
                  std::span<const parsing::QuadrupleFragment> quads, Projection projection) {
  for (const auto& q : quads) {
    Tuple t = project(q, projection);
    t.insert(t.begin(), dialogue_id);
    out.push_back(std::move(t));
  }
}

std::vector<parsing::QuadrupleFragment> fragments_of(const corpus::Dialogue& d) {
  std::vector<parsing::QuadrupleFragment> out;
  out.reserve(d.quadruples.size());
  for (const auto& q : d.quadruples) out.push_back(parsing::to_fragment(q));
  return out;
}

}  // namespace

EvalReport evaluate(std::span<const corpus::Dialogue> gold, std::span<const parsing::AsuPrediction> pred) {
  const auto by_id = index_predictions(gold, pred);

  std::array<std::vector<Tuple>, kAllProjections.size()> gold_items, pred_items;
  for (const auto& d : gold) {
    const auto gold_quads = fragments_of(d);
    const parsing::AsuPrediction* p = by_id.at(d.id);
    for (std::size_t k = 0; k < kAllProjections.size(); ++k) {
      append_items(gold_items[k], d.id, gold_quads, kAllProjections[k]);
      if (p) append_items(pred_items[k], d.id, p->quadruples, kAllProjections[k]);
    }
  }

  EvalReport report;
  for (std::size_t k = 0; k < kAllProjections.size(); ++k) {
    const PrfScore score = prf(match_sets(gold_items[k], pred_items[k]));
    report.cell(kAllProjections[k]) = score;
  }

  // Per-class F1 over the (opinion, polarity) items.
  const std::size_t polarity_k = 3;
  double macro = 0.0;
  for (std::string_view cls : {"POS", "NEU", "NEG"}) {
    std::vector<Tuple> g, p;
    for (const auto& t : gold_items[polarity_k])
      if (t.back() == cls) g.push_back(t);
    for (const auto& t : pred_items[polarity_k])
      if (t.back() == cls) p.push_back(t);
    macro += prf(match_sets(g, p)).f1;
  }
  report.polarity_macro_f1 = macro / 3.0;
  return report;
}

std::vector<double> per_dialogue_f1(std::span<const corpus::Dialogue> gold,
                                    std::span<const parsing::AsuPrediction> pred, Projection projection) {
  const auto by_id = index_predictions(gold, pred);
  std::vector<double> out;
  out.reserve(gold.size());
  for (const auto& d : gold) {
    std::vector<Tuple> g, p;
    append_items(g, d.id, fragments_of(d), projection);
    if (const auto* pr = by_id.at(d.id)) append_items(p, d.id, pr->quadruples, projection);
    out.push_back(g.empty() && p.empty() ? 1.0 : prf(match_sets(g, p)).f1);
  }
  return out;
}

PrfScore evaluate_acr(std::span<const corpus::Dialogue> gold, std::span<const parsing::AcrPrediction> pred) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::size_t> known;
  std::vector<Tuple> gold_items, pred_items;
  auto append = [](std::vector<Tuple>& out, const Key& key, std::span<const int> labels) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != 0) out.push_back({key.first, key.second, std::to_string(i), std::to_string(labels[i])});
  };
  for (const auto& d : gold) {
    for (const auto& c : d.aspect_chains) {
      Key key{d.id, text::span_key(c.explicit_aspect)};
      known.emplace(key, 0);
      append(gold_items, key, c.labels);
    }
  }
  for (const auto& p : pred) {
    Key key{p.dialogue_id, text::span_key(p.explicit_aspect)};
    auto it = known.find(key);
    if (it == known.end())
      throw DataError(fmt::format("ACR prediction for unknown chain ('{}', '{}')", p.dialogue_id, p.explicit_aspect));
    if (++it->second > 1)
      throw DataError(fmt::format("duplicate ACR prediction for chain ('{}', '{}')", p.dialogue_id, p.explicit_aspect));
    append(pred_items, key, p.labels);
  }
  return prf(match_sets(gold_items, pred_items));
}

nlohmann::json to_json(const PrfScore& s) {
  return {{"precision", s.precision},
          {"recall", s.recall},
          {"f1", s.f1},
          {"n_correct", s.n_correct},
          {"n_pred", s.n_pred},
          {"n_gold", s.n_gold},
          // Alternative denominators as printed alongside the F1 reward: the
          // two ratios swap roles, the F1 is unchanged.
          {"precision_gold_denominator", s.recall},
          {"recall_pred_denominator", s.precision}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  for (Projection p : kAllProjections) {
    const char* group = p == Projection::kQuadruple ? "quadruple"
                        : (p == Projection::kExplicitOpinion || p == Projection::kExplicitImplicit ||
                           p == Projection::kImplicitOpinion)
                            ? "pair"
                            : "single";
    if (p == Projection::kQuadruple)
      j[group] = to_json(r.cell(p));
    else
      j[group][std::string(column_name(p))] = to_json(r.cell(p));
  }
  j["polarity_macro_f1"] = r.polarity_macro_f1;
  return j;
}

std::string format_report_table(const EvalReport& r, std::string_view label) {
  std::string out = fmt::format("{:<12}", "");
  out += fmt::format("{:^40}{:^30}{:>12}\n", "Single", "Pair", "Quadruple");
  out += fmt::format("{:<12}", "Approach");
  for (Projection p : kAllProjections) {
    if (p == Projection::kQuadruple)
      out += fmt::format("{:>12}", "Extraction");
    else
      out += fmt::format("{:>10}", column_name(p));
  }
  out += '\n';
  out += fmt::format("{:<12}", label);
  for (Projection p : kAllProjections) {
    const double f1 = 100.0 * r.cell(p).f1;
    out += p == Projection::kQuadruple ? fmt::format("{:>12.2f}", f1) : fmt::format("{:>10.2f}", f1);
  }
  out += '\n';
  return out;
}

}  // namespace chatasu::evaluation
