#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <toml.hpp>

#include "chatasu/error.hpp"
#include "chatasu/evaluation.hpp"
#include "chatasu/io.hpp"
#include "chatasu/parsing.hpp"
#include "chatasu/rlsim.hpp"
#include "chatasu/text.hpp"

namespace chatasu::rlsim {

namespace {

constexpr std::size_t kMaxSequences = 20000;
constexpr std::size_t kEvaluationBatch = 512;

std::string acr_text(std::vector<int> labels) { return parsing::render_acr_output(labels); }

std::vector<std::string> gold_acr_texts(const corpus::Dialogue& gold) {
  std::vector<std::string> out;
  for (const auto& c : gold.aspect_chains) out.push_back(acr_text(c.labels));
  return out;
}

// A candidate is correct when its top-output reading reproduces the gold
// quadruples and every chain labelling exactly.
bool reproduces_gold(const Candidate& c, const corpus::Dialogue& gold) {
  parsing::AsuPrediction pred{gold.id, parsing::parse_asu_output(c.asu_text).quadruples};
  const corpus::Dialogue* g = &gold;
  if (evaluation::per_dialogue_f1({g, 1}, {&pred, 1}, evaluation::Projection::kQuadruple).front() != 1.0)
    return false;
  for (std::size_t i = 0; i < gold.aspect_chains.size(); ++i) {
    if (i >= c.acr_texts.size()) return false;
    auto parsed = parsing::parse_acr_output(c.acr_texts[i], gold.utterances.size());
    const auto* ok = std::get_if<parsing::ParsedAcr>(&parsed);
    if (!ok || ok->labels != gold.aspect_chains[i].labels) return false;
  }
  return true;
}

bool all_texts_identical(const std::vector<Candidate>& candidates) {
  for (const auto& c : candidates)
    if (text::span_key(c.asu_text) != text::span_key(candidates.front().asu_text)) return false;
  return true;
}

}  // namespace

void Scenario::check() const {
  reward.check();
  if (candidates.size() < 2) throw UsageError("scenario: need at least two candidates");
  if (const auto v = corpus::validate(gold); !v.empty())
    throw UsageError(fmt::format("scenario: gold dialogue '{}': {}: {}", gold.id, v.front().rule, v.front().detail));
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].acr_texts.size() != gold.aspect_chains.size())
      throw UsageError(fmt::format("scenario: candidate {} has {} ACR texts for {} aspect chains", i,
                                   candidates[i].acr_texts.size(), gold.aspect_chains.size()));
  if (samples_per_episode < 1 || samples_per_episode > candidates.size())
    throw UsageError(fmt::format("scenario: samples_per_episode must lie in [1, {}]", candidates.size()));
  if (scores_per_output < 2 || scores_per_output > candidates.size())
    throw UsageError(fmt::format("scenario: scores_per_output must lie in [2, {}]", candidates.size()));
  if (episodes_per_step < 1) throw UsageError("scenario: episodes_per_step must be at least 1");
  if (std::none_of(candidates.begin(), candidates.end(), [](const Candidate& c) { return c.correct; }))
    throw UsageError("scenario: no candidate is marked correct");
  // A scenario whose beams all carry one text has nothing to contrast.
  if (!all_texts_identical(candidates)) {
    for (std::string_view kind : {"wrong-polarity", "wrong-coreference"})
      if (std::none_of(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.kind == kind; }))
        throw UsageError(fmt::format("scenario: no candidate of kind '{}'", kind));
  }
}

Scenario default_scenario() {
  Scenario s;
  s.name = "faithful";
  s.gold = corpus::worked_example();
  const auto& q = s.gold.quadruples;
  const auto gold_acr = gold_acr_texts(s.gold);

  auto wrong_polarity = q;
  wrong_polarity[0].polarity = corpus::Polarity::kPositive;

  auto wrong_coref = q;
  wrong_coref[0].explicit_aspect = "Zhang Zhongwei";
  const std::vector<std::string> wrong_coref_acr = {acr_text({0, 0, 2, 0, 0}), acr_text({0, 0, 2, 0, 2})};

  const std::string wp_text = parsing::render_asu_output(wrong_polarity);
  s.candidates = {
      {parsing::render_asu_output(q), gold_acr, true, "correct"},
      {wp_text, gold_acr, false, "wrong-polarity"},
      {parsing::render_asu_output(wrong_coref), wrong_coref_acr, false, "wrong-coreference"},
      {"movie movie good good the the reputation", {"I cannot tell.", "I cannot tell."}, false, "gibberish"},
      {wp_text + "  ", gold_acr, false, "repeat"},
  };
  return s;
}

Scenario repetitive_scenario() {
  Scenario s = default_scenario();
  s.name = "repetitive";
  const Candidate correct = s.candidates.front();
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    s.candidates[i] = correct;
    s.candidates[i].kind = "repeat";
  }
  s.candidates.front().kind = "correct";
  return s;
}

namespace {

template <typename T>
T required_value(const toml::node_view<const toml::node>& node, const std::string& key) {
  auto v = node.value<T>();
  if (!v) throw DataError(fmt::format("scenario: key '{}' has the wrong type", key));
  return *v;
}

std::size_t count_value(const toml::table& t, const char* key, std::size_t fallback) {
  const auto node = t[key];
  if (!node) return fallback;
  const auto v = required_value<std::int64_t>(node, key);
  if (v < 0) throw DataError(fmt::format("scenario: key '{}' must be non-negative", key));
  return static_cast<std::size_t>(v);
}

double real_value(const toml::table& t, const char* key, double fallback) {
  const auto node = t[key];
  if (!node) return fallback;
  if (auto i = node.value_exact<std::int64_t>()) return static_cast<double>(*i);
  return required_value<double>(node, key);
}

}  // namespace

Scenario parse_scenario(std::string_view document, const std::filesystem::path& base_dir) {
  toml::table t;
  try {
    t = toml::parse(document);
  } catch (const toml::parse_error& e) {
    throw DataError(fmt::format("scenario: {}", e.description()));
  }

  const std::string base = t["base"].value<std::string>().value_or("faithful");
  Scenario s;
  if (base == "faithful")
    s = default_scenario();
  else if (base == "repetitive")
    s = repetitive_scenario();
  else
    throw DataError(fmt::format("scenario: unknown base '{}' (expected faithful or repetitive)", base));

  s.name = t["name"].value<std::string>().value_or(base);
  s.samples_per_episode = count_value(t, "samples_per_episode", s.samples_per_episode);
  s.scores_per_output = count_value(t, "scores_per_output", s.scores_per_output);
  s.episodes_per_step = count_value(t, "episodes_per_step", s.episodes_per_step);
  s.steps = count_value(t, "steps", s.steps);

  if (const auto* u = t["update"].as_table()) {
    s.update.learning_rate = real_value(*u, "learning_rate", s.update.learning_rate);
    if ((*u)["clip"]) s.update.clip = real_value(*u, "clip", 0.2);
    s.update.epochs = static_cast<int>(count_value(*u, "epochs", static_cast<std::size_t>(s.update.epochs)));
    if ((*u)["max_grad_norm"]) {
      const double m = real_value(*u, "max_grad_norm", 0.0);
      s.update.max_grad_norm = m > 0.0 ? std::optional<double>(m) : std::nullopt;
    }
  }
  if (const auto* r = t["reward"].as_table()) {
    s.reward.alpha = real_value(*r, "alpha", s.reward.alpha);
    s.reward.beta = real_value(*r, "beta", s.reward.beta);
    s.reward.gamma = real_value(*r, "gamma", s.reward.gamma);
    s.reward.epsilon = real_value(*r, "epsilon", s.reward.epsilon);
    s.reward.scale_by_output_count =
        (*r)["scale_by_output_count"].value<bool>().value_or(s.reward.scale_by_output_count);
  }

  bool gold_replaced = false;
  if (const auto* g = t["gold"].as_table()) {
    auto path = (*g)["path"].value<std::string>();
    auto id = (*g)["dialogue_id"].value<std::string>();
    if (!path || !id) throw DataError("scenario: [gold] needs string keys 'path' and 'dialogue_id'");
    std::filesystem::path p(*path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    const auto dialogues = corpus::load_dataset(p);
    auto it = std::find_if(dialogues.begin(), dialogues.end(), [&](const auto& d) { return d.id == *id; });
    if (it == dialogues.end()) throw DataError(fmt::format("scenario: dialogue '{}' not found in {}", *id, p.string()));
    s.gold = *it;
    gold_replaced = true;
  }

  if (const auto* cands = t["candidate"].as_array()) {
    s.candidates.clear();
    for (std::size_t i = 0; i < cands->size(); ++i) {
      const auto* c = (*cands)[i].as_table();
      if (!c) throw DataError(fmt::format("scenario: candidate {} is not a table", i));
      Candidate cand;
      auto asu = (*c)["asu"].value<std::string>();
      if (!asu) throw DataError(fmt::format("scenario: candidate {} needs a string key 'asu'", i));
      cand.asu_text = *asu;
      if (const auto* acr = (*c)["acr"].as_array()) {
        for (const auto& e : *acr) {
          auto v = e.value<std::string>();
          if (!v) throw DataError(fmt::format("scenario: candidate {}: 'acr' entries must be strings", i));
          cand.acr_texts.push_back(*v);
        }
      } else {
        cand.acr_texts = gold_acr_texts(s.gold);
      }
      cand.kind = (*c)["kind"].value<std::string>().value_or("other");
      cand.correct = (*c)["correct"].value<bool>().value_or(reproduces_gold(cand, s.gold));
      s.candidates.push_back(std::move(cand));
    }
  } else if (gold_replaced) {
    throw DataError("scenario: a custom [gold] dialogue needs its own [[candidate]] list");
  }

  s.check();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(io::read_file(path), path.parent_path());
}

std::vector<double> synthetic_scores(const ToyPolicy& policy, std::size_t n) {
  if (n > policy.size()) throw UsageError("synthetic scores: n exceeds the number of candidates");
  std::vector<double> l = policy.logits;
  std::partial_sort(l.begin(), l.begin() + static_cast<std::ptrdiff_t>(n), l.end(), std::greater<>());
  l.resize(n);
  return l;
}

namespace {

struct Episode {
  reward::GenerationResult asu;
  std::vector<reward::AcrGeneration> acr;
};

Episode build_episode(const Scenario& s, std::span<const std::size_t> actions, const std::vector<double>& scores) {
  Episode e;
  e.asu.meta.backend = "simulation";
  for (std::size_t a : actions) {
    e.asu.outputs.push_back(s.candidates[a].asu_text);
    e.asu.scores.push_back(scores);
  }
  for (std::size_t c = 0; c < s.gold.aspect_chains.size(); ++c) {
    reward::AcrGeneration g{s.gold.aspect_chains[c].explicit_aspect, {}};
    g.generation.meta.backend = "simulation";
    for (std::size_t a : actions) {
      g.generation.outputs.push_back(s.candidates[a].acr_texts[c]);
      g.generation.scores.push_back(scores);
    }
    e.acr.push_back(std::move(g));
  }
  return e;
}

// Ordered m-subsets with the parts of the reward that do not move with the
// policy.
struct Sequence {
  std::vector<std::size_t> actions;
  double r_rp = 0.0;
  double r_ra = 0.0;
  std::size_t p = 0;
};

void enumerate(std::size_t k, std::size_t m, std::vector<std::size_t>& prefix, std::vector<bool>& used,
               std::vector<std::vector<std::size_t>>& out) {
  if (prefix.size() == m) {
    out.push_back(prefix);
    return;
  }
  for (std::size_t a = 0; a < k; ++a) {
    if (used[a]) continue;
    used[a] = true;
    prefix.push_back(a);
    enumerate(k, m, prefix, used, out);
    prefix.pop_back();
    used[a] = false;
  }
}

std::size_t sequence_count(std::size_t k, std::size_t m) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < m; ++i) {
    n *= k - i;
    if (n > kMaxSequences) return n;
  }
  return n;
}

class Evaluator {
 public:
  explicit Evaluator(const Scenario& s) : s_(s) {
    const std::size_t k = s.candidates.size(), m = s.samples_per_episode;
    if (sequence_count(k, m) > kMaxSequences) return;
    std::vector<std::vector<std::size_t>> all;
    std::vector<std::size_t> prefix;
    std::vector<bool> used(k, false);
    enumerate(k, m, prefix, used, all);
    const std::vector<double> flat(s.scores_per_output, 0.0);
    for (auto& actions : all) {
      const Episode e = build_episode(s, actions, flat);
      const auto b = reward::episode_reward(e.asu, e.acr, s.gold, s.reward);
      sequences_.push_back({std::move(actions), b.r_rp, b.r_ra, b.p});
    }
  }

  CurveRow measure(const ToyPolicy& policy, std::size_t step, std::mt19937_64& eval_rng) const {
    CurveRow row;
    row.step = step;
    const auto pi = policy.probabilities();
    for (std::size_t a = 0; a < pi.size(); ++a)
      if (s_.candidates[a].correct) row.p_correct += pi[a];
    const double denom = s_.samples_per_episode > 1 ? static_cast<double>(s_.samples_per_episode - 1) : 1.0;

    const auto scores = synthetic_scores(policy, s_.scores_per_output);
    if (!sequences_.empty()) {
      const Episode probe = build_episode(s_, sequences_.front().actions, scores);
      const double r_asu = reward::trusted_estimation(probe.asu, s_.reward);
      double r_acr = 0.0;
      for (const auto& g : probe.acr) r_acr += reward::trusted_estimation(g.generation, s_.reward);
      if (!probe.acr.empty()) r_acr /= static_cast<double>(probe.acr.size());
      for (const auto& seq : sequences_) {
        Trajectory t;
        for (std::size_t a : seq.actions) t.steps.push_back({a, 0.0});
        const double prob = std::exp(policy.log_probability(t));
        const auto b = reward::trusted_reflexion(r_acr, r_asu, seq.r_rp, seq.r_ra, seq.p, s_.reward);
        row.expected_reward += prob * b.total;
        row.repetition_rate += prob * static_cast<double>(seq.p) / denom;
      }
      if (s_.samples_per_episode == 1) row.repetition_rate = 0.0;
      return row;
    }
    for (std::size_t i = 0; i < kEvaluationBatch; ++i) {
      const Trajectory t = sample_trajectory(policy, s_.samples_per_episode, eval_rng);
      std::vector<std::size_t> actions;
      for (const auto& st : t.steps) actions.push_back(st.action);
      const Episode e = build_episode(s_, actions, scores);
      const auto b = reward::episode_reward(e.asu, e.acr, s_.gold, s_.reward);
      row.expected_reward += b.total;
      if (s_.samples_per_episode > 1) row.repetition_rate += static_cast<double>(b.p) / denom;
    }
    row.expected_reward /= static_cast<double>(kEvaluationBatch);
    row.repetition_rate /= static_cast<double>(kEvaluationBatch);
    return row;
  }

 private:
  const Scenario& s_;
  std::vector<Sequence> sequences_;
};

}  // namespace

std::vector<CurveRow> simulate(const Scenario& scenario, std::uint64_t seed) {
  scenario.check();
  std::mt19937_64 rng(seed);
  std::mt19937_64 eval_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  ToyPolicy policy = ToyPolicy::uniform(scenario.candidates);
  const Evaluator evaluator(scenario);

  std::vector<CurveRow> rows;
  rows.reserve(scenario.steps + 1);
  rows.push_back(evaluator.measure(policy, 0, eval_rng));
  std::vector<Trajectory> batch(scenario.episodes_per_step);
  for (std::size_t step = 1; step <= scenario.steps; ++step) {
    const auto scores = synthetic_scores(policy, scenario.scores_per_output);
    for (auto& t : batch) {
      t = sample_trajectory(policy, scenario.samples_per_episode, rng);
      std::vector<std::size_t> actions;
      for (const auto& st : t.steps) actions.push_back(st.action);
      const Episode e = build_episode(scenario, actions, scores);
      t.steps.back().reward = reward::episode_reward(e.asu, e.acr, scenario.gold, scenario.reward).total;
    }
    policy = policy_gradient_step(policy, batch, scenario.update);
    rows.push_back(evaluator.measure(policy, step, eval_rng));
  }
  return rows;
}

std::string curve_csv(std::span<const CurveRow> rows) {
  std::string out = "step,expected_reward,p_correct,repetition_rate\n";
  for (const auto& r : rows)
    out += fmt::format("{},{:.10g},{:.10g},{:.10g}\n", r.step, r.expected_reward, r.p_correct, r.repetition_rate);
  return out;
}

}  // namespace chatasu::rlsim
