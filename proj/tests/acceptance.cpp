// Acceptance checks. One line per criterion: PASS, FAIL or SKIP, then the
// measured values. Exit status is nonzero when any line is FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "chatasu/corpus.hpp"
#include "chatasu/evaluation.hpp"
#include "chatasu/parsing.hpp"
#include "chatasu/reward.hpp"
#include "chatasu/rlsim.hpp"
#include "oracles.hpp"

using namespace chatasu;
using Clock = std::chrono::steady_clock;

namespace {

enum class Outcome { kPass, kFail, kSkip };

int g_failures = 0;

void report(Outcome o, std::string_view name, const std::string& detail) {
  const char* tag = o == Outcome::kPass ? "PASS" : o == Outcome::kFail ? "FAIL" : "SKIP";
  if (o == Outcome::kFail) ++g_failures;
  fmt::print("{}  {:<32} {}\n", tag, name, detail);
  std::fflush(stdout);
}

Outcome verdict(bool ok) { return ok ? Outcome::kPass : Outcome::kFail; }

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int oracle_cell(evaluation::Projection p) {
  using evaluation::Projection;
  switch (p) {
    case Projection::kExplicit: return 0;
    case Projection::kImplicit: return 1;
    case Projection::kOpinion: return 2;
    case Projection::kPolarity: return 3;
    case Projection::kExplicitOpinion: return 4;
    case Projection::kExplicitImplicit: return 5;
    case Projection::kImplicitOpinion: return 6;
    case Projection::kQuadruple: return 7;
  }
  return 7;
}

void metric_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::size_t mismatches = 0, cells = 0;
  for (int pair = 0; pair < 200; ++pair) {
    corpus::Dialogue gold;
    gold.id = fmt::format("d{}", pair);
    parsing::AsuPrediction pred{gold.id, {}};
    for (std::size_t k = 0, n = oracle::below(rng, 7); k < n; ++k)
      gold.quadruples.push_back(oracle::small_vocab_quadruple(rng));
    for (std::size_t k = 0, n = oracle::below(rng, 7); k < n; ++k)
      pred.quadruples.push_back(parsing::to_fragment(oracle::small_vocab_quadruple(rng)));
    // Half the pairs reuse gold quadruples so matches are common.
    if (pair % 2 == 0)
      for (const auto& q : gold.quadruples)
        if (oracle::uniform(rng) < 0.6 && pred.quadruples.size() < 6) pred.quadruples.push_back(parsing::to_fragment(q));

    const auto r = evaluation::evaluate(std::vector<corpus::Dialogue>{gold}, std::vector<parsing::AsuPrediction>{pred});
    for (auto p : evaluation::kAllProjections) {
      const int cell = oracle_cell(p);
      std::vector<oracle::Item> g, q;
      for (const auto& x : gold.quadruples)
        g.push_back(oracle::select(x.explicit_aspect, x.implicit_aspect, x.opinion, x.polarity, cell));
      for (const auto& x : pred.quadruples)
        q.push_back(oracle::select(x.explicit_aspect, x.implicit_aspect, x.opinion, x.polarity, cell));
      const std::size_t c = oracle::brute_force_matching(g, q);
      const auto& s = r.cell(p);
      ++cells;
      if (s.n_correct != c || s.n_pred != q.size() || s.n_gold != g.size() ||
          std::abs(s.f1 - oracle::f1_from_counts(c, q.size(), g.size())) > 1e-12)
        ++mismatches;
    }
  }
  const double t = seconds_since(start);
  report(verdict(mismatches == 0 && t < 30.0), "metric-oracle-equivalence",
         fmt::format("200 pairs, {} cells, {} mismatches, {:.2f} s (limit 30 s)", cells, mismatches, t));
}

void hand_checked_f1() {
  const auto s = evaluation::prf(2, 3, 4);
  const auto identity = evaluation::prf(5, 5, 5);
  const auto zero = evaluation::prf(0, 3, 4);
  const double err = std::abs(s.f1 - 4.0 / 7.0);
  const bool ok = err <= 1e-9 && identity.f1 == 1.0 && identity.precision == 1.0 && identity.recall == 1.0 &&
                  zero.f1 == 0.0 && zero.precision == 0.0 && zero.recall == 0.0;
  report(verdict(ok), "hand-checked-f1",
         fmt::format("F1(2,3,4) = {:.12f} (|err| {:.1e} <= 1e-9), identity {}, zero {}", s.f1, err, identity.f1,
                     zero.f1));
}

void reward_arithmetic() {
  const auto a = reward::trusted_reflexion(1.0, 2.0, 0.5, 0.5, 0);
  const auto b = reward::trusted_reflexion(1.0, 2.0, 0.5, 0.5, 2);
  report(verdict(a.total == 28.0 && b.total == 8.0 && a.alpha == 15.0 && a.beta == 5.0 && a.gamma == 3.0),
         "reward-arithmetic", fmt::format("p=0 -> {}, p=2 -> {} (expected 28 and 8, weights 15/5/3)", a.total, b.total));
}

double te_family(double t) {
  const std::vector<std::vector<double>> g = {{0.0, t, 1.0}};
  return reward::trusted_estimation(g);
}

void trusted_estimation_properties() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  const double inv_e = 1.0 / std::exp(1.0);
  std::size_t positivity = 0, affine = 0, peaked = 0;
  for (int i = 0; i < 1000; ++i) {
    reward::GenerationResult r;
    for (std::size_t j = 0, m = 1 + oracle::below(rng, 5); j < m; ++j) {
      r.outputs.push_back("x");
      std::vector<double> s(2 + oracle::below(rng, 6));
      for (auto& v : s) v = -20.0 * oracle::uniform(rng);
      r.scores.push_back(std::move(s));
    }
    const double te = reward::trusted_estimation(r);
    if (!(te > 0.0) || !std::isfinite(te)) ++positivity;

    auto moved = r;
    const double a = 0.01 + 100.0 * oracle::uniform(rng), b = 200.0 * oracle::uniform(rng) - 100.0;
    for (auto& row : moved.scores)
      for (auto& v : row) v = a * v + b;
    if (std::abs(reward::trusted_estimation(moved) - te) > 1e-9 * te) ++affine;

    double t1 = 1e-3 + (inv_e - 2e-3) * oracle::uniform(rng), t2 = 1e-3 + (inv_e - 2e-3) * oracle::uniform(rng);
    if (t1 > t2) std::swap(t1, t2);
    if (t2 - t1 > 1e-9 && !(te_family(t1) > te_family(t2))) ++peaked;
  }
  const double at_005 = te_family(0.05), at_inv_e = te_family(inv_e);
  if (!(at_005 > at_inv_e)) ++peaked;
  const double t = seconds_since(start);
  report(verdict(positivity + affine + peaked == 0 && t < 10.0), "trusted-estimation-properties",
         fmt::format("1000 sets; violations: positivity {}, affine {}, peakedness {}; R(0.05)={:.3f} > R(1/e)={:.3f}; "
                     "{:.2f} s (limit 10 s)",
                     positivity, affine, peaked, at_005, at_inv_e, t));
}

void parser_round_trip() {
  std::mt19937_64 rng(99);
  std::size_t failures = 0, nulls = 0;
  for (int i = 0; i < 1000; ++i) {
    parsing::QuadrupleFragment q;
    q.explicit_aspect = oracle::random_span(rng);
    q.opinion = oracle::random_span(rng);
    if (oracle::uniform(rng) < 0.6) q.implicit_aspect = oracle::random_span(rng);
    if (q.implicit_aspect == "null") q.implicit_aspect.reset();
    nulls += !q.implicit_aspect;
    q.polarity = oracle::random_polarity(rng);
    const auto p = parsing::parse_asu_output(parsing::render_asu_output(q));
    if (p.quadruples.size() != 1 || !(p.quadruples[0] == q)) ++failures;
  }
  const std::vector<std::string> pieces = {"The opinion is ", "\"", "“", "”", "''", "``", "「", ".", "。", "null",
                                           "The sentiment tendency is ", "POS", "The pronoun of ", " is ", "\n",
                                           "The opinion refers to the explicit aspect ", "\xFF", "\xC3", "[2, 0"};
  std::size_t raised = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    for (std::size_t k = 0, n = oracle::below(rng, 24); k < n; ++k) {
      if (oracle::uniform(rng) < 0.3)
        s += static_cast<char>(oracle::below(rng, 256));
      else
        s += pieces[oracle::below(rng, pieces.size())];
    }
    try {
      parsing::parse_asu_output(s);
      parsing::parse_acr_output(s, 1 + oracle::below(rng, 6));
    } catch (...) {
      ++raised;
    }
  }
  report(verdict(failures == 0 && raised == 0), "parser-round-trip",
         fmt::format("1000 render->parse ({} null implicit): {} mismatches; 10000 fuzzed inputs: {} raised", nulls,
                     failures, raised));
}

void gradient_check() {
  std::mt19937_64 rng(4242);
  double worst = 0.0, worst_oracle = 0.0;
  for (int point = 0; point < 10; ++point) {
    std::vector<double> logits(4), r(4);
    for (auto& v : logits) v = 6.0 * oracle::uniform(rng) - 3.0;
    for (auto& v : r) v = 20.0 * oracle::uniform(rng) - 10.0;
    const rlsim::RewardFn reward = [&](std::size_t a) { return r[a]; };
    const auto g = rlsim::objective_gradient(rlsim::ToyPolicy::from_logits(logits), reward);
    for (std::size_t a = 0; a < 4; ++a) {
      const double h = 1e-5;
      auto up = logits, down = logits;
      up[a] += h;
      down[a] -= h;
      const double fd = (rlsim::expected_objective(rlsim::ToyPolicy::from_logits(up), reward) -
                         rlsim::expected_objective(rlsim::ToyPolicy::from_logits(down), reward)) /
                        (2 * h);
      worst = std::max(worst, std::abs(g[a] - fd));
      // Second route: J summed here from a local softmax.
      auto j = [&](const std::vector<double>& x) {
        double z = 0, s = 0;
        for (std::size_t i = 0; i < 4; ++i) z += std::exp(x[i]);
        for (std::size_t i = 0; i < 4; ++i) s += std::exp(x[i]) / z * r[i];
        return s;
      };
      worst_oracle = std::max(worst_oracle, std::abs(g[a] - (j(up) - j(down)) / (2 * h)));
    }
  }
  report(verdict(worst <= 1e-6 && worst_oracle <= 1e-6), "gradient-check",
         fmt::format("10 points x 4 candidates: max |analytic - FD| {:.2e} (library J), {:.2e} (independent J); "
                     "limit 1e-6",
                     worst, worst_oracle));
}

double tail_mean(const std::vector<rlsim::CurveRow>& rows, std::size_t n) {
  double s = 0;
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) s += rows[i].expected_reward;
  return s / static_cast<double>(n);
}

void rl_demonstration() {
  const auto start = Clock::now();
  const auto scenario = rlsim::default_scenario();
  const auto rows = rlsim::simulate(scenario, 42);
  std::size_t reached = 0;
  for (const auto& r : rows)
    if (r.p_correct >= 0.9 && r.repetition_rate <= 0.05) {
      reached = r.step;
      break;
    }
  const auto& last = rows.back();
  const bool learned = last.p_correct >= 0.9 && last.repetition_rate <= 0.05 && scenario.steps <= 2000 &&
                       scenario.reward.alpha == 15.0 && scenario.reward.beta == 5.0 && scenario.reward.gamma == 3.0;

  auto rep = rlsim::repetitive_scenario();
  rep.steps = scenario.steps;
  const auto rep_rows = rlsim::simulate(rep, 42);
  const double faithful_tail = tail_mean(rows, 100), repetitive_tail = tail_mean(rep_rows, 100);
  const double t = seconds_since(start);
  report(verdict(learned && repetitive_tail < faithful_tail && t < 120.0), "rl-demonstration",
         fmt::format("seed 42, {} steps: p_correct {:.4f} (>= 0.9), repetition {:.4f} (<= 0.05), first met at step {}; "
                     "tail reward faithful {:.3f} > repetitive {:.3f}; {:.2f} s (limit 120 s)",
                     scenario.steps, last.p_correct, last.repetition_rate, reached, faithful_tail, repetitive_tail,
                     t));
}

void dataset_check() {
  const char* dir = std::getenv("CHATASU_DATASET_DIR");
  namespace fs = std::filesystem;
  if (dir == nullptr || !fs::exists(fs::path(dir) / "train.jsonl")) {
    report(Outcome::kSkip, "dataset-check", "CHATASU_DATASET_DIR/train.jsonl not present");
    return;
  }
  try {
    const auto train = corpus::load_dataset(fs::path(dir) / "train.jsonl");
    const auto s = corpus::stats(train);
    const bool row = s.n_utterances == 21612 && s.n_dialogues == 2400 && s.n_explicit == 8959 &&
                     s.n_implicit == 6172 && s.chain_max == 11 && std::lround(s.chain_avg * 100) == 240 &&
                     s.n_pos == 7234 && s.n_neu == 472 && s.n_neg == 1261 && s.n_total == 8967;
    std::string detail = fmt::format("train {}/{}/{}/{}/{}/{:.2f}/{}/{}/{}/{}", s.n_utterances, s.n_dialogues,
                                     s.n_explicit, s.n_implicit, s.chain_max, s.chain_avg, s.n_pos, s.n_neu, s.n_neg,
                                     s.n_total);
    bool ok = row;
    const fs::path a = fs::path(dir) / "annotator_a.jsonl", b = fs::path(dir) / "annotator_b.jsonl";
    if (fs::exists(a) && fs::exists(b)) {
      const auto agr = corpus::agreement(corpus::load_dataset(a, corpus::LoadMode::kUnchecked),
                                         corpus::load_dataset(b, corpus::LoadMode::kUnchecked));
      ok = ok && std::abs(agr.f1 - 86.76) <= 0.01 && std::abs(agr.accuracy - 83.16) <= 0.01;
      detail += fmt::format("; agreement F1 {:.2f} acc {:.2f}", agr.f1, agr.accuracy);
    } else {
      detail += "; annotator files absent, agreement not checked";
    }
    report(verdict(ok), "dataset-check", detail);
  } catch (const std::exception& e) {
    report(Outcome::kFail, "dataset-check", e.what());
  }
}

void full_suite(Clock::time_point process_start) {
  const auto start = Clock::now();
  const int status = std::system(CHATASU_UNIT_TESTS " > /dev/null 2>&1");
  const double unit = seconds_since(start), total = seconds_since(process_start);
  report(verdict(status == 0 && total < 300.0), "offline-suite-runtime",
         fmt::format("unit suite exit {}, {:.2f} s; acceptance total {:.2f} s (limit 300 s)", status, unit, total));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  metric_oracle();
  hand_checked_f1();
  reward_arithmetic();
  trusted_estimation_properties();
  parser_round_trip();
  gradient_check();
  rl_demonstration();
  dataset_check();
  full_suite(start);
  return g_failures == 0 ? 0 : 1;
}
