#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "chatasu/rlsim.hpp"
#include "oracles.hpp"

using namespace chatasu;
using rlsim::ToyPolicy;
using rlsim::Trajectory;

namespace {

std::vector<double> softmax_oracle(const std::vector<double>& x) {
  std::vector<double> e(x.size());
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += e[i] = std::exp(x[i]);
  for (auto& v : e) v /= z;
  return e;
}

double j_oracle(const std::vector<double>& logits, const std::vector<double>& r) {
  const auto p = softmax_oracle(logits);
  double j = 0;
  for (std::size_t i = 0; i < p.size(); ++i) j += p[i] * r[i];
  return j;
}

// Single-step batch with counts proportional to pi, from evenly spaced quantiles.
std::vector<Trajectory> systematic_batch(const ToyPolicy& policy, const std::vector<double>& r, std::size_t n) {
  const auto pi = softmax_oracle(policy.logits);
  std::vector<Trajectory> batch;
  batch.reserve(n);
  std::size_t a = 0;
  double acc = pi[0];
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    while (u >= acc && a + 1 < pi.size()) acc += pi[++a];
    batch.push_back({{{a, r[a]}}});
  }
  return batch;
}

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t k) {
  std::vector<double> l(k);
  for (auto& v : l) v = 4.0 * oracle::uniform(rng) - 2.0;
  return l;
}

}  // namespace

TEST_SUITE("rlsim") {
  TEST_CASE("cross-entropy on token batches") {
    rlsim::TokenBatch uniform{{0, 1, 2}, {{.25, .25, .25, .25}, {.25, .25, .25, .25}, {.25, .25, .25, .25}}};
    CHECK(rlsim::cross_entropy(uniform) == doctest::Approx(3 * std::log(4.0)).epsilon(1e-12));
    rlsim::TokenBatch half{{1}, {{.5, .5}}};
    CHECK(rlsim::cross_entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    rlsim::TokenBatch exact{{0, 1}, {{1, 0}, {0, 1}}};
    CHECK(rlsim::cross_entropy(exact) <= 1e-9);
    rlsim::TokenBatch miss{{0}, {{0, 1}}};
    CHECK(rlsim::cross_entropy(miss) == doctest::Approx(-std::log(1e-12)));
    CHECK(rlsim::combined_loss(uniform, half) == doctest::Approx(3 * std::log(4.0) + std::log(2.0)));

    CHECK_THROWS_AS(rlsim::cross_entropy({{}, {}}), UsageError);
    CHECK_THROWS_AS(rlsim::cross_entropy({{0}, {{1.0}}}), UsageError);
    CHECK_THROWS_AS(rlsim::cross_entropy({{0}, {{.5, .6}}}), UsageError);
    CHECK_THROWS_AS(rlsim::cross_entropy({{2}, {{.5, .5}}}), UsageError);
    CHECK_THROWS_AS(rlsim::cross_entropy({{0, 1}, {{.5, .5}}}), UsageError);
  }

  TEST_CASE("exact objective") {
    const auto uniform2 = ToyPolicy::from_logits({0, 0});
    CHECK(rlsim::expected_objective(uniform2, [](std::size_t a) { return a == 0 ? 1.0 : 0.0; }) == 0.5);
    const auto skewed = ToyPolicy::from_logits({std::log(3.0), 0});
    CHECK(rlsim::expected_objective(skewed, [](std::size_t a) { return a == 0 ? 1.0 : 0.0; }) ==
          doctest::Approx(0.75).epsilon(1e-12));
    const auto any = ToyPolicy::from_logits({0.3, -1, 2, 0.1});
    CHECK(rlsim::expected_objective(any, [](std::size_t) { return 7.5; }) == doctest::Approx(7.5).epsilon(1e-12));
    CHECK_THROWS_AS(rlsim::expected_objective(ToyPolicy::from_logits(std::vector<double>(rlsim::kMaxEnumerable + 1)),
                                              [](std::size_t) { return 0.0; }),
                    UsageError);
  }

  TEST_CASE("analytic gradient matches central differences of J") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
      const std::size_t k = 2 + oracle::below(rng, 5);
      const auto logits = random_logits(rng, k);
      std::vector<double> r(k);
      for (auto& v : r) v = 10 * oracle::uniform(rng) - 5;
      const auto g = rlsim::objective_gradient(ToyPolicy::from_logits(logits), [&](std::size_t a) { return r[a]; });
      for (std::size_t a = 0; a < k; ++a) {
        const double h = 1e-5;
        auto up = logits, down = logits;
        up[a] += h;
        down[a] -= h;
        CHECK(g[a] == doctest::Approx((j_oracle(up, r) - j_oracle(down, r)) / (2 * h)).epsilon(1e-6).scale(1.0));
      }
    }
  }

  TEST_CASE("log-probability gradient of multi-step trajectories") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 50; ++i) {
      const std::size_t k = 3 + oracle::below(rng, 4);
      const auto policy = ToyPolicy::from_logits(random_logits(rng, k));
      const auto t = rlsim::sample_trajectory(policy, 1 + oracle::below(rng, k), rng);
      const auto g = policy.log_probability_gradient(t);
      for (std::size_t a = 0; a < k; ++a) {
        const double h = 1e-5;
        auto up = policy, down = policy;
        up.logits[a] += h;
        down.logits[a] -= h;
        const double fd = (up.log_probability(t) - down.log_probability(t)) / (2 * h);
        CHECK(g[a] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
      // A full permutation has probability product over shrinking softmaxes.
      double lp = 0;
      std::vector<double> remaining = policy.logits;
      std::vector<bool> used(k, false);
      for (const auto& s : t.steps) {
        double z = 0;
        for (std::size_t a = 0; a < k; ++a)
          if (!used[a]) z += std::exp(remaining[a]);
        lp += remaining[s.action] - std::log(z);
        used[s.action] = true;
      }
      CHECK(policy.log_probability(t) == doctest::Approx(lp).epsilon(1e-12));
    }
  }

  TEST_CASE("trajectories are distinct draws") {
    std::mt19937_64 rng(1);
    const auto policy = ToyPolicy::from_logits({1, 0, -1, 2});
    for (int i = 0; i < 200; ++i) {
      const auto t = rlsim::sample_trajectory(policy, 4, rng);
      std::vector<std::size_t> a;
      for (const auto& s : t.steps) a.push_back(s.action);
      std::sort(a.begin(), a.end());
      CHECK(a == std::vector<std::size_t>{0, 1, 2, 3});
    }
    CHECK_THROWS_AS(rlsim::sample_trajectory(policy, 5, rng), UsageError);
    CHECK_THROWS_AS(policy.log_probability(Trajectory{{{1, 0}, {1, 0}}}), UsageError);
  }

  TEST_CASE("sampling frequencies follow the softmax") {
    std::mt19937_64 rng(12);
    const auto policy = ToyPolicy::from_logits({0.5, -0.2, 1.1});
    const auto pi = softmax_oracle(policy.logits);
    std::vector<double> count(3, 0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) count[rlsim::sample_trajectory(policy, 1, rng).steps[0].action] += 1;
    for (std::size_t a = 0; a < 3; ++a) CHECK(count[a] / n == doctest::Approx(pi[a]).epsilon(0.01));
  }

  TEST_CASE("REINFORCE estimate approaches the exact gradient") {
    std::mt19937_64 rng(14);
    const auto policy = ToyPolicy::from_logits({0.2, -0.4, 0.9, 0.0});
    const std::vector<double> r = {1.0, 3.0, -2.0, 0.5};
    const auto exact = rlsim::objective_gradient(policy, [&](std::size_t a) { return r[a]; });

    const auto sys = rlsim::reinforce_gradient(policy, systematic_batch(policy, r, 100000));
    for (std::size_t a = 0; a < 4; ++a) CHECK(std::abs(sys[a] - exact[a]) < 1e-4);

    std::vector<Trajectory> iid;
    for (int i = 0; i < 100000; ++i) {
      auto t = rlsim::sample_trajectory(policy, 1, rng);
      t.steps[0].reward = r[t.steps[0].action];
      iid.push_back(t);
    }
    const auto est = rlsim::reinforce_gradient(policy, iid);
    for (std::size_t a = 0; a < 4; ++a) CHECK(std::abs(est[a] - exact[a]) < 0.03);
  }

  TEST_CASE("equal rewards leave the policy unchanged") {
    std::mt19937_64 rng(3);
    const auto policy = ToyPolicy::from_logits({0.3, -0.1, 0.7});
    std::vector<Trajectory> batch;
    for (int i = 0; i < 32; ++i) {
      auto t = rlsim::sample_trajectory(policy, 2, rng);
      for (auto& s : t.steps) s.reward = 2.5;
      batch.push_back(t);
    }
    for (auto clip : {std::optional<double>{}, std::optional<double>{0.2}}) {
      const auto next = rlsim::policy_gradient_step(policy, batch, {0.5, clip, 4, std::nullopt});
      CHECK(next.logits == policy.logits);
    }
  }

  TEST_CASE("two-armed bandit follows exact gradient ascent") {
    std::mt19937_64 rng(5);
    const std::vector<double> r = {1.0, 0.0};
    auto sampled = ToyPolicy::from_logits({0, 0});
    std::vector<double> exact = {0, 0};
    const rlsim::UpdateOptions opt{0.5, std::nullopt, 4, std::nullopt};
    for (int step = 0; step < 300; ++step) {
      std::vector<Trajectory> batch;
      for (int i = 0; i < 256; ++i) {
        auto t = rlsim::sample_trajectory(sampled, 1, rng);
        t.steps[0].reward = r[t.steps[0].action];
        batch.push_back(t);
      }
      sampled = rlsim::policy_gradient_step(sampled, batch, opt);
      const auto g = rlsim::objective_gradient(ToyPolicy::from_logits(exact), [&](std::size_t a) { return r[a]; });
      for (std::size_t a = 0; a < 2; ++a) exact[a] += opt.learning_rate * g[a];
    }
    const double p_sampled = sampled.probabilities()[0], p_exact = softmax_oracle(exact)[0];
    CHECK(p_exact > 0.95);
    CHECK(p_sampled > 0.95);
    CHECK(std::abs(p_sampled - p_exact) < 0.02);
  }

  TEST_CASE("single-epoch PPO equals REINFORCE; clipping stops movement") {
    const auto policy = ToyPolicy::from_logits({0, 0, 0});
    const std::vector<Trajectory> batch = {{{{0, 1.0}}}, {{{1, 0.0}}}};
    const auto plain = rlsim::policy_gradient_step(policy, batch, {0.3, std::nullopt, 4, std::nullopt});
    const auto one = rlsim::policy_gradient_step(policy, batch, {0.3, 0.2, 1, std::nullopt});
    for (std::size_t a = 0; a < 3; ++a) CHECK(one.logits[a] == doctest::Approx(plain.logits[a]).epsilon(1e-12));

    const auto many = rlsim::policy_gradient_step(policy, batch, {0.3, 0.2, 200, std::nullopt});
    const auto more = rlsim::policy_gradient_step(policy, batch, {0.3, 0.2, 400, std::nullopt});
    CHECK(many.logits == more.logits);
    const auto p0 = policy.probabilities(), p1 = many.probabilities();
    CHECK(p1[0] / p0[0] > 1.2);
    CHECK(p1[1] / p0[1] < 0.8);
    CHECK(p1[0] / p0[0] < 1.3);
  }

  TEST_CASE("gradient norm cap and invalid options") {
    const auto policy = ToyPolicy::from_logits({0, 0});
    const std::vector<Trajectory> batch = {{{{0, 100.0}}}, {{{1, 0.0}}}};
    const auto capped = rlsim::policy_gradient_step(policy, batch, {1.0, std::nullopt, 4, 1.0});
    CHECK(std::hypot(capped.logits[0], capped.logits[1]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(rlsim::policy_gradient_step(policy, batch, {0.0, std::nullopt, 4, std::nullopt}), UsageError);
    CHECK_THROWS_AS(rlsim::policy_gradient_step(policy, batch, {0.1, 0.0, 4, std::nullopt}), UsageError);
    CHECK_THROWS_AS(rlsim::policy_gradient_step(policy, {}, {0.1, std::nullopt, 4, std::nullopt}), UsageError);
    const std::vector<Trajectory> inf = {{{{0, HUGE_VAL}}}, {{{1, 0.0}}}};
    CHECK_THROWS_AS(rlsim::policy_gradient_step(policy, inf, {0.1, std::nullopt, 4, std::nullopt}), UsageError);
  }

  TEST_CASE("synthetic scores are the top logits") {
    const auto policy = ToyPolicy::from_logits({0.1, 2.0, -1.0, 1.5});
    CHECK(rlsim::synthetic_scores(policy, 3) == std::vector<double>{2.0, 1.5, 0.1});
    CHECK_THROWS_AS(rlsim::synthetic_scores(policy, 5), UsageError);
  }

  TEST_CASE("built-in scenarios are well formed") {
    const auto s = rlsim::default_scenario();
    CHECK_NOTHROW(s.check());
    std::size_t correct = 0;
    for (const auto& c : s.candidates) correct += c.correct;
    CHECK(correct == 1);
    CHECK(s.reward.alpha == 15.0);
    CHECK(s.reward.beta == 5.0);
    CHECK(s.reward.gamma == 3.0);
    CHECK_NOTHROW(rlsim::repetitive_scenario().check());
  }

  TEST_CASE("simulation is deterministic per seed") {
    auto s = rlsim::default_scenario();
    s.steps = 40;
    const auto a = rlsim::curve_csv(rlsim::simulate(s, 42));
    CHECK(a == rlsim::curve_csv(rlsim::simulate(s, 42)));
    CHECK(a != rlsim::curve_csv(rlsim::simulate(s, 43)));
    CHECK(a.rfind("step,expected_reward,p_correct,repetition_rate\n", 0) == 0);
    CHECK(std::count(a.begin(), a.end(), '\n') == 42);
  }

  TEST_CASE("default scenario learns the correct answer") {
    const auto rows = rlsim::simulate(rlsim::default_scenario(), 42);
    REQUIRE(rows.size() == 2001);
    CHECK(rows.front().p_correct == doctest::Approx(0.2));
    CHECK(rows.back().p_correct >= 0.9);
    CHECK(rows.back().repetition_rate <= 0.05);
    CHECK(rows.back().expected_reward > rows.front().expected_reward);
  }

  TEST_CASE("identical candidates sit on the penalty branch") {
    auto s = rlsim::repetitive_scenario();
    s.steps = 100;
    const auto rows = rlsim::simulate(s, 42);
    for (const auto& r : rows) {
      CHECK(r.repetition_rate == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(r.expected_reward == doctest::Approx(rows.front().expected_reward).epsilon(1e-12));
    }
    auto f = rlsim::default_scenario();
    f.steps = 100;
    CHECK(rows.back().expected_reward < rlsim::simulate(f, 42).back().expected_reward);
  }

  TEST_CASE("scenario documents") {
    auto s = rlsim::parse_scenario(
        "base = \"repetitive\"\nsteps = 12\nepisodes_per_step = 4\n[update]\nlearning_rate = 0.2\nclip = 0.1\n"
        "max_grad_norm = 0\n[reward]\nalpha = 1.5\nscale_by_output_count = false\n");
    CHECK(s.name == "repetitive");
    CHECK(s.steps == 12);
    CHECK(s.episodes_per_step == 4);
    CHECK(s.update.learning_rate == 0.2);
    CHECK(s.update.clip == 0.1);
    CHECK_FALSE(s.update.max_grad_norm.has_value());
    CHECK(s.reward.alpha == 1.5);
    CHECK_FALSE(s.reward.scale_by_output_count);

    s = rlsim::parse_scenario("");
    CHECK(s.candidates.size() == rlsim::default_scenario().candidates.size());

    const std::string custom = fmt::format(
        "[gold]\npath = \"{}\"\ndialogue_id = \"phone-01\"\n"
        "[[candidate]]\nasu = \"x\"\nacr = [\"0 0 0 0 0\", \"0 0 0 0 0\"]\nkind = \"gibberish\"\n",
        CHATASU_FIXTURES "/toy.jsonl");
    CHECK_THROWS_AS(rlsim::parse_scenario(custom), UsageError);  // needs a correct candidate

    CHECK_THROWS_AS(rlsim::parse_scenario("base = \"odd\""), DataError);
    CHECK_THROWS_AS(rlsim::parse_scenario("steps = \"many\""), DataError);
    CHECK_THROWS_AS(rlsim::parse_scenario("steps = = 3"), DataError);
    CHECK_THROWS_AS(rlsim::parse_scenario(fmt::format("[gold]\npath = \"{}\"\ndialogue_id = \"phone-01\"\n",
                                                      CHATASU_FIXTURES "/toy.jsonl")),
                    DataError);
    CHECK_THROWS_AS(rlsim::parse_scenario("samples_per_episode = 9"), UsageError);
  }
}
