#include <algorithm>
#include <array>
#include <random>

#include <fmt/format.h>

#include "chatasu/gateway.hpp"
#include "chatasu/parsing.hpp"
#include "chatasu/text.hpp"

namespace chatasu::gateway {

std::string_view to_string(MockBehavior behavior) {
  switch (behavior) {
    case MockBehavior::kFaithful: return "faithful";
    case MockBehavior::kNoisy: return "noisy";
    case MockBehavior::kRepetitive: return "repetitive";
    case MockBehavior::kGibberish: return "gibberish";
  }
  return "faithful";
}

MockBehavior mock_behavior_from_string(std::string_view name) {
  if (name == "faithful") return MockBehavior::kFaithful;
  if (name == "noisy") return MockBehavior::kNoisy;
  if (name == "repetitive") return MockBehavior::kRepetitive;
  if (name == "gibberish") return MockBehavior::kGibberish;
  throw UsageError(fmt::format("unknown mock behavior '{}' (expected faithful, noisy, repetitive or gibberish)", name));
}

namespace {

// Surface variants are indexed by four independent switches, so at most
// sixteen outputs can be pairwise distinct.
constexpr std::size_t kMaxVariants = 16;

double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string polarity_word(corpus::Polarity p, bool spelled) {
  if (!spelled) return std::string(corpus::to_string(p));
  switch (p) {
    case corpus::Polarity::kPositive: return "positive";
    case corpus::Polarity::kNeutral: return "neutral";
    case corpus::Polarity::kNegative: return "negative";
  }
  return "neutral";
}

std::string asu_variant(std::span<const corpus::Quadruple> quads, std::size_t variant) {
  const bool curly = variant & 1, swap = variant & 2, spelled = variant & 4, lines = variant & 8;
  const std::string open = curly ? "“" : "\"", close = curly ? "”" : "\"";
  const std::string sep = lines ? "\n" : " ";
  auto q = [&](std::string_view s) { return open + std::string(s) + close; };
  std::string out;
  for (const auto& quad : quads) {
    const std::string implicit = quad.implicit_aspect ? *quad.implicit_aspect : "null";
    std::array<std::string, 4> s = {
        "The opinion is " + q(quad.opinion) + ".",
        "The sentiment tendency is " + q(polarity_word(quad.polarity, spelled)) + ".",
        "The opinion refers to the explicit aspect " + q(quad.explicit_aspect) + ".",
        "The pronoun of " + q(quad.explicit_aspect) + " is " + q(implicit) + ".",
    };
    if (swap) std::swap(s[2], s[3]);
    if (!out.empty()) out += lines ? "\n\n" : "\n";
    out += s[0] + sep + s[1] + sep + s[2] + sep + s[3];
  }
  if (out.empty()) {
    static constexpr std::array<std::string_view, 4> kNone = {
        "There is no opinion in this dialogue", "No opinion is expressed", "The dialogue contains no opinion",
        "I found no opinion"};
    static constexpr std::array<std::string_view, 4> kEnd = {".", "!", "。", ""};
    return std::string(kNone[variant % 4]) + std::string(kEnd[variant / 4 % 4]);
  }
  return out;
}

std::string acr_variant(std::span<const int> labels, std::size_t variant) {
  const bool brackets = variant & 1, commas = variant & 2, prefix = variant & 4, period = variant & 8;
  std::string body = fmt::format("{}", fmt::join(labels, commas ? ", " : " "));
  if (brackets) body = "[" + body + "]";
  if (prefix) body = "Labels: " + body;
  if (period) body += ".";
  return body;
}

std::string gibberish(std::mt19937_64& rng) {
  static constexpr std::array<std::string_view, 12> kWords = {"movie",  "the",   "good",  "reputation", "heard",
                                                              "lately", "maybe", "quite", "cinema",     "lead",
                                                              "watch",  "plays"};
  std::string out;
  const std::size_t n = 5 + rng() % 8;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += kWords[rng() % kWords.size()];
  }
  return out;
}

std::vector<double> make_scores(MockBehavior behavior, std::size_t n, std::size_t rank, std::mt19937_64& rng) {
  std::vector<double> s(n);
  switch (behavior) {
    case MockBehavior::kFaithful:
      for (std::size_t j = 0; j < n; ++j)
        s[j] = -0.1 * static_cast<double>(rank) - 0.7 * static_cast<double>(j) - 0.05 * uniform(rng);
      break;
    case MockBehavior::kNoisy:
      for (auto& v : s) v = -5.0 * uniform(rng);
      std::sort(s.begin(), s.end(), std::greater<>());
      break;
    case MockBehavior::kRepetitive:
      std::fill(s.begin(), s.end(), -1.0);
      break;
    case MockBehavior::kGibberish:
      for (auto& v : s) v = -5.0 - 5.0 * uniform(rng);
      break;
  }
  return s;
}

}  // namespace

reward::GenerationResult mock_generate(std::string_view prompt, const MockProfile& profile, std::uint64_t seed) {
  if (profile.outputs < 1) throw UsageError("mock: need at least one output");
  if (profile.scores_per_output < 2) throw UsageError("mock: need at least two scores per output");
  if (profile.behavior == MockBehavior::kFaithful && profile.outputs > kMaxVariants)
    throw UsageError(fmt::format("mock: at most {} distinct faithful outputs", kMaxVariants));

  std::mt19937_64 rng(text::fnv1a(prompt) ^ seed);
  reward::GenerationResult r;
  r.meta.backend = fmt::format("mock:{}", to_string(profile.behavior));
  const bool asu = profile.task == prompting::Task::kAsu;

  for (std::size_t k = 0; k < profile.outputs; ++k) {
    std::string out;
    switch (profile.behavior) {
      case MockBehavior::kFaithful:
        out = asu ? asu_variant(profile.gold_quadruples, k) : acr_variant(profile.gold_labels, k);
        break;
      case MockBehavior::kRepetitive:
        out = asu ? asu_variant(profile.gold_quadruples, 0) : acr_variant(profile.gold_labels, 1);
        break;
      case MockBehavior::kNoisy:
        if (asu) {
          auto quads = profile.gold_quadruples;
          if (!quads.empty() && uniform(rng) < 0.5) {
            auto& q = quads[rng() % quads.size()];
            q.polarity = static_cast<corpus::Polarity>((static_cast<int>(q.polarity) + 1) % 3);
          }
          if (quads.size() > 1 && uniform(rng) < 0.25) quads.pop_back();
          out = asu_variant(quads, rng() % kMaxVariants);
        } else {
          auto labels = profile.gold_labels;
          if (!labels.empty() && uniform(rng) < 0.5) {
            auto& l = labels[rng() % labels.size()];
            l = (l + 1) % 3;
          }
          out = acr_variant(labels, rng() % kMaxVariants);
        }
        break;
      case MockBehavior::kGibberish:
        out = asu ? gibberish(rng) : "I am not sure which utterances mention it.";
        break;
    }
    r.outputs.push_back(std::move(out));
    r.scores.push_back(make_scores(profile.behavior, profile.scores_per_output, k, rng));
  }
  return r;
}

std::vector<GenerationRecord> mock_generate_all(std::span<const PromptRecord> prompts,
                                                std::span<const corpus::Dialogue> dialogues, MockBehavior behavior,
                                                std::size_t outputs, std::size_t scores_per_output,
                                                std::uint64_t seed) {
  std::vector<GenerationRecord> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    auto d = std::find_if(dialogues.begin(), dialogues.end(), [&](const auto& x) { return x.id == p.dialogue_id; });
    if (d == dialogues.end())
      throw DataError(fmt::format("prompt '{}': dialogue '{}' not in the dataset", p.prompt_id, p.dialogue_id));
    MockProfile profile{behavior, p.task, {}, {}, outputs, scores_per_output};
    if (p.task == prompting::Task::kAsu) {
      profile.gold_quadruples = d->quadruples;
    } else {
      const std::string key = text::span_key(p.explicit_aspect);
      auto c = std::find_if(d->aspect_chains.begin(), d->aspect_chains.end(),
                            [&](const auto& x) { return text::span_key(x.explicit_aspect) == key; });
      if (c == d->aspect_chains.end())
        throw DataError(fmt::format("prompt '{}': no aspect chain for \"{}\"", p.prompt_id, p.explicit_aspect));
      profile.gold_labels = c->labels;
    }
    auto result = mock_generate(p.prompt, profile, seed);
    out.push_back({p.prompt_id, p.dialogue_id, p.task, p.explicit_aspect, std::move(result)});
  }
  return out;
}

}  // namespace chatasu::gateway
