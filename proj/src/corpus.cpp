#include "chatasu/corpus.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "chatasu/evaluation.hpp"
#include "chatasu/io.hpp"
#include "chatasu/parsing.hpp"
#include "chatasu/text.hpp"

namespace chatasu::corpus {

std::string_view to_string(Polarity polarity) {
  switch (polarity) {
    case Polarity::kPositive: return "POS";
    case Polarity::kNeutral: return "NEU";
    case Polarity::kNegative: return "NEG";
  }
  return "NEU";
}

std::optional<Polarity> polarity_from_label(std::string_view label) {
  if (label == "POS") return Polarity::kPositive;
  if (label == "NEU") return Polarity::kNeutral;
  if (label == "NEG") return Polarity::kNegative;
  return std::nullopt;
}

MalformedRecord::MalformedRecord(std::size_t line, std::string field, const std::string& what)
    : DataError(fmt::format("line {}: field '{}': {}", line, field, what)),
      line_(line),
      field_(std::move(field)) {}

InvariantViolation::InvariantViolation(std::string dialogue_id, Violation violation)
    : DataError(fmt::format("dialogue '{}': {}: {}", dialogue_id, violation.rule, violation.detail)),
      dialogue_id_(std::move(dialogue_id)),
      violation_(std::move(violation)) {}

namespace {

using nlohmann::json;

// Field accessors that name the offending path on failure.
class RecordReader {
 public:
  explicit RecordReader(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw MalformedRecord(line_, field, what);
  }

  const json& member(const json& obj, const std::string& path, std::string_view key) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing");
    return *it;
  }

  std::string string(const json& obj, const std::string& path, std::string_view key) const {
    const json& v = member(obj, path, key);
    if (!v.is_string()) fail(join(path, key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<std::string> optional_string(const json& obj, const std::string& path,
                                             std::string_view key) const {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) fail(join(path, key), "expected a string or null");
    return it->get<std::string>();
  }

  std::size_t index(const json& obj, const std::string& path, std::string_view key) const {
    const json& v = member(obj, path, key);
    return as_index(v, join(path, key));
  }

  std::optional<std::size_t> optional_index(const json& obj, const std::string& path,
                                            std::string_view key) const {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    return as_index(*it, join(path, key));
  }

  const json& array(const json& obj, const std::string& path, std::string_view key) const {
    const json& v = member(obj, path, key);
    if (!v.is_array()) fail(join(path, key), "expected an array");
    return v;
  }

  std::size_t as_index(const json& v, const std::string& field) const {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer()) {
      if (v.get<long long>() < 0) fail(field, "expected a non-negative integer");
      return static_cast<std::size_t>(v.get<long long>());
    }
    fail(field, "expected a non-negative integer");
  }

  static std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }

 private:
  std::size_t line_;
};

std::string indexed(std::string_view name, std::size_t i) { return fmt::format("{}[{}]", name, i); }

bool contains_span(std::string_view haystack, std::string_view span) {
  const std::string key = text::span_key(span);
  if (key.empty()) return false;
  return text::nfc(haystack).find(key) != std::string::npos;
}

constexpr std::array<std::string_view, 7> kGuidelines = {
    "Explicit aspect: when an opinion appears, annotate the most specific aspect entity "
    "mentioned at or before the opinion's utterance.",
    "Aspects without any opinion expression are not annotated.",
    "Implicit aspect: a pronoun or coreferent of the explicit aspect in the opinion's utterance.",
    "A more specific aspect appearing after a pronoun does not turn the earlier pronoun into "
    "an implicit aspect.",
    "Opinions are words or phrases with explicit sentiment.",
    "Weak sentiment expressions are not annotated.",
    "Polarity is one of positive, neutral, negative.",
};

}  // namespace

Dialogue dialogue_from_json(const nlohmann::json& record, std::size_t line) {
  RecordReader r(line);
  if (!record.is_object()) r.fail("<record>", "expected a JSON object");

  Dialogue d;
  d.id = r.string(record, "", "dialogue_id");

  const json& utterances = r.array(record, "", "utterances");
  d.utterances.reserve(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const std::string path = indexed("utterances", i);
    const json& u = utterances[i];
    if (!u.is_object()) r.fail(path, "expected an object");
    d.utterances.push_back({r.index(u, path, "index"), r.string(u, path, "speaker"),
                            r.string(u, path, "text")});
  }

  if (record.contains("quadruples")) {
    const json& quads = r.array(record, "", "quadruples");
    for (std::size_t i = 0; i < quads.size(); ++i) {
      const std::string path = indexed("quadruples", i);
      const json& q = quads[i];
      if (!q.is_object()) r.fail(path, "expected an object");
      Quadruple quad;
      quad.explicit_aspect = r.string(q, path, "explicit");
      quad.explicit_utt = r.index(q, path, "explicit_utt");
      quad.implicit_aspect = r.optional_string(q, path, "implicit");
      quad.implicit_utt = r.optional_index(q, path, "implicit_utt");
      quad.opinion = r.string(q, path, "opinion");
      quad.opinion_utt = r.index(q, path, "opinion_utt");
      const std::string label = r.string(q, path, "polarity");
      auto polarity = polarity_from_label(label);
      if (!polarity)
        r.fail(path + ".polarity", fmt::format("unknown polarity \"{}\" (expected POS, NEU or NEG)", label));
      quad.polarity = *polarity;
      d.quadruples.push_back(std::move(quad));
    }
  }

  if (record.contains("aspect_chains")) {
    const json& chains = r.array(record, "", "aspect_chains");
    for (std::size_t i = 0; i < chains.size(); ++i) {
      const std::string path = indexed("aspect_chains", i);
      const json& c = chains[i];
      if (!c.is_object()) r.fail(path, "expected an object");
      AspectChain chain;
      chain.explicit_aspect = r.string(c, path, "explicit");
      const json& labels = r.array(c, path, "labels");
      for (std::size_t k = 0; k < labels.size(); ++k) {
        if (!labels[k].is_number_integer())
          r.fail(path + "." + indexed("labels", k), "expected an integer");
        chain.labels.push_back(labels[k].get<int>());
      }
      d.aspect_chains.push_back(std::move(chain));
    }
  }
  return d;
}

nlohmann::json quadruple_to_json(const Quadruple& q) {
  json j;
  j["explicit"] = q.explicit_aspect;
  j["explicit_utt"] = q.explicit_utt;
  j["implicit"] = q.implicit_aspect ? json(*q.implicit_aspect) : json(nullptr);
  j["implicit_utt"] = q.implicit_utt ? json(*q.implicit_utt) : json(nullptr);
  j["opinion"] = q.opinion;
  j["opinion_utt"] = q.opinion_utt;
  j["polarity"] = std::string(to_string(q.polarity));
  return j;
}

nlohmann::json to_json(const Dialogue& d) {
  json j;
  j["dialogue_id"] = d.id;
  j["utterances"] = json::array();
  for (const auto& u : d.utterances)
    j["utterances"].push_back({{"index", u.index}, {"speaker", u.speaker}, {"text", u.text}});
  j["quadruples"] = json::array();
  for (const auto& q : d.quadruples) j["quadruples"].push_back(quadruple_to_json(q));
  j["aspect_chains"] = json::array();
  for (const auto& c : d.aspect_chains)
    j["aspect_chains"].push_back({{"explicit", c.explicit_aspect}, {"labels", c.labels}});
  return j;
}

std::vector<Dialogue> read_dataset(std::istream& in, LoadMode mode) {
  std::vector<Dialogue> dialogues;
  std::unordered_set<std::string> seen;
  io::for_each_line(in, [&](std::size_t line, std::string_view content) {
    json record;
    try {
      record = json::parse(content);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(line, "<record>", std::string("invalid JSON: ") + e.what());
    }
    Dialogue d = dialogue_from_json(record, line);
    if (!seen.insert(d.id).second)
      throw InvariantViolation(d.id, {"unique-id", fmt::format("duplicate dialogue_id on line {}", line)});
    if (mode == LoadMode::kChecked) {
      auto violations = validate(d);
      if (!violations.empty()) throw InvariantViolation(d.id, violations.front());
    }
    dialogues.push_back(std::move(d));
  });
  return dialogues;
}

std::vector<Dialogue> load_dataset(const std::filesystem::path& path, LoadMode mode) {
  std::istringstream in(io::read_file(path));
  return read_dataset(in, mode);
}

void write_dataset(std::ostream& out, std::span<const Dialogue> dialogues) {
  for (const auto& d : dialogues) out << to_json(d).dump() << '\n';
}

std::vector<Violation> validate(const Dialogue& d) {
  std::vector<Violation> out;
  auto add = [&](std::string rule, std::string detail) {
    out.push_back({std::move(rule), std::move(detail)});
  };
  const std::size_t n = d.utterances.size();

  if (n == 0) add("empty-dialogue", "dialogue has no utterances");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = d.utterances[i];
    if (u.index != i)
      add("utterance-index", fmt::format("utterance at position {} has index {}", i, u.index));
    if (text::trim(u.text).empty())
      add("utterance-text", fmt::format("utterance {} is empty", i));
  }

  for (std::size_t qi = 0; qi < d.quadruples.size(); ++qi) {
    const Quadruple& q = d.quadruples[qi];
    const std::string where = indexed("quadruples", qi);
    bool anchors_ok = true;
    auto check_range = [&](std::size_t anchor, std::string_view name) {
      if (anchor >= n) {
        add("anchor-range", fmt::format("{}.{} = {} but the dialogue has {} utterances", where, name, anchor, n));
        anchors_ok = false;
      }
    };
    check_range(q.explicit_utt, "explicit_utt");
    check_range(q.opinion_utt, "opinion_utt");
    if (q.implicit_utt) check_range(*q.implicit_utt, "implicit_utt");

    if (q.explicit_utt > q.opinion_utt)
      add("anchor-order", fmt::format("{}: explicit_utt {} comes after opinion_utt {}", where,
                                      q.explicit_utt, q.opinion_utt));
    if (q.implicit_aspect.has_value() != q.implicit_utt.has_value())
      add("implicit-pairing", fmt::format("{}: implicit and implicit_utt must be both present or both null", where));
    else if (q.implicit_utt && *q.implicit_utt != q.opinion_utt)
      add("implicit-anchor", fmt::format("{}: implicit_utt {} differs from opinion_utt {}", where,
                                         *q.implicit_utt, q.opinion_utt));

    if (anchors_ok) {
      if (!contains_span(d.utterances[q.explicit_utt].text, q.explicit_aspect))
        add("explicit-substring", fmt::format("{}: \"{}\" not found in utterance {}", where,
                                              q.explicit_aspect, q.explicit_utt));
      if (!contains_span(d.utterances[q.opinion_utt].text, q.opinion))
        add("opinion-substring", fmt::format("{}: \"{}\" not found in utterance {}", where, q.opinion,
                                             q.opinion_utt));
    }
  }

  for (std::size_t ci = 0; ci < d.aspect_chains.size(); ++ci) {
    const AspectChain& c = d.aspect_chains[ci];
    const std::string where = indexed("aspect_chains", ci);
    if (c.labels.size() != n)
      add("chain-length", fmt::format("{} (\"{}\"): {} labels for {} utterances", where,
                                      c.explicit_aspect, c.labels.size(), n));
    bool in_range = true;
    for (int label : c.labels)
      if (label < 0 || label > 2) in_range = false;
    if (!in_range) add("chain-label-range", fmt::format("{}: labels must be 0, 1 or 2", where));
    if (std::find(c.labels.begin(), c.labels.end(), 2) == c.labels.end())
      add("chain-explicit-presence", fmt::format("{} (\"{}\"): no utterance labelled 2", where, c.explicit_aspect));
  }
  return out;
}

std::vector<Violation> guideline_warnings(const Dialogue& d) {
  std::vector<Violation> out;
  std::unordered_set<std::string> quad_explicits;
  for (const auto& q : d.quadruples) {
    quad_explicits.insert(text::span_key(q.explicit_aspect));
    if (q.implicit_aspect && text::span_key(*q.implicit_aspect) == text::span_key(q.explicit_aspect))
      out.push_back({"implicit-is-explicit",
                     fmt::format("implicit aspect \"{}\" repeats the explicit aspect; it should be a "
                                 "pronoun or coreferent, or null",
                                 *q.implicit_aspect)});
  }
  for (const auto& c : d.aspect_chains) {
    if (!quad_explicits.count(text::span_key(c.explicit_aspect)))
      out.push_back({"aspect-without-opinion",
                     fmt::format("chain \"{}\" has no quadruple; aspects without an opinion are not annotated",
                                 c.explicit_aspect)});
  }
  return out;
}

std::span<const std::string_view> annotation_guidelines() { return kGuidelines; }

std::size_t chain_length(const AspectChain& chain) {
  return static_cast<std::size_t>(
      std::count_if(chain.labels.begin(), chain.labels.end(), [](int l) { return l == 1 || l == 2; }));
}

DatasetStats stats(std::span<const Dialogue> dialogues) {
  DatasetStats s;
  std::size_t chain_sum = 0;
  for (const auto& d : dialogues) {
    ++s.n_dialogues;
    s.n_utterances += d.utterances.size();
    for (const auto& c : d.aspect_chains) {
      ++s.n_explicit;
      s.n_implicit += static_cast<std::size_t>(std::count(c.labels.begin(), c.labels.end(), 1));
      const std::size_t len = chain_length(c);
      chain_sum += len;
      s.chain_max = std::max(s.chain_max, len);
    }
    for (const auto& q : d.quadruples) {
      switch (q.polarity) {
        case Polarity::kPositive: ++s.n_pos; break;
        case Polarity::kNeutral: ++s.n_neu; break;
        case Polarity::kNegative: ++s.n_neg; break;
      }
    }
  }
  s.n_total = s.n_pos + s.n_neu + s.n_neg;
  s.chain_avg = s.n_explicit == 0 ? 0.0 : static_cast<double>(chain_sum) / static_cast<double>(s.n_explicit);
  return s;
}

std::string format_stats_table(const DatasetStats& s, std::string_view split) {
  std::string out;
  out += fmt::format("{:<8} {:>24} {:>10} {:>10} {:>6} {:>6} {:>7} {:>7} {:>7} {:>7}\n", "Split",
                     "#Utterances(Dialogues)", "#Explicit", "#Implicit", "#Max", "#Avg", "#Pos", "#Neu",
                     "#Neg", "#Total");
  out += fmt::format("{:<8} {:>24} {:>10} {:>10} {:>6} {:>6.2f} {:>7} {:>7} {:>7} {:>7}\n", split,
                     fmt::format("{}({})", s.n_utterances, s.n_dialogues), s.n_explicit, s.n_implicit,
                     s.chain_max, s.chain_avg, s.n_pos, s.n_neu, s.n_neg, s.n_total);
  return out;
}

nlohmann::json to_json(const DatasetStats& s) {
  return {{"n_utterances", s.n_utterances}, {"n_dialogues", s.n_dialogues}, {"n_explicit", s.n_explicit},
          {"n_implicit", s.n_implicit},     {"chain_max", s.chain_max},     {"chain_avg", s.chain_avg},
          {"n_pos", s.n_pos},               {"n_neu", s.n_neu},             {"n_neg", s.n_neg},
          {"n_total", s.n_total}};
}

Agreement agreement(std::span<const Dialogue> a, std::span<const Dialogue> b) {
  std::unordered_set<std::string> ids_a, ids_b;
  for (const auto& d : a) ids_a.insert(d.id);
  for (const auto& d : b) ids_b.insert(d.id);
  if (ids_a != ids_b) throw DataError("agreement: the two annotation sets cover different dialogue_ids");

  auto items = [](std::span<const Dialogue> ds) {
    std::vector<evaluation::Tuple> out;
    for (const auto& d : ds)
      for (const auto& q : d.quadruples) {
        evaluation::Tuple t = evaluation::project(parsing::to_fragment(q), evaluation::Projection::kQuadruple);
        t.insert(t.begin(), d.id);
        out.push_back(std::move(t));
      }
    return out;
  };
  const auto gold = items(a);
  const auto pred = items(b);
  const evaluation::MatchCounts counts = evaluation::match_sets(gold, pred);
  const std::size_t union_size = counts.n_gold + counts.n_pred - counts.n_correct;
  if (union_size == 0) return {100.0, 100.0};
  return {100.0 * evaluation::prf(counts).f1,
          100.0 * static_cast<double>(counts.n_correct) / static_cast<double>(union_size)};
}

Dialogue worked_example() {
  Dialogue d;
  d.id = "worked-example";
  d.utterances = {
      {0, "A", "Have you been to the cinema lately?"},
      {1, "B", "Yes, a relative took me last week and the popcorn was good."},
      {2, "A", "Did you watch Wen Chaorong? Zhang Zhongwei plays the lead."},
      {3, "B", "Not yet, your recommendation should be good to see."},
      {4, "A", "I heard this movie has a bad reputation, but Zhang Zhongwei is pretty good."},
  };
  d.quadruples = {
      {"Wen Chaorong", 2, "this movie", 4, "bad reputation", 4, Polarity::kNegative},
      {"Zhang Zhongwei", 2, std::nullopt, std::nullopt, "pretty good", 4, Polarity::kPositive},
  };
  d.aspect_chains = {
      {"Wen Chaorong", {0, 0, 2, 0, 1}},
      {"Zhang Zhongwei", {0, 0, 2, 0, 2}},
  };
  return d;
}

}  // namespace chatasu::corpus
