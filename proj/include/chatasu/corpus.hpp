#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chatasu/error.hpp"

namespace chatasu::corpus {

enum class Polarity { kPositive, kNeutral, kNegative };

// "POS", "NEU" or "NEG".
std::string_view to_string(Polarity polarity);
// Accepts exactly the three wire labels; anything else is nullopt.
std::optional<Polarity> polarity_from_label(std::string_view label);

struct Utterance {
  std::size_t index = 0;
  std::string speaker;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

// One annotated (explicit, implicit, opinion, polarity) tuple with the
// utterance each span was taken from. An absent implicit aspect is written
// as null on the wire.
struct Quadruple {
  std::string explicit_aspect;
  std::size_t explicit_utt = 0;
  std::optional<std::string> implicit_aspect;
  std::optional<std::size_t> implicit_utt;
  std::string opinion;
  std::size_t opinion_utt = 0;
  Polarity polarity = Polarity::kNeutral;

  bool operator==(const Quadruple&) const = default;
};

// Per-utterance mention labels for one explicit aspect: 2 marks an explicit
// mention, 1 a coreferent (implicit) mention, 0 neither.
struct AspectChain {
  std::string explicit_aspect;
  std::vector<int> labels;

  bool operator==(const AspectChain&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
  std::vector<Quadruple> quadruples;
  std::vector<AspectChain> aspect_chains;

  bool operator==(const Dialogue&) const = default;
};

struct Violation {
  std::string rule;
  std::string detail;
};

struct DatasetStats {
  std::size_t n_utterances = 0;
  std::size_t n_dialogues = 0;
  std::size_t n_explicit = 0;
  std::size_t n_implicit = 0;
  std::size_t chain_max = 0;
  double chain_avg = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neu = 0;
  std::size_t n_neg = 0;
  std::size_t n_total = 0;

  bool operator==(const DatasetStats&) const = default;
};

// Thrown for records that do not match the wire schema. Carries the 1-based
// line number and the offending field path (e.g. "quadruples[0].polarity").
class MalformedRecord : public DataError {
 public:
  MalformedRecord(std::size_t line, std::string field, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// Thrown when a structurally valid record breaks a dataset invariant.
class InvariantViolation : public DataError {
 public:
  InvariantViolation(std::string dialogue_id, Violation violation);
  const std::string& dialogue_id() const { return dialogue_id_; }
  const Violation& violation() const { return violation_; }

 private:
  std::string dialogue_id_;
  Violation violation_;
};

enum class LoadMode {
  kChecked,    // every invariant enforced, first breach throws
  kUnchecked,  // schema only; callers run validate() themselves
};

std::vector<Dialogue> load_dataset(const std::filesystem::path& path,
                                   LoadMode mode = LoadMode::kChecked);
std::vector<Dialogue> read_dataset(std::istream& in, LoadMode mode = LoadMode::kChecked);

Dialogue dialogue_from_json(const nlohmann::json& record, std::size_t line = 0);
nlohmann::json to_json(const Dialogue& dialogue);
nlohmann::json quadruple_to_json(const Quadruple& quadruple);
void write_dataset(std::ostream& out, std::span<const Dialogue> dialogues);

// Mechanical rule check. Rules: utterance-index, utterance-text, empty-dialogue,
// anchor-range, anchor-order, implicit-pairing, implicit-anchor,
// explicit-substring, opinion-substring, chain-length, chain-label-range,
// chain-explicit-presence.
std::vector<Violation> validate(const Dialogue& dialogue);

// Heuristic hints for the annotation guidelines that need human judgment.
// These are advisory and never fail a load.
std::vector<Violation> guideline_warnings(const Dialogue& dialogue);
std::span<const std::string_view> annotation_guidelines();

// A chain's length is the number of utterances it labels 1 or 2.
std::size_t chain_length(const AspectChain& chain);

// #Explicit counts aspect chains (one per explicit aspect entity) and
// #Implicit counts label-1 mentions across those chains.
DatasetStats stats(std::span<const Dialogue> dialogues);
std::string format_stats_table(const DatasetStats& stats, std::string_view split = "Data");
nlohmann::json to_json(const DatasetStats& stats);

struct Agreement {
  double f1 = 0.0;        // percentage
  double accuracy = 0.0;  // percentage, matches over union size
};

// Exact-match agreement between two annotators over the same dialogues;
// `a` plays gold and `b` prediction. Throws DataError when the dialogue id
// sets differ.
Agreement agreement(std::span<const Dialogue> a, std::span<const Dialogue> b);

// A five-utterance movie-chat dialogue with two aspect chains ("Wen Chaorong"
// with its coreferent "this movie", and "Zhang Zhongwei"). Used by the
// default simulation scenario, the fixtures and the tests.
Dialogue worked_example();

}  // namespace chatasu::corpus
