#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "chatasu/corpus.hpp"

namespace chatasu::parsing {

using corpus::Polarity;

// A quadruple as recovered from model text. Utterance anchors are only known
// when the fragment came from gold annotations.
struct QuadrupleFragment {
  std::string explicit_aspect;
  std::optional<std::string> implicit_aspect;
  std::string opinion;
  Polarity polarity = Polarity::kNeutral;
  std::optional<std::size_t> explicit_utt;
  std::optional<std::size_t> implicit_utt;
  std::optional<std::size_t> opinion_utt;

  bool operator==(const QuadrupleFragment&) const = default;
};

QuadrupleFragment to_fragment(const corpus::Quadruple& quadruple);

struct ParsedAsu {
  std::vector<QuadrupleFragment> quadruples;
  // Text the template matcher could not account for, in input order.
  std::vector<std::string> residue;

  bool complete() const { return residue.empty(); }
};

struct ParsedAcr {
  std::vector<int> labels;
};

struct AcrParseError {
  enum class Kind { kNoSequence, kLengthMismatch };
  Kind kind = Kind::kNoSequence;
  std::size_t found = 0;
  std::size_t expected = 0;

  std::string message() const;
};

using AcrParseResult = std::variant<ParsedAcr, AcrParseError>;

// Canonical four-sentence answer:
//   The opinion is "<o>". The sentiment tendency is "<p>". The opinion refers
//   to the explicit aspect "<e>". The pronoun of "<e>" is "<r>".
// with "null" standing in for an absent implicit aspect.
std::string render_asu_output(const QuadrupleFragment& quadruple);
std::string render_asu_output(const corpus::Quadruple& quadruple);
// Blocks for several quadruples, one per line.
std::string render_asu_output(std::span<const corpus::Quadruple> quadruples);

// "[2, 0, 1, 0]"
std::string render_acr_output(std::span<const int> labels);

// Polarity words as models write them: POS/NEU/NEG, positive/neutral/negative
// (any case) and the Chinese 积极/正面/中性/消极/负面.
std::optional<Polarity> parse_polarity_word(std::string_view word);

// Template-anchored extraction with bounded tolerance: curly, CJK and
// LaTeX-style quotes, flexible whitespace and casing of the fixed phrases,
// third/fourth sentence in either order, any number of concatenated blocks.
// Never throws; whatever does not fit lands in residue.
ParsedAsu parse_asu_output(std::string_view text);

// Takes the first maximal run of 0/1/2 digits (spaces, commas and brackets
// may separate them) and accepts it iff its length is n_utterances.
AcrParseResult parse_acr_output(std::string_view text, std::size_t n_utterances);

// Prediction files, one JSON object per line.
struct AsuPrediction {
  std::string dialogue_id;
  std::vector<QuadrupleFragment> quadruples;
};

struct AcrPrediction {
  std::string dialogue_id;
  std::string explicit_aspect;
  std::vector<int> labels;
};

nlohmann::json to_json(const QuadrupleFragment& fragment);
QuadrupleFragment fragment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AsuPrediction& prediction);
nlohmann::json to_json(const AcrPrediction& prediction);

std::vector<AsuPrediction> read_asu_predictions(std::istream& in);
std::vector<AcrPrediction> read_acr_predictions(std::istream& in);
std::vector<AsuPrediction> load_asu_predictions(const std::filesystem::path& path);
std::vector<AcrPrediction> load_acr_predictions(const std::filesystem::path& path);
void write_asu_predictions(std::ostream& out, std::span<const AsuPrediction> predictions);
void write_acr_predictions(std::ostream& out, std::span<const AcrPrediction> predictions);

// Gold annotations in prediction form, for identity checks and agreement.
std::vector<AsuPrediction> asu_predictions_from(std::span<const corpus::Dialogue> dialogues);
std::vector<AcrPrediction> acr_predictions_from(std::span<const corpus::Dialogue> dialogues);

}  // namespace chatasu::parsing
