#include "chatasu/parsing.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "chatasu/text.hpp"

namespace chatasu::parsing {

QuadrupleFragment to_fragment(const corpus::Quadruple& q) {
  return {q.explicit_aspect, q.implicit_aspect, q.opinion, q.polarity,
          q.explicit_utt,    q.implicit_utt,    q.opinion_utt};
}

std::string AcrParseError::message() const {
  if (kind == Kind::kNoSequence) return "no 0/1/2 label sequence found";
  return fmt::format("label sequence has length {} but the dialogue has {} utterances", found, expected);
}

std::string render_asu_output(const QuadrupleFragment& q) {
  const std::string_view implicit = q.implicit_aspect ? std::string_view(*q.implicit_aspect) : "null";
  return fmt::format(
      "The opinion is \"{}\". The sentiment tendency is \"{}\". The opinion refers to the explicit "
      "aspect \"{}\". The pronoun of \"{}\" is \"{}\".",
      q.opinion, corpus::to_string(q.polarity), q.explicit_aspect, q.explicit_aspect, implicit);
}

std::string render_asu_output(const corpus::Quadruple& q) { return render_asu_output(to_fragment(q)); }

std::string render_asu_output(std::span<const corpus::Quadruple> quadruples) {
  std::string out;
  for (const auto& q : quadruples) {
    if (!out.empty()) out += '\n';
    out += render_asu_output(q);
  }
  return out;
}

std::string render_acr_output(std::span<const int> labels) {
  return fmt::format("[{}]", fmt::join(labels, ", "));
}

std::optional<Polarity> parse_polarity_word(std::string_view word) {
  const std::string w = text::to_lower_ascii(text::trim(word));
  if (w == "pos" || w == "positive" || w == "积极" || w == "正面" || w == "正向") return Polarity::kPositive;
  if (w == "neu" || w == "neutral" || w == "中性" || w == "中立") return Polarity::kNeutral;
  if (w == "neg" || w == "negative" || w == "消极" || w == "负面" || w == "负向") return Polarity::kNegative;
  return std::nullopt;
}

namespace {

// Folds quote variants onto '"'. Everything else is copied through.
std::string fold_quotes(std::string_view s) {
  static constexpr std::array<std::string_view, 10> kDoubleQuotes = {
      "“", "”", "„", "‟", "″", "「", "」", "『", "』", "＂"};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 2, "``") == 0 || s.compare(i, 2, "''") == 0) {
      out += '"';
      i += 2;
      continue;
    }
    bool folded = false;
    for (std::string_view q : kDoubleQuotes) {
      if (s.compare(i, q.size(), q) == 0) {
        out += '"';
        i += q.size();
        folded = true;
        break;
      }
    }
    if (!folded) out += s[i++];
  }
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::size_t skip_spaces(std::string_view s, std::size_t pos) {
  while (pos < s.size() && is_space(s[pos])) ++pos;
  return pos;
}

// Matches a phrase of ASCII words, case-insensitively, with at least one
// whitespace character between words. Returns the end position.
std::optional<std::size_t> match_phrase(std::string_view s, std::size_t pos,
                                        std::initializer_list<std::string_view> words) {
  bool first = true;
  for (std::string_view w : words) {
    if (!first) {
      const std::size_t next = skip_spaces(s, pos);
      if (next == pos) return std::nullopt;
      pos = next;
    }
    first = false;
    if (pos + w.size() > s.size() || !text::iequals_ascii(s.substr(pos, w.size()), w)) return std::nullopt;
    pos += w.size();
  }
  if (pos < s.size() && is_alpha(s[pos])) return std::nullopt;
  return pos;
}

struct Quoted {
  std::string value;
  std::size_t end = 0;
};

std::optional<Quoted> match_quoted(std::string_view s, std::size_t pos) {
  pos = skip_spaces(s, pos);
  if (pos >= s.size() || s[pos] != '"') return std::nullopt;
  const std::size_t close = s.find('"', pos + 1);
  if (close == std::string_view::npos) return std::nullopt;
  return Quoted{std::string(text::trim(s.substr(pos + 1, close - pos - 1))), close + 1};
}

// Consumes an optional sentence terminator after optional whitespace.
std::size_t match_terminator(std::string_view s, std::size_t pos) {
  const std::size_t p = skip_spaces(s, pos);
  for (std::string_view t : {std::string_view("."), std::string_view("。"), std::string_view("．")}) {
    if (s.compare(p, t.size(), t) == 0) return p + t.size();
  }
  return pos;
}

enum class SentenceKind { kOpinion, kPolarity, kExplicit, kPronoun };

struct Sentence {
  SentenceKind kind;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string value;                     // the quoted span
  std::optional<std::string> implicit;  // pronoun sentences only; nullopt = null
};

std::optional<Sentence> match_sentence(std::string_view s, std::size_t pos) {
  auto finish = [&](SentenceKind kind, std::optional<std::size_t> after) -> std::optional<Sentence> {
    if (!after) return std::nullopt;
    auto q = match_quoted(s, *after);
    if (!q) return std::nullopt;
    return Sentence{kind, pos, match_terminator(s, q->end), std::move(q->value), std::nullopt};
  };
  if (auto r = finish(SentenceKind::kOpinion, match_phrase(s, pos, {"the", "opinion", "is"}))) return r;
  if (auto r = finish(SentenceKind::kPolarity, match_phrase(s, pos, {"the", "sentiment", "tendency", "is"})))
    return r;
  if (auto r = finish(SentenceKind::kExplicit,
                      match_phrase(s, pos, {"the", "opinion", "refers", "to", "the", "explicit", "aspect"})))
    return r;

  auto head = match_phrase(s, pos, {"the", "pronoun", "of"});
  if (!head) return std::nullopt;
  auto aspect = match_quoted(s, *head);
  if (!aspect) return std::nullopt;
  auto is_end = match_phrase(s, skip_spaces(s, aspect->end), {"is"});
  if (!is_end) return std::nullopt;
  Sentence sentence{SentenceKind::kPronoun, pos, 0, std::move(aspect->value), std::nullopt};
  if (auto implicit = match_quoted(s, *is_end)) {
    if (!implicit->value.empty() && !text::iequals_ascii(implicit->value, "null"))
      sentence.implicit = std::move(implicit->value);
    sentence.end = match_terminator(s, implicit->end);
    return sentence;
  }
  const std::size_t q = skip_spaces(s, *is_end);
  if (auto bare = match_phrase(s, q, {"null"})) {
    sentence.end = match_terminator(s, *bare);
    return sentence;
  }
  return std::nullopt;
}

struct Block {
  std::optional<Sentence> opinion, polarity, explicit_aspect, pronoun;

  bool empty() const { return !opinion && !polarity && !explicit_aspect && !pronoun; }

  std::optional<Sentence>& slot(SentenceKind kind) {
    switch (kind) {
      case SentenceKind::kOpinion: return opinion;
      case SentenceKind::kPolarity: return polarity;
      case SentenceKind::kExplicit: return explicit_aspect;
      case SentenceKind::kPronoun: return pronoun;
    }
    return opinion;
  }

  std::optional<QuadrupleFragment> fragment() const {
    if (!opinion || !polarity || !explicit_aspect || !pronoun) return std::nullopt;
    if (opinion->value.empty() || explicit_aspect->value.empty()) return std::nullopt;
    if (text::span_key(pronoun->value) != text::span_key(explicit_aspect->value)) return std::nullopt;
    auto p = parse_polarity_word(polarity->value);
    if (!p) return std::nullopt;
    QuadrupleFragment f;
    f.opinion = opinion->value;
    f.polarity = *p;
    f.explicit_aspect = explicit_aspect->value;
    f.implicit_aspect = pronoun->implicit;
    return f;
  }
};

}  // namespace

ParsedAsu parse_asu_output(std::string_view raw) {
  const std::string s = fold_quotes(raw);
  ParsedAsu out;
  std::vector<std::pair<std::size_t, std::string>> residue;

  auto keep_residue = [&](std::size_t begin, std::size_t end) {
    const std::string_view chunk = text::trim(std::string_view(s).substr(begin, end - begin));
    if (!chunk.empty()) residue.emplace_back(begin, std::string(chunk));
  };

  Block block;
  auto flush = [&] {
    if (block.empty()) return;
    if (auto f = block.fragment()) {
      out.quadruples.push_back(std::move(*f));
    } else {
      for (auto* part : {&block.opinion, &block.polarity, &block.explicit_aspect, &block.pronoun})
        if (*part) keep_residue((*part)->begin, (*part)->end);
    }
    block = Block{};
  };

  std::size_t pos = 0;
  std::size_t unmatched = 0;
  while (pos < s.size()) {
    const bool boundary = pos == 0 || !is_alpha(s[pos - 1]);
    std::optional<Sentence> sentence;
    if (boundary && (s[pos] == 't' || s[pos] == 'T')) sentence = match_sentence(s, pos);
    if (!sentence) {
      ++pos;
      continue;
    }
    keep_residue(unmatched, pos);
    pos = unmatched = sentence->end;
    auto& slot = block.slot(sentence->kind);
    if (slot) flush();
    block.slot(sentence->kind) = std::move(*sentence);
  }
  flush();
  keep_residue(unmatched, s.size());

  std::stable_sort(residue.begin(), residue.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [_, chunk] : residue) out.residue.push_back(std::move(chunk));
  return out;
}

AcrParseResult parse_acr_output(std::string_view s, std::size_t n_utterances) {
  auto is_label = [](char c) { return c == '0' || c == '1' || c == '2'; };
  std::size_t pos = 0;
  while (pos < s.size() && !is_label(s[pos])) ++pos;
  if (pos == s.size()) return AcrParseError{AcrParseError::Kind::kNoSequence, 0, n_utterances};

  static constexpr std::array<std::string_view, 4> kWideSeparators = {"，", "、", "［", "］"};
  std::vector<int> labels;
  while (pos < s.size()) {
    const char c = s[pos];
    if (is_label(c)) {
      labels.push_back(c - '0');
      ++pos;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ',' || c == '[' || c == ']' ||
               c == '(' || c == ')') {
      ++pos;
    } else {
      const auto wide = std::find_if(kWideSeparators.begin(), kWideSeparators.end(),
                                     [&](std::string_view w) { return s.compare(pos, w.size(), w) == 0; });
      if (wide == kWideSeparators.end()) break;
      pos += wide->size();
    }
  }
  if (labels.size() != n_utterances)
    return AcrParseError{AcrParseError::Kind::kLengthMismatch, labels.size(), n_utterances};
  return ParsedAcr{std::move(labels)};
}

}  // namespace chatasu::parsing
