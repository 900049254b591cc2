#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "chatasu/io.hpp"
#include "chatasu/parsing.hpp"

namespace chatasu::parsing {

using nlohmann::json;

namespace {

[[noreturn]] void bad_record(std::size_t line, std::string_view what) {
  throw DataError(fmt::format("line {}: {}", line, what));
}

std::optional<std::size_t> optional_anchor(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer() || it->get<long long>() < 0)
    throw DataError(fmt::format("field '{}': expected a non-negative integer", key));
  return it->get<std::size_t>();
}

json parse_line(std::size_t line, std::string_view content) {
  try {
    json j = json::parse(content);
    if (!j.is_object()) bad_record(line, "expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    bad_record(line, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

json to_json(const QuadrupleFragment& f) {
  json j;
  j["explicit"] = f.explicit_aspect;
  j["implicit"] = f.implicit_aspect ? json(*f.implicit_aspect) : json(nullptr);
  j["opinion"] = f.opinion;
  j["polarity"] = std::string(corpus::to_string(f.polarity));
  if (f.explicit_utt) j["explicit_utt"] = *f.explicit_utt;
  if (f.implicit_utt) j["implicit_utt"] = *f.implicit_utt;
  if (f.opinion_utt) j["opinion_utt"] = *f.opinion_utt;
  return j;
}

QuadrupleFragment fragment_from_json(const json& j) {
  if (!j.is_object()) throw DataError("quadruple: expected an object");
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw DataError(fmt::format("field '{}': expected a string", key));
    return it->get<std::string>();
  };
  QuadrupleFragment f;
  f.explicit_aspect = str("explicit");
  f.opinion = str("opinion");
  const std::string label = str("polarity");
  auto polarity = corpus::polarity_from_label(label);
  if (!polarity) throw DataError(fmt::format("field 'polarity': unknown polarity \"{}\"", label));
  f.polarity = *polarity;
  if (auto it = j.find("implicit"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("field 'implicit': expected a string or null");
    f.implicit_aspect = it->get<std::string>();
  }
  f.explicit_utt = optional_anchor(j, "explicit_utt");
  f.implicit_utt = optional_anchor(j, "implicit_utt");
  f.opinion_utt = optional_anchor(j, "opinion_utt");
  return f;
}

json to_json(const AsuPrediction& p) {
  json quads = json::array();
  for (const auto& q : p.quadruples) quads.push_back(to_json(q));
  return {{"dialogue_id", p.dialogue_id}, {"quadruples", std::move(quads)}};
}

json to_json(const AcrPrediction& p) {
  return {{"dialogue_id", p.dialogue_id}, {"explicit", p.explicit_aspect}, {"labels", p.labels}};
}

std::vector<AsuPrediction> read_asu_predictions(std::istream& in) {
  std::vector<AsuPrediction> out;
  io::for_each_line(in, [&](std::size_t line, std::string_view content) {
    const json j = parse_line(line, content);
    try {
      AsuPrediction p;
      p.dialogue_id = j.at("dialogue_id").get<std::string>();
      for (const auto& q : j.at("quadruples")) p.quadruples.push_back(fragment_from_json(q));
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      bad_record(line, e.what());
    } catch (const DataError& e) {
      bad_record(line, e.what());
    }
  });
  return out;
}

std::vector<AcrPrediction> read_acr_predictions(std::istream& in) {
  std::vector<AcrPrediction> out;
  io::for_each_line(in, [&](std::size_t line, std::string_view content) {
    const json j = parse_line(line, content);
    try {
      out.push_back({j.at("dialogue_id").get<std::string>(), j.at("explicit").get<std::string>(),
                     j.at("labels").get<std::vector<int>>()});
    } catch (const json::exception& e) {
      bad_record(line, e.what());
    }
  });
  return out;
}

std::vector<AsuPrediction> load_asu_predictions(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return read_asu_predictions(in);
}

std::vector<AcrPrediction> load_acr_predictions(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return read_acr_predictions(in);
}

void write_asu_predictions(std::ostream& out, std::span<const AsuPrediction> predictions) {
  for (const auto& p : predictions) out << to_json(p).dump() << '\n';
}

void write_acr_predictions(std::ostream& out, std::span<const AcrPrediction> predictions) {
  for (const auto& p : predictions) out << to_json(p).dump() << '\n';
}

std::vector<AsuPrediction> asu_predictions_from(std::span<const corpus::Dialogue> dialogues) {
  std::vector<AsuPrediction> out;
  for (const auto& d : dialogues) {
    AsuPrediction p{d.id, {}};
    for (const auto& q : d.quadruples) p.quadruples.push_back(to_fragment(q));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<AcrPrediction> acr_predictions_from(std::span<const corpus::Dialogue> dialogues) {
  std::vector<AcrPrediction> out;
  for (const auto& d : dialogues)
    for (const auto& c : d.aspect_chains) out.push_back({d.id, c.explicit_aspect, c.labels});
  return out;
}

}  // namespace chatasu::parsing
