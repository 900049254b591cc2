#include "chatasu/prompting.hpp"

#include <fmt/format.h>
#include <toml.hpp>

#include "chatasu/io.hpp"
#include "chatasu/text.hpp"

namespace chatasu::prompting {

namespace {

constexpr std::string_view kAsuInstruction =
    "You are now an information extraction model. Please help me to extract opinions from the input "
    "and tell me the sentiment polarity of the opinions, what the explicit aspect referred to by the "
    "opinion is, and what pronoun is used for the explicit aspect in the utterance where the opinion "
    "occurs.";

constexpr std::string_view kAcrInstruction =
    "You are now an classification model to judge which utterance in this dialogue appears to be the "
    "coreference of {aspect}, outputs 2 if it is an explicit aspect, 1 if it is an implicit aspect, and "
    "otherwise 0. Output a sequence of 0, 1, and 2, the length of which is the number of dialogues.";

constexpr std::string_view kAsuInstructionZh =
    "你现在是一个信息抽取模型。请帮我从输入中抽取观点，并告诉我观点的情感极性、观点所指的显式方面是什么，"
    "以及在观点所在的话语中显式方面使用了什么代词。";

constexpr std::string_view kAcrInstructionZh =
    "你现在是一个分类模型，判断这段对话中哪些话语出现了{aspect}的共指，如果是显式方面输出2，如果是隐式方面输出1，"
    "否则输出0。输出一个由0、1和2组成的序列，其长度为对话中话语的数量。";

void check(const PromptTemplate& t, Task expected) {
  if (t.task != expected)
    throw UsageError(fmt::format("template is for {} but a {} prompt was requested", to_string(t.task),
                                 to_string(expected)));
  if (text::trim(t.instruction).empty()) throw UsageError("template instruction is empty");
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

std::string_view to_string(Task task) { return task == Task::kAsu ? "ASU" : "ACR"; }

Task task_from_string(std::string_view name) {
  if (text::iequals_ascii(name, "asu")) return Task::kAsu;
  if (text::iequals_ascii(name, "acr")) return Task::kAcr;
  throw UsageError(fmt::format("unknown task '{}' (expected ASU or ACR)", name));
}

PromptTemplate default_template(Task task) {
  return task == Task::kAsu ? PromptTemplate{Task::kAsu, std::string(kAsuInstruction), "\n"}
                            : PromptTemplate{Task::kAcr, std::string(kAcrInstruction), "\n"};
}

PromptTemplate named_template(std::string_view name) {
  if (name == "asu") return default_template(Task::kAsu);
  if (name == "acr") return default_template(Task::kAcr);
  if (name == "asu-zh") return {Task::kAsu, std::string(kAsuInstructionZh), "\n"};
  if (name == "acr-zh") return {Task::kAcr, std::string(kAcrInstructionZh), "\n"};
  throw UsageError(fmt::format("unknown template '{}'", name));
}

std::vector<std::string_view> template_names() { return {"asu", "acr", "asu-zh", "acr-zh"}; }

PromptTemplate parse_template(std::string_view document) {
  toml::table table;
  try {
    table = toml::parse(document);
  } catch (const toml::parse_error& e) {
    throw DataError(fmt::format("template: {}", e.description()));
  }
  auto task = table["task"].value<std::string>();
  auto instruction = table["instruction"].value<std::string>();
  if (!task) throw DataError("template: missing string key 'task'");
  if (!instruction) throw DataError("template: missing string key 'instruction'");
  PromptTemplate t{task_from_string(*task), *instruction,
                   table["joiner"].value<std::string>().value_or("\n")};
  if (text::trim(t.instruction).empty()) throw DataError("template: instruction is empty");
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  return parse_template(io::read_file(path));
}

std::string render_dialogue(const corpus::Dialogue& dialogue) {
  std::string out;
  for (const auto& u : dialogue.utterances) {
    if (!out.empty()) out += '\n';
    out += u.speaker;
    out += ": ";
    out += u.text;
  }
  return out;
}

std::string build_asu_input(const corpus::Dialogue& dialogue, const PromptTemplate& tmpl) {
  check(tmpl, Task::kAsu);
  return tmpl.instruction + tmpl.joiner + render_dialogue(dialogue);
}

std::string build_acr_input(const corpus::Dialogue& dialogue, std::string_view explicit_aspect,
                            const PromptTemplate& tmpl, std::vector<std::string>* warnings) {
  check(tmpl, Task::kAcr);
  if (tmpl.instruction.find(kAspectPlaceholder) == std::string::npos)
    throw UsageError("ACR template instruction has no {aspect} placeholder");
  if (warnings) {
    const std::string key = text::span_key(explicit_aspect);
    bool anchored = false;
    for (const auto& c : dialogue.aspect_chains) anchored = anchored || text::span_key(c.explicit_aspect) == key;
    if (!anchored)
      warnings->push_back(fmt::format("dialogue '{}': \"{}\" anchors no aspect chain", dialogue.id, explicit_aspect));
  }
  return replace_all(tmpl.instruction, kAspectPlaceholder, explicit_aspect) + tmpl.joiner +
         render_dialogue(dialogue);
}

std::vector<std::pair<std::string, std::string>> build_acr_inputs(const corpus::Dialogue& dialogue,
                                                                  const PromptTemplate& tmpl) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& c : dialogue.aspect_chains)
    out.emplace_back(c.explicit_aspect, build_acr_input(dialogue, c.explicit_aspect, tmpl));
  return out;
}

}  // namespace chatasu::prompting
