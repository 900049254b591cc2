#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chatasu/corpus.hpp"

namespace chatasu::prompting {

enum class Task { kAsu, kAcr };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);  // "ASU"/"ACR", any case

inline constexpr std::string_view kAspectPlaceholder = "{aspect}";

struct PromptTemplate {
  Task task = Task::kAsu;
  std::string instruction;
  std::string joiner = "\n";
};

// English instructions, verbatim.
PromptTemplate default_template(Task task);

// Built-in templates: "asu", "acr", "asu-zh", "acr-zh".
PromptTemplate named_template(std::string_view name);
std::vector<std::string_view> template_names();

// Template documents are TOML with `task`, `instruction` and optional
// `joiner` keys.
PromptTemplate parse_template(std::string_view document);
PromptTemplate load_template(const std::filesystem::path& path);

// "<speaker>: <text>" per utterance, newline separated.
std::string render_dialogue(const corpus::Dialogue& dialogue);

std::string build_asu_input(const corpus::Dialogue& dialogue, const PromptTemplate& tmpl);

// Substitutes every {aspect} in the instruction with `explicit_aspect`. When
// the aspect anchors none of the dialogue's chains a note is appended to
// `warnings` (if given) and the prompt is still built.
std::string build_acr_input(const corpus::Dialogue& dialogue, std::string_view explicit_aspect,
                            const PromptTemplate& tmpl, std::vector<std::string>* warnings = nullptr);

// One (explicit aspect, prompt) pair per aspect chain, in chain order.
std::vector<std::pair<std::string, std::string>> build_acr_inputs(const corpus::Dialogue& dialogue,
                                                                  const PromptTemplate& tmpl);

}  // namespace chatasu::prompting
