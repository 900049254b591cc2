#include <doctest.h>

#include <set>

#include "chatasu/corpus.hpp"
#include "chatasu/prompting.hpp"

using namespace chatasu;
using prompting::PromptTemplate;
using prompting::Task;

namespace {

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

TEST_SUITE("prompting") {
  TEST_CASE("dialogue rendering") {
    corpus::Dialogue d;
    d.utterances = {{0, "A", "hi"}};
    CHECK(prompting::render_dialogue(d) == "A: hi");
    d.utterances.push_back({1, "B", "hello there"});
    CHECK(prompting::render_dialogue(d) == "A: hi\nB: hello there");

    const std::string five = prompting::render_dialogue(corpus::worked_example());
    CHECK(std::count(five.begin(), five.end(), '\n') == 4);
    CHECK(starts_with(five, "A: Have you been to the cinema lately?\n"));
    CHECK(five.find("B: Not yet, your recommendation should be good to see.\nA: I heard") != std::string::npos);
  }

  TEST_CASE("default ASU prompt opens with the instruction") {
    const auto p = prompting::build_asu_input(corpus::worked_example(), prompting::default_template(Task::kAsu));
    CHECK(starts_with(p, "You are now an information extraction model"));
    CHECK(p.find("\nA: Have you been to the cinema lately?") != std::string::npos);
  }

  TEST_CASE("joiner is inserted verbatim") {
    corpus::Dialogue d;
    d.utterances = {{0, "A", "hi"}};
    const PromptTemplate glued{Task::kAsu, "Extract.", ""};
    CHECK(prompting::build_asu_input(d, glued) == "Extract.A: hi");
    const PromptTemplate spaced{Task::kAsu, "Extract.", "\n\n"};
    CHECK(prompting::build_asu_input(d, spaced) == "Extract.\n\nA: hi");
  }

  TEST_CASE("custom Chinese instruction is kept unchanged") {
    const PromptTemplate zh{Task::kAsu, "请抽取对话中的观点四元组。", "\n"};
    const auto p = prompting::build_asu_input(corpus::worked_example(), zh);
    CHECK(starts_with(p, "请抽取对话中的观点四元组。\n"));
    CHECK(starts_with(prompting::build_asu_input(corpus::worked_example(), prompting::named_template("asu-zh")),
                      prompting::named_template("asu-zh").instruction));
  }

  TEST_CASE("ACR prompt places the aspect in the slot") {
    const auto tmpl = prompting::default_template(Task::kAcr);
    const auto p = prompting::build_acr_input(corpus::worked_example(), "Wen Chaorong", tmpl);
    CHECK(p.find("coreference of Wen Chaorong,") != std::string::npos);
    CHECK(p.find(prompting::kAspectPlaceholder) == std::string::npos);
    CHECK(starts_with(p, "You are now an classification model"));
  }

  TEST_CASE("placeholder-free ACR instruction is rejected") {
    const PromptTemplate bad{Task::kAcr, "Label every utterance.", "\n"};
    CHECK_THROWS_AS(prompting::build_acr_input(corpus::worked_example(), "Wen Chaorong", bad), UsageError);
  }

  TEST_CASE("task mismatch and empty instruction are usage errors") {
    CHECK_THROWS_AS(prompting::build_asu_input(corpus::worked_example(), prompting::default_template(Task::kAcr)),
                    UsageError);
    CHECK_THROWS_AS(prompting::build_asu_input(corpus::worked_example(), PromptTemplate{Task::kAsu, "  ", "\n"}),
                    UsageError);
  }

  TEST_CASE("unanchored aspect warns but still builds") {
    std::vector<std::string> warnings;
    const auto p = prompting::build_acr_input(corpus::worked_example(), "popcorn",
                                              prompting::default_template(Task::kAcr), &warnings);
    CHECK(p.find("popcorn") != std::string::npos);
    CHECK(warnings.size() == 1);
  }

  TEST_CASE("one ACR prompt per chain") {
    const auto prompts = prompting::build_acr_inputs(corpus::worked_example(), prompting::default_template(Task::kAcr));
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[0].first == "Wen Chaorong");
    CHECK(prompts[1].first == "Zhang Zhongwei");
    CHECK(prompts[0].second != prompts[1].second);
  }

  TEST_CASE("template documents") {
    const auto t = prompting::parse_template("task = \"acr\"\ninstruction = \"Mark {aspect}.\"\njoiner = \" | \"\n");
    CHECK(t.task == Task::kAcr);
    CHECK(t.joiner == " | ");
    corpus::Dialogue d;
    d.utterances = {{0, "A", "hi"}};
    CHECK(prompting::build_acr_input(d, "x", t) == "Mark x. | A: hi");

    CHECK_THROWS_AS(prompting::parse_template("task = \"asu\"\n"), DataError);
    CHECK_THROWS_AS(prompting::parse_template("task = = ="), DataError);
    CHECK_THROWS_AS(prompting::parse_template("task = \"summarize\"\ninstruction = \"x\"\n"), UsageError);
    CHECK_THROWS_AS(prompting::named_template("nope"), UsageError);
    std::set<std::string_view> names;
    for (auto n : prompting::template_names()) names.insert(n);
    CHECK(names.size() == 4);
  }
}
