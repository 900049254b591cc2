#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chatasu/corpus.hpp"
#include "chatasu/error.hpp"
#include "chatasu/prompting.hpp"
#include "chatasu/reward.hpp"

namespace chatasu::gateway {

// Transport failures and backend responses that cannot be used.
class BackendError : public DataError {
 public:
  using DataError::DataError;
};

// Wire dialects understood by the HTTP backend.
enum class Api {
  kNative,              // {"choices": [{"text", "scores"}]}
  kOpenAiCompletions,   // choices[].text, choices[].logprobs.token_logprobs
  kOpenAiChat,          // choices[].message.content, choices[].logprobs.content[].logprob
};

std::string_view to_string(Api api);
Api api_from_string(std::string_view name);

struct BackendConfig {
  std::string endpoint;  // http[s]://host[:port]/path
  // Name of the environment variable holding the bearer token. The token
  // itself never appears in configuration, logs or manifests.
  std::string auth_env;
  std::string model;
  Api api = Api::kNative;
  std::size_t n_candidates = 4;
  double timeout_s = 60.0;
  int max_retries = 3;
  double backoff_base_s = 0.5;
  std::size_t max_in_flight = 4;

  void check() const;
};

// One prompt to send; prompt_id ties the generation back to its input.
struct PromptRecord {
  std::string prompt_id;
  std::string dialogue_id;
  prompting::Task task = prompting::Task::kAsu;
  std::string explicit_aspect;  // ACR prompts only
  std::string prompt;
};

struct GenerationRecord {
  std::string prompt_id;
  std::string dialogue_id;
  prompting::Task task = prompting::Task::kAsu;
  std::string explicit_aspect;
  reward::GenerationResult result;
};

nlohmann::json to_json(const PromptRecord& record);
PromptRecord prompt_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GenerationRecord& record);
GenerationRecord generation_record_from_json(const nlohmann::json& j);

std::vector<PromptRecord> read_prompts(std::istream& in);
std::vector<PromptRecord> load_prompts(const std::filesystem::path& path);
std::vector<GenerationRecord> read_generations(std::istream& in);
std::vector<GenerationRecord> load_generations(const std::filesystem::path& path);
std::string generations_jsonl(std::span<const GenerationRecord> records);
std::string prompts_jsonl(std::span<const PromptRecord> records);

// One prompt per dialogue for an ASU template, one per aspect chain for an
// ACR template. prompt_id is "<dialogue_id>" or "<dialogue_id>#<chain index>".
std::vector<PromptRecord> build_prompts(std::span<const corpus::Dialogue> dialogues, const prompting::PromptTemplate& tmpl,
                                        std::vector<std::string>* warnings = nullptr);

nlohmann::json request_body(const BackendConfig& config, std::string_view prompt);
// Throws BackendError naming the first missing or mistyped field.
reward::GenerationResult parse_response(std::string_view body, Api api);

class HttpBackend {
 public:
  explicit HttpBackend(BackendConfig config);

  // Retries connection failures, timeouts, 429 and 5xx with exponential
  // backoff and the identical request body.
  reward::GenerationResult generate(std::string_view prompt);

  // Results in input order; at most max_in_flight requests are open at once.
  std::vector<GenerationRecord> generate_all(std::span<const PromptRecord> prompts);

  std::size_t attempts() const { return attempts_.load(); }
  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
  std::string token_;
  std::atomic<std::size_t> attempts_{0};
};

enum class MockBehavior { kFaithful, kNoisy, kRepetitive, kGibberish };

std::string_view to_string(MockBehavior behavior);
MockBehavior mock_behavior_from_string(std::string_view name);

struct MockProfile {
  MockBehavior behavior = MockBehavior::kFaithful;
  prompting::Task task = prompting::Task::kAsu;
  std::vector<corpus::Quadruple> gold_quadruples;  // ASU
  std::vector<int> gold_labels;                    // ACR
  std::size_t outputs = 4;
  std::size_t scores_per_output = 3;
};

// Offline stand-in for a model. Deterministic in (prompt, seed). Faithful
// outputs are distinct surface variants that all parse back to the gold
// answer; repetitive outputs are one text repeated.
reward::GenerationResult mock_generate(std::string_view prompt, const MockProfile& profile, std::uint64_t seed);

// Mock generations for every prompt, looking the gold answer up in
// `dialogues` by dialogue id (and aspect for ACR prompts).
std::vector<GenerationRecord> mock_generate_all(std::span<const PromptRecord> prompts,
                                                std::span<const corpus::Dialogue> dialogues,
                                                MockBehavior behavior, std::size_t outputs,
                                                std::size_t scores_per_output, std::uint64_t seed);

}  // namespace chatasu::gateway
