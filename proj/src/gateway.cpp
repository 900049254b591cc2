#include "chatasu/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <istream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "chatasu/io.hpp"
#include "chatasu/text.hpp"

namespace chatasu::gateway {

using nlohmann::json;

std::string_view to_string(Api api) {
  switch (api) {
    case Api::kNative: return "native";
    case Api::kOpenAiCompletions: return "openai-completions";
    case Api::kOpenAiChat: return "openai-chat";
  }
  return "native";
}

Api api_from_string(std::string_view name) {
  if (name == "native") return Api::kNative;
  if (name == "openai-completions") return Api::kOpenAiCompletions;
  if (name == "openai-chat") return Api::kOpenAiChat;
  throw UsageError(fmt::format("unknown backend api '{}' (expected native, openai-completions or openai-chat)", name));
}

void BackendConfig::check() const {
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
    throw UsageError(fmt::format("backend endpoint '{}' must start with http:// or https://", endpoint));
  if (n_candidates < 2) throw UsageError("backend: n_candidates must be at least 2");
  if (!(timeout_s > 0.0)) throw UsageError("backend: timeout must be positive");
  if (max_retries < 0) throw UsageError("backend: max_retries must be non-negative");
  if (backoff_base_s < 0.0) throw UsageError("backend: backoff base must be non-negative");
  if (max_in_flight < 1) throw UsageError("backend: max_in_flight must be at least 1");
}

namespace {

[[noreturn]] void bad_record(std::size_t line, std::string_view what) {
  throw DataError(fmt::format("line {}: {}", line, what));
}

json parse_object_line(std::size_t line, std::string_view content) {
  try {
    json j = json::parse(content);
    if (!j.is_object()) bad_record(line, "expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    bad_record(line, std::string("invalid JSON: ") + e.what());
  }
}

const json& field(const json& j, std::string_view key, std::string_view path) {
  auto it = j.find(key);
  if (it == j.end()) throw BackendError(fmt::format("response: missing field '{}'", path));
  return *it;
}

std::vector<double> numbers(const json& arr, std::string_view path, std::string_view member = {}) {
  if (!arr.is_array()) throw BackendError(fmt::format("response: field '{}' is not an array", path));
  std::vector<double> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json* v = &arr[i];
    if (!member.empty()) {
      if (!v->is_object()) throw BackendError(fmt::format("response: field '{}[{}]' is not an object", path, i));
      v = &field(*v, member, fmt::format("{}[{}].{}", path, i, member));
    }
    if (v->is_null() && member.empty()) continue;  // first-token logprob is null in some APIs
    if (!v->is_number()) throw BackendError(fmt::format("response: field '{}[{}]' is not a number", path, i));
    out.push_back(v->get<double>());
  }
  return out;
}

std::string string_field(const json& j, std::string_view key, std::string_view path) {
  const json& v = field(j, key, path);
  if (!v.is_string()) throw BackendError(fmt::format("response: field '{}' is not a string", path));
  return v.get<std::string>();
}

}  // namespace

json to_json(const PromptRecord& r) {
  json j{{"prompt_id", r.prompt_id},
         {"dialogue_id", r.dialogue_id},
         {"task", std::string(prompting::to_string(r.task))},
         {"prompt", r.prompt}};
  if (r.task == prompting::Task::kAcr) j["explicit"] = r.explicit_aspect;
  return j;
}

PromptRecord prompt_record_from_json(const json& j) {
  PromptRecord r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.dialogue_id = j.at("dialogue_id").get<std::string>();
  r.task = prompting::task_from_string(j.at("task").get<std::string>());
  r.prompt = j.at("prompt").get<std::string>();
  if (r.task == prompting::Task::kAcr) r.explicit_aspect = j.at("explicit").get<std::string>();
  return r;
}

json to_json(const GenerationRecord& r) {
  json j{{"prompt_id", r.prompt_id},
         {"dialogue_id", r.dialogue_id},
         {"task", std::string(prompting::to_string(r.task))},
         {"outputs", r.result.outputs},
         {"scores", r.result.scores},
         {"meta", {{"backend", r.result.meta.backend}, {"latency_ms", r.result.meta.latency_ms}}}};
  if (r.task == prompting::Task::kAcr) j["explicit"] = r.explicit_aspect;
  return j;
}

GenerationRecord generation_record_from_json(const json& j) {
  GenerationRecord r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.dialogue_id = j.at("dialogue_id").get<std::string>();
  r.task = prompting::task_from_string(j.at("task").get<std::string>());
  if (r.task == prompting::Task::kAcr) r.explicit_aspect = j.at("explicit").get<std::string>();
  r.result.outputs = j.at("outputs").get<std::vector<std::string>>();
  r.result.scores = j.at("scores").get<std::vector<std::vector<double>>>();
  if (auto m = j.find("meta"); m != j.end() && m->is_object()) {
    r.result.meta.backend = m->value("backend", "");
    r.result.meta.latency_ms = m->value("latency_ms", 0.0);
  }
  r.result.check();
  return r;
}

namespace {

template <typename Record, typename FromJson>
std::vector<Record> read_records(std::istream& in, FromJson from_json) {
  std::vector<Record> out;
  io::for_each_line(in, [&](std::size_t line, std::string_view content) {
    const json j = parse_object_line(line, content);
    try {
      out.push_back(from_json(j));
    } catch (const json::exception& e) {
      bad_record(line, e.what());
    } catch (const DataError& e) {
      bad_record(line, e.what());
    } catch (const UsageError& e) {
      bad_record(line, e.what());
    }
  });
  return out;
}

template <typename Record>
std::string to_jsonl(std::span<const Record> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace

std::vector<PromptRecord> read_prompts(std::istream& in) {
  return read_records<PromptRecord>(in, prompt_record_from_json);
}

std::vector<PromptRecord> load_prompts(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return read_prompts(in);
}

std::vector<GenerationRecord> read_generations(std::istream& in) {
  return read_records<GenerationRecord>(in, generation_record_from_json);
}

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return read_generations(in);
}

std::string generations_jsonl(std::span<const GenerationRecord> records) { return to_jsonl(records); }
std::string prompts_jsonl(std::span<const PromptRecord> records) { return to_jsonl(records); }

std::vector<PromptRecord> build_prompts(std::span<const corpus::Dialogue> dialogues,
                                        const prompting::PromptTemplate& tmpl, std::vector<std::string>* warnings) {
  std::vector<PromptRecord> out;
  for (const auto& d : dialogues) {
    if (tmpl.task == prompting::Task::kAsu) {
      out.push_back({d.id, d.id, tmpl.task, "", prompting::build_asu_input(d, tmpl)});
      continue;
    }
    for (std::size_t c = 0; c < d.aspect_chains.size(); ++c) {
      const auto& aspect = d.aspect_chains[c].explicit_aspect;
      out.push_back({fmt::format("{}#{}", d.id, c), d.id, tmpl.task, aspect,
                     prompting::build_acr_input(d, aspect, tmpl, warnings)});
    }
  }
  return out;
}

json request_body(const BackendConfig& config, std::string_view prompt) {
  const std::string p(prompt);
  switch (config.api) {
    case Api::kNative:
      return {{"model", config.model}, {"prompt", p}, {"n", config.n_candidates}, {"return_scores", true}};
    case Api::kOpenAiCompletions:
      return {{"model", config.model}, {"prompt", p}, {"n", config.n_candidates}, {"logprobs", 1}};
    case Api::kOpenAiChat:
      return {{"model", config.model},
              {"messages", json::array({{{"role", "user"}, {"content", p}}})},
              {"n", config.n_candidates},
              {"logprobs", true}};
  }
  return {};
}

reward::GenerationResult parse_response(std::string_view body, Api api) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(fmt::format("response: invalid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw BackendError("response: expected a JSON object");
  const json& choices = field(j, "choices", "choices");
  if (!choices.is_array() || choices.empty()) throw BackendError("response: field 'choices' is empty or not an array");

  reward::GenerationResult result;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const json& c = choices[i];
    const std::string path = fmt::format("choices[{}]", i);
    if (!c.is_object()) throw BackendError(fmt::format("response: field '{}' is not an object", path));
    switch (api) {
      case Api::kNative:
        result.outputs.push_back(string_field(c, "text", path + ".text"));
        result.scores.push_back(numbers(field(c, "scores", path + ".scores"), path + ".scores"));
        break;
      case Api::kOpenAiCompletions: {
        result.outputs.push_back(string_field(c, "text", path + ".text"));
        const json& lp = field(c, "logprobs", path + ".logprobs");
        if (!lp.is_object()) throw BackendError(fmt::format("response: field '{}.logprobs' is not an object", path));
        result.scores.push_back(
            numbers(field(lp, "token_logprobs", path + ".logprobs.token_logprobs"), path + ".logprobs.token_logprobs"));
        break;
      }
      case Api::kOpenAiChat: {
        const json& msg = field(c, "message", path + ".message");
        result.outputs.push_back(string_field(msg, "content", path + ".message.content"));
        const json& lp = field(c, "logprobs", path + ".logprobs");
        if (!lp.is_object()) throw BackendError(fmt::format("response: field '{}.logprobs' is not an object", path));
        result.scores.push_back(
            numbers(field(lp, "content", path + ".logprobs.content"), path + ".logprobs.content", "logprob"));
        break;
      }
    }
    if (result.scores.back().size() < 2)
      throw BackendError(fmt::format("response: {} carries fewer than two scores", path));
  }
  return result;
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.check();
  if (!config_.auth_env.empty()) {
    const char* token = std::getenv(config_.auth_env.c_str());
    if (token == nullptr || *token == '\0')
      throw UsageError(fmt::format("backend: environment variable {} is not set", config_.auth_env));
    token_ = token;
  }
}

reward::GenerationResult HttpBackend::generate(std::string_view prompt) {
  const auto scheme_end = config_.endpoint.find("://") + 3;
  const auto path_start = config_.endpoint.find('/', scheme_end);
  const std::string base = config_.endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  const std::string body = request_body(config_, prompt).dump();

  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_s));
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = config_.backoff_base_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    ++attempts_;
    httplib::Client client(base);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      auto result = parse_response(res->body, config_.api);
      result.meta.backend = fmt::format("http:{}", config_.model);
      result.meta.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return result;
    }
    last_error = fmt::format("HTTP {}", res->status);
    if (res->status != 429 && res->status < 500)
      throw BackendError(fmt::format("backend rejected the request: {}: {}", last_error, res->body.substr(0, 200)));
  }
  throw BackendError(fmt::format("backend unavailable after {} attempts: {}", config_.max_retries + 1, last_error));
}

std::vector<GenerationRecord> HttpBackend::generate_all(std::span<const PromptRecord> prompts) {
  std::vector<std::optional<GenerationRecord>> slots(prompts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < prompts.size() && !failed; i = next++) {
      try {
        const auto& p = prompts[i];
        slots[i] = GenerationRecord{p.prompt_id, p.dialogue_id, p.task, p.explicit_aspect, generate(p.prompt)};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t n_workers = std::min(config_.max_in_flight, prompts.size());
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < n_workers; ++w) workers.emplace_back(worker);
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<GenerationRecord> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace chatasu::gateway
