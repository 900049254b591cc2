#include "chatasu/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "chatasu/corpus.hpp"
#include "chatasu/error.hpp"
#include "chatasu/evaluation.hpp"
#include "chatasu/gateway.hpp"
#include "chatasu/io.hpp"
#include "chatasu/parsing.hpp"
#include "chatasu/prompting.hpp"
#include "chatasu/reward.hpp"
#include "chatasu/rlsim.hpp"
#include "chatasu/text.hpp"
#include "chatasu/version.hpp"

namespace chatasu::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  std::size_t jobs = 4;
  std::string out_dir;
  std::string json_target;
  bool json = false;
};

// Collects what a run read and wrote, and routes artifacts either into the
// output directory or onto standard output.
class Run {
 public:
  Run(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {}

  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }
  const Globals& globals() const { return g_; }

  fs::path input(const std::string& path) {
    inputs_.push_back(path);
    return path;
  }

  // A primary artifact: a file in --out when given, standard output otherwise.
  void emit(const std::string& name, const std::string& content) {
    if (g_.out_dir.empty()) {
      out_ << content;
      return;
    }
    write(fs::path(g_.out_dir) / name, content);
  }

  // Human-readable summary plus its JSON form. --json alone swaps the text
  // for JSON on standard output; --json PATH writes the JSON there as well.
  void report(const std::string& name, const std::string& text_form, const json& json_form) {
    const std::string j = json_form.dump(2) + "\n";
    if (g_.json && g_.json_target.empty())
      out_ << j;
    else
      out_ << text_form;
    if (!g_.json_target.empty()) write(g_.json_target, j);
    if (!g_.out_dir.empty()) {
      write(fs::path(g_.out_dir) / (name + ".txt"), text_form);
      write(fs::path(g_.out_dir) / (name + ".json"), j);
    }
  }

  void write_manifest(const std::string& subcommand, const std::vector<std::string>& args,
                      const std::string& effective_config) {
    if (g_.out_dir.empty()) return;
    json inputs = json::array();
    for (const auto& p : inputs_) {
      const std::string content = io::read_file(p);
      inputs.push_back({{"path", p.string()}, {"bytes", content.size()}, {"sha256", io::sha256_hex(content)}});
    }
    json versions = library_versions();
    versions["cli11"] = CLI11_VERSION;
    json m{{"tool", "chatasu"},
           {"subcommand", subcommand},
           {"argv", args},
           {"seed", g_.seed},
           {"config", effective_config},
           {"config_sha256", io::sha256_hex(effective_config)},
           {"inputs", std::move(inputs)},
           {"outputs", outputs_},
           {"versions", std::move(versions)}};
    io::write_file_atomic(fs::path(g_.out_dir) / "manifest.json", m.dump(2) + "\n");
  }

 private:
  void write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_file_atomic(path, content);
    outputs_.push_back(path.string());
  }

  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
  std::vector<fs::path> inputs_;
  std::vector<std::string> outputs_;
};

std::vector<corpus::Dialogue> load(Run& run, const std::string& path) {
  return corpus::load_dataset(run.input(path));
}

prompting::PromptTemplate resolve_template(Run& run, const std::string& name_or_path, prompting::Task task) {
  if (name_or_path.empty()) return prompting::default_template(task);
  const auto names = prompting::template_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    auto t = prompting::named_template(name_or_path);
    if (t.task != task) throw UsageError(fmt::format("template '{}' is not an {} template", name_or_path, to_string(task)));
    return t;
  }
  auto t = prompting::load_template(run.input(name_or_path));
  if (t.task != task) throw UsageError(fmt::format("template file '{}' is not an {} template", name_or_path, to_string(task)));
  return t;
}

// ---- validate --------------------------------------------------------------

struct ValidateOpts {
  std::string data;
  bool warnings = false;
};

int run_validate(Run& run, const ValidateOpts& o) {
  const auto dialogues = corpus::load_dataset(run.input(o.data), corpus::LoadMode::kUnchecked);
  json violations = json::array(), warnings = json::array();
  std::string text;
  for (const auto& d : dialogues) {
    for (const auto& v : corpus::validate(d)) {
      violations.push_back({{"dialogue_id", d.id}, {"rule", v.rule}, {"detail", v.detail}});
      text += fmt::format("error: dialogue '{}': {}: {}\n", d.id, v.rule, v.detail);
    }
    if (!o.warnings) continue;
    for (const auto& v : corpus::guideline_warnings(d)) {
      warnings.push_back({{"dialogue_id", d.id}, {"rule", v.rule}, {"detail", v.detail}});
      text += fmt::format("warning: dialogue '{}': {}: {}\n", d.id, v.rule, v.detail);
    }
  }
  text += fmt::format("{} dialogues, {} violations\n", dialogues.size(), violations.size());
  run.report("validation", text,
             {{"dialogues", dialogues.size()}, {"violations", violations}, {"warnings", warnings}});
  return violations.empty() ? 0 : 1;
}

// ---- stats / agreement ------------------------------------------------------

int run_stats(Run& run, const std::string& data, const std::string& split) {
  const auto s = corpus::stats(load(run, data));
  run.report("stats", corpus::format_stats_table(s, split), corpus::to_json(s));
  return 0;
}

int run_agreement(Run& run, const std::string& a, const std::string& b) {
  const auto r = corpus::agreement(load(run, a), load(run, b));
  run.report("agreement", fmt::format("F1 {:.2f}  Accuracy {:.2f}\n", r.f1, r.accuracy),
             {{"f1", r.f1}, {"accuracy", r.accuracy}});
  return 0;
}

// ---- prompt -----------------------------------------------------------------

struct PromptOpts {
  std::string task;
  std::string data;
  std::string tmpl;
};

int run_prompt(Run& run, const PromptOpts& o) {
  const auto task = prompting::task_from_string(o.task);
  const auto tmpl = resolve_template(run, o.tmpl, task);
  const auto dialogues = load(run, o.data);
  std::vector<std::string> warnings;
  const auto prompts = gateway::build_prompts(dialogues, tmpl, &warnings);
  for (const auto& w : warnings) run.err() << "warning: " << w << '\n';
  run.emit(fmt::format("prompts_{}.jsonl", text::to_lower_ascii(o.task)), gateway::prompts_jsonl(prompts));
  return 0;
}

// ---- generate ---------------------------------------------------------------

struct GenerateOpts {
  std::string prompts;
  std::string backend = "mock";
  std::string behavior = "faithful";
  std::string data;
  std::size_t outputs = 4;
  std::size_t scores_per_output = 3;
  gateway::BackendConfig http;
  std::string api = "native";
};

int run_generate(Run& run, GenerateOpts o) {
  const auto prompts = gateway::load_prompts(run.input(o.prompts));
  std::vector<gateway::GenerationRecord> records;
  if (o.backend == "mock") {
    if (o.data.empty()) throw UsageError("generate: the mock backend needs --data for its gold answers");
    records = gateway::mock_generate_all(prompts, load(run, o.data), gateway::mock_behavior_from_string(o.behavior),
                                         o.outputs, o.scores_per_output, run.globals().seed);
  } else if (o.backend == "http") {
    o.http.api = gateway::api_from_string(o.api);
    o.http.n_candidates = o.outputs;
    o.http.max_in_flight = std::max<std::size_t>(1, std::min(o.http.max_in_flight, run.globals().jobs));
    gateway::HttpBackend backend(o.http);
    records = backend.generate_all(prompts);
  } else {
    throw UsageError(fmt::format("unknown backend '{}' (expected mock or http)", o.backend));
  }
  run.emit("generations.jsonl", gateway::generations_jsonl(records));
  return 0;
}

// ---- parse ------------------------------------------------------------------

struct ParseOpts {
  std::string task;
  std::string generations;
  std::string data;
};

int run_parse(Run& run, const ParseOpts& o) {
  const auto task = prompting::task_from_string(o.task);
  const auto records = gateway::load_generations(run.input(o.generations));
  std::string out;
  if (task == prompting::Task::kAsu) {
    std::vector<parsing::AsuPrediction> preds;
    for (const auto& r : records) {
      if (r.task != prompting::Task::kAsu) continue;
      auto parsed = parsing::parse_asu_output(r.result.outputs.front());
      if (!parsed.complete())
        run.err() << fmt::format("warning: {}: {} unparsed fragment(s)\n", r.prompt_id, parsed.residue.size());
      preds.push_back({r.dialogue_id, std::move(parsed.quadruples)});
    }
    for (const auto& p : preds) out += parsing::to_json(p).dump() + "\n";
    run.emit("predictions_asu.jsonl", out);
    return 0;
  }
  if (o.data.empty()) throw UsageError("parse acr: --data is needed for the utterance counts");
  const auto dialogues = load(run, o.data);
  std::map<std::string, std::size_t> lengths;
  for (const auto& d : dialogues) lengths[d.id] = d.utterances.size();
  for (const auto& r : records) {
    if (r.task != prompting::Task::kAcr) continue;
    auto it = lengths.find(r.dialogue_id);
    if (it == lengths.end()) throw DataError(fmt::format("generation '{}': unknown dialogue '{}'", r.prompt_id, r.dialogue_id));
    parsing::AcrPrediction p{r.dialogue_id, r.explicit_aspect, std::vector<int>(it->second, 0)};
    auto parsed = parsing::parse_acr_output(r.result.outputs.front(), it->second);
    if (auto* ok = std::get_if<parsing::ParsedAcr>(&parsed))
      p.labels = ok->labels;
    else
      run.err() << fmt::format("warning: {}: {}\n", r.prompt_id, std::get<parsing::AcrParseError>(parsed).message());
    out += parsing::to_json(p).dump() + "\n";
  }
  run.emit("predictions_acr.jsonl", out);
  return 0;
}

// ---- eval / significance ----------------------------------------------------

struct EvalOpts {
  std::string gold;
  std::string pred;
  std::string acr_pred;
};

int run_eval(Run& run, const EvalOpts& o) {
  const auto gold = load(run, o.gold);
  const auto pred = parsing::load_asu_predictions(run.input(o.pred));
  const auto report = evaluation::evaluate(gold, pred);
  std::string text = evaluation::format_report_table(report);
  json j = evaluation::to_json(report);
  if (!o.acr_pred.empty()) {
    const auto acr = evaluation::evaluate_acr(gold, parsing::load_acr_predictions(run.input(o.acr_pred)));
    text += fmt::format("ACR F1 {:.2f}\n", 100.0 * acr.f1);
    j["acr"] = evaluation::to_json(acr);
  }
  run.report("report", text, j);
  return 0;
}

struct SignificanceOpts {
  std::string gold;
  std::string pred_a;
  std::string pred_b;
  std::string projection = "Quadruple";
};

int run_significance(Run& run, const SignificanceOpts& o) {
  const auto gold = load(run, o.gold);
  std::optional<evaluation::Projection> proj;
  for (auto p : evaluation::kAllProjections)
    if (text::iequals_ascii(evaluation::column_name(p), o.projection)) proj = p;
  if (!proj) throw UsageError(fmt::format("unknown projection '{}'", o.projection));
  const auto a = evaluation::per_dialogue_f1(gold, parsing::load_asu_predictions(run.input(o.pred_a)), *proj);
  const auto b = evaluation::per_dialogue_f1(gold, parsing::load_asu_predictions(run.input(o.pred_b)), *proj);
  const auto t = evaluation::significance(a, b);
  run.report("significance",
             fmt::format("{} per-dialogue F1, n={}: mean difference {:.6f}, t={:.6f}, df={}, p={:.6g}\n",
                         evaluation::column_name(*proj), a.size(), t.mean_difference, t.t_statistic,
                         t.degrees_of_freedom, t.p_value),
             {{"projection", std::string(evaluation::column_name(*proj))},
              {"n", a.size()},
              {"mean_difference", t.mean_difference},
              {"t_statistic", t.t_statistic},
              {"degrees_of_freedom", t.degrees_of_freedom},
              {"p_value", t.p_value},
              {"degenerate", t.degenerate}});
  return 0;
}

// ---- reward -----------------------------------------------------------------

struct RewardOpts {
  std::string data;
  std::string asu_generations;
  std::string acr_generations;
  reward::RewardConfig config;
  bool unscaled = false;
};

int run_reward(Run& run, RewardOpts o) {
  o.config.scale_by_output_count = !o.unscaled;
  o.config.check();
  const auto dialogues = load(run, o.data);
  std::map<std::string, const gateway::GenerationRecord*> asu;
  const auto asu_records = gateway::load_generations(run.input(o.asu_generations));
  for (const auto& r : asu_records) {
    if (r.task != prompting::Task::kAsu)
      throw UsageError(fmt::format("{}: record '{}' is not an ASU generation", o.asu_generations, r.prompt_id));
    if (!asu.emplace(r.dialogue_id, &r).second)
      throw DataError(fmt::format("more than one ASU generation for dialogue '{}'", r.dialogue_id));
  }
  std::map<std::string, std::vector<reward::AcrGeneration>> acr;
  std::vector<gateway::GenerationRecord> acr_records;
  if (!o.acr_generations.empty()) acr_records = gateway::load_generations(run.input(o.acr_generations));
  for (const auto& r : acr_records) {
    if (r.task != prompting::Task::kAcr)
      throw UsageError(fmt::format("{}: record '{}' is not an ACR generation", o.acr_generations, r.prompt_id));
    acr[r.dialogue_id].push_back({r.explicit_aspect, r.result});
  }

  std::string lines;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& d : dialogues) {
    auto it = asu.find(d.id);
    if (it == asu.end()) continue;
    const auto b = reward::episode_reward(it->second->result, acr[d.id], d, o.config);
    json j = reward::to_json(b);
    j["dialogue_id"] = d.id;
    lines += j.dump() + "\n";
    sum += b.total;
    ++n;
  }
  for (const auto& [id, _] : asu)
    if (std::none_of(dialogues.begin(), dialogues.end(), [&](const auto& d) { return d.id == id; }))
      throw DataError(fmt::format("ASU generation for unknown dialogue '{}'", id));
  run.emit("rewards.jsonl", lines);
  run.err() << fmt::format("mean reward {:.6f} over {} dialogues\n", n ? sum / static_cast<double>(n) : 0.0, n);
  return 0;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateOpts {
  std::string scenario = "faithful";
  std::optional<std::size_t> steps;
  std::optional<std::size_t> episodes;
  std::optional<double> learning_rate;
};

int run_simulate(Run& run, const SimulateOpts& o) {
  rlsim::Scenario s;
  if (o.scenario == "faithful")
    s = rlsim::default_scenario();
  else if (o.scenario == "repetitive")
    s = rlsim::repetitive_scenario();
  else
    s = rlsim::load_scenario(run.input(o.scenario));
  if (o.steps) s.steps = *o.steps;
  if (o.episodes) s.episodes_per_step = *o.episodes;
  if (o.learning_rate) s.update.learning_rate = *o.learning_rate;
  const auto rows = rlsim::simulate(s, run.globals().seed);
  run.emit("curve.csv", rlsim::curve_csv(rows));
  if (!run.globals().out_dir.empty() && !rows.empty()) {
    const auto& last = rows.back();
    run.out() << fmt::format("{} steps: expected reward {:.4f}, p_correct {:.4f}, repetition rate {:.4f}\n", last.step,
                             last.expected_reward, last.p_correct, last.repetition_rate);
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aspect sentiment understanding toolkit for chat dialogues", "chatasu"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "TOML document with one [section] per subcommand; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Upper bound on concurrent work")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out_dir, "Output directory; artifacts and manifest.json are written there");
  auto* json_opt = app.add_option("--json", g.json_target, "Emit JSON; with a path, also write it there")
                       ->expected(0, 1);

  ValidateOpts validate;
  auto* c_validate = app.add_subcommand("validate", "Check a dataset against the annotation invariants");
  c_validate->add_option("data,--data", validate.data, "Dataset (JSONL)")->required();
  c_validate->add_flag("--warnings", validate.warnings, "Also report guideline heuristics");

  std::string stats_data, stats_split = "Data";
  auto* c_stats = app.add_subcommand("stats", "Dataset statistics table");
  c_stats->add_option("data,--data", stats_data, "Dataset (JSONL)")->required();
  c_stats->add_option("--split", stats_split, "Row label")->capture_default_str();

  std::string agree_a, agree_b;
  auto* c_agree = app.add_subcommand("agreement", "Inter-annotator agreement on quadruples");
  c_agree->add_option("a,--a", agree_a, "First annotator (plays gold)")->required();
  c_agree->add_option("b,--b", agree_b, "Second annotator")->required();

  PromptOpts prompt;
  auto* c_prompt = app.add_subcommand("prompt", "Build model prompts for a dataset");
  c_prompt->add_option("task,--task", prompt.task, "asu or acr")->required()->check(CLI::IsMember({"asu", "acr"}, CLI::ignore_case));
  c_prompt->add_option("--data", prompt.data, "Dataset (JSONL)")->required();
  c_prompt->add_option("--template", prompt.tmpl, "Built-in template name or TOML template file");

  GenerateOpts gen;
  auto* c_gen = app.add_subcommand("generate", "Run prompts through a backend");
  c_gen->add_option("prompts,--prompts", gen.prompts, "Prompt records (JSONL)")->required();
  c_gen->add_option("--backend", gen.backend, "mock or http")->capture_default_str();
  c_gen->add_option("--behavior", gen.behavior, "Mock behavior: faithful, noisy, repetitive, gibberish")->capture_default_str();
  c_gen->add_option("--data", gen.data, "Dataset holding the gold answers (mock backend)");
  c_gen->add_option("--outputs", gen.outputs, "Candidates per prompt")->capture_default_str();
  c_gen->add_option("--scores-per-output", gen.scores_per_output, "Scores per candidate (mock backend)")->capture_default_str();
  c_gen->add_option("--endpoint", gen.http.endpoint, "HTTP endpoint URL");
  c_gen->add_option("--model", gen.http.model, "Model name sent to the endpoint");
  c_gen->add_option("--auth-env", gen.http.auth_env, "Environment variable holding the bearer token");
  c_gen->add_option("--api", gen.api, "native, openai-completions or openai-chat")->capture_default_str();
  c_gen->add_option("--timeout", gen.http.timeout_s, "Request timeout in seconds")->capture_default_str();
  c_gen->add_option("--retries", gen.http.max_retries, "Retries per request")->capture_default_str();
  c_gen->add_option("--backoff", gen.http.backoff_base_s, "Base backoff in seconds")->capture_default_str();
  c_gen->add_option("--max-in-flight", gen.http.max_in_flight, "Concurrent requests (also capped by --jobs)")
      ->capture_default_str();

  ParseOpts parse;
  auto* c_parse = app.add_subcommand("parse", "Turn generations into prediction records");
  c_parse->add_option("task,--task", parse.task, "asu or acr")->required()->check(CLI::IsMember({"asu", "acr"}, CLI::ignore_case));
  c_parse->add_option("--generations", parse.generations, "Generation records (JSONL)")->required();
  c_parse->add_option("--data", parse.data, "Dataset (needed for acr)");

  EvalOpts eval;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against gold annotations");
  c_eval->add_option("--gold", eval.gold, "Gold dataset (JSONL)")->required();
  c_eval->add_option("--pred", eval.pred, "ASU predictions (JSONL)")->required();
  c_eval->add_option("--acr-pred", eval.acr_pred, "ACR predictions (JSONL)");

  RewardOpts rew;
  auto* c_reward = app.add_subcommand("reward", "Per-dialogue rewards for generations");
  c_reward->add_option("--data", rew.data, "Gold dataset (JSONL)")->required();
  c_reward->add_option("--asu-generations", rew.asu_generations, "ASU generation records")->required();
  c_reward->add_option("--acr-generations", rew.acr_generations, "ACR generation records");
  c_reward->add_option("--alpha", rew.config.alpha)->capture_default_str();
  c_reward->add_option("--beta", rew.config.beta)->capture_default_str();
  c_reward->add_option("--gamma", rew.config.gamma)->capture_default_str();
  c_reward->add_option("--epsilon", rew.config.epsilon)->capture_default_str();
  c_reward->add_flag("--unscaled", rew.unscaled, "Drop the output-count factor inside the confidence sum");

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Policy-gradient simulation under the shaped reward");
  c_sim->add_option("--scenario", sim.scenario, "faithful, repetitive or a scenario TOML file")->capture_default_str();
  c_sim->add_option("--steps", sim.steps, "Override the number of updates");
  c_sim->add_option("--episodes", sim.episodes, "Override episodes per update");
  c_sim->add_option("--learning-rate", sim.learning_rate, "Override the learning rate");

  SignificanceOpts sig;
  auto* c_sig = app.add_subcommand("significance", "Paired t-test between two prediction sets");
  c_sig->add_option("--gold", sig.gold, "Gold dataset (JSONL)")->required();
  c_sig->add_option("--pred-a", sig.pred_a, "First system's predictions")->required();
  c_sig->add_option("--pred-b", sig.pred_b, "Second system's predictions")->required();
  c_sig->add_option("--projection", sig.projection, "Projection to compare")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  g.json = json_opt->count() > 0;

  Run run(g, out, err);
  if (auto* cfg = app.get_config_ptr(); cfg != nullptr && cfg->count() > 0) run.input(cfg->as<std::string>());
  auto* chosen = app.get_subcommands().front();
  try {
    int code = 0;
    if (chosen == c_validate) code = run_validate(run, validate);
    else if (chosen == c_stats) code = run_stats(run, stats_data, stats_split);
    else if (chosen == c_agree) code = run_agreement(run, agree_a, agree_b);
    else if (chosen == c_prompt) code = run_prompt(run, prompt);
    else if (chosen == c_gen) code = run_generate(run, gen);
    else if (chosen == c_parse) code = run_parse(run, parse);
    else if (chosen == c_eval) code = run_eval(run, eval);
    else if (chosen == c_reward) code = run_reward(run, rew);
    else if (chosen == c_sim) code = run_simulate(run, sim);
    else if (chosen == c_sig) code = run_significance(run, sig);
    run.write_manifest(chosen->get_name(), args, app.config_to_str(true, false));
    return code;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace chatasu::cli
