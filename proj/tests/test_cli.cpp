#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "chatasu/cli.hpp"
#include "chatasu/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kToy = CHATASU_FIXTURES "/toy.jsonl";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = chatasu::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("chatasu-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) { return chatasu::io::read_file(path); }

void write(const std::string& path, const std::string& content) { std::ofstream(path) << content; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("stats prints the table") {
    const auto r = run({"stats", kToy});
    CHECK(r.code == 0);
    CHECK(r.out.find("Dialogues") != std::string::npos);
    CHECK(r.out.find("14(4)") != std::string::npos);
  }

  TEST_CASE("eval of gold against itself is all 100") {
    TempDir dir;
    const auto r = run({"eval", "--gold", kToy, "--pred", kToy, "--json", dir / "out.json"});
    CHECK(r.code == 0);
    const auto j = json::parse(slurp(dir / "out.json"));
    for (const auto& group : {"single", "pair"})
      for (const auto& [name, cell] : j[group].items()) CHECK(cell["f1"].get<double>() == 1.0);
    CHECK(j["single"].size() == 4);
    CHECK(j["pair"].size() == 3);
    CHECK(j["quadruple"]["f1"].get<double>() == 1.0);
  }

  TEST_CASE("simulate is reproducible and writes a manifest") {
    TempDir dir;
    write(dir / "sim.toml", "seed = 42\n[simulate]\nsteps = 30\n");
    const auto a = run({"--out", dir / "a", "simulate", "--config", dir / "sim.toml"});
    REQUIRE(a.code == 0);
    const auto csv = slurp(dir / "a/curve.csv");
    const auto m = json::parse(slurp(dir / "a/manifest.json"));
    const auto b = run({"--out", dir / "a", "simulate", "--config", dir / "sim.toml"});
    REQUIRE(b.code == 0);
    CHECK(csv == slurp(dir / "a/curve.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 32);

    CHECK(m["seed"] == 42);
    CHECK(m["subcommand"] == "simulate");
    CHECK(m["outputs"].size() >= 1);
    CHECK(m["versions"].contains("chatasu"));
    CHECK(m["config"].get<std::string>().find("steps=30") != std::string::npos);
    CHECK(m["config_sha256"].get<std::string>().size() == 64);
    CHECK(m["config_sha256"] == json::parse(slurp(dir / "a/manifest.json"))["config_sha256"]);
    bool saw_config = false;
    for (const auto& in : m["inputs"]) saw_config |= in["path"].get<std::string>().ends_with("sim.toml");
    CHECK(saw_config);
  }

  TEST_CASE("flags override the config document") {
    TempDir dir;
    write(dir / "sim.toml", "[simulate]\nsteps = 30\n");
    const auto r = run({"--out", dir / "o", "simulate", "--config", dir / "sim.toml", "--steps", "5"});
    REQUIRE(r.code == 0);
    const auto csv = slurp(dir / "o/curve.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    write(dir / "bad.toml", "[simulate]\nstepz = 3\n");
    CHECK(run({"simulate", "--config", dir / "bad.toml"}).code == 2);
  }

  TEST_CASE("exit codes") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"stats"}).code == 2);
    CHECK(run({"stats", "/nonexistent/file.jsonl"}).code == 1);
    CHECK(run({"--help"}).code == 0);
    TempDir dir;
    write(dir / "broken.jsonl", "{\"dialogue_id\": 1}\n");
    const auto r = run({"validate", dir / "broken.jsonl"});
    CHECK(r.code == 1);
    CHECK(r.err.find("line 1") != std::string::npos);
    CHECK(run({"validate", kToy}).code == 0);
  }

  TEST_CASE("offline pipeline: prompt, generate, parse, eval, reward") {
    TempDir dir;
    const auto o = dir.path().string();
    REQUIRE(run({"--out", o, "prompt", "asu", "--data", kToy}).code == 0);
    REQUIRE(run({"--out", o, "prompt", "acr", "--data", kToy}).code == 0);
    REQUIRE(run({"--out", o + "/asu", "generate", dir / "prompts_asu.jsonl", "--data", kToy}).code == 0);
    REQUIRE(run({"--out", o + "/acr", "generate", dir / "prompts_acr.jsonl", "--data", kToy}).code == 0);
    REQUIRE(run({"--out", o, "parse", "asu", "--generations", dir / "asu/generations.jsonl"}).code == 0);
    REQUIRE(run({"--out", o, "parse", "acr", "--generations", dir / "acr/generations.jsonl", "--data", kToy}).code == 0);

    const auto e = run({"--json", "eval", "--gold", kToy, "--pred", dir / "predictions_asu.jsonl", "--acr-pred",
                        dir / "predictions_acr.jsonl"});
    REQUIRE(e.code == 0);
    const auto report = json::parse(e.out);
    CHECK(report["quadruple"]["f1"].get<double>() == 1.0);
    CHECK(report["acr"]["f1"].get<double>() == 1.0);

    const auto rw = run({"--out", o + "/rw", "reward", "--data", kToy, "--asu-generations", dir / "asu/generations.jsonl",
                         "--acr-generations", dir / "acr/generations.jsonl"});
    REQUIRE(rw.code == 0);
    std::istringstream lines(slurp(dir / "rw/rewards.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      const auto j = json::parse(line);
      CHECK(j["p"] == 0);
      CHECK(j["r_rp"].get<double>() == 1.0);
      ++n;
    }
    CHECK(n == 4);

    // The same pipeline with a repetitive mock lands on the penalty branch.
    REQUIRE(run({"--out", o + "/rep", "generate", dir / "prompts_asu.jsonl", "--data", kToy, "--behavior", "repetitive",
                 "--outputs", "3"})
                .code == 0);
    const auto rr = run({"--out", o + "/rr", "reward", "--data", kToy, "--asu-generations", dir / "rep/generations.jsonl"});
    REQUIRE(rr.code == 0);
    CHECK(slurp(dir / "rr/rewards.jsonl").find("\"p\":2") != std::string::npos);

    // Swapped generation files are a usage error, not an empty result.
    CHECK(run({"reward", "--data", kToy, "--asu-generations", dir / "acr/generations.jsonl"}).code == 2);
  }

  TEST_CASE("significance between two prediction files") {
    TempDir dir;
    const auto r = run({"--json", "significance", "--gold", kToy, "--pred-a", kToy, "--pred-b", kToy});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["p_value"].get<double>() == 1.0);
    CHECK(j["degenerate"] == true);
  }
}
