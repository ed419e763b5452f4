#include "hdbn/hdbn.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hdbn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("hdbn-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& p, const std::string& text) { std::ofstream(p) << text; }

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(HDBN_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) r.output += buf.data();
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Small synthetic run that finishes in a few seconds.
const std::vector<std::pair<std::string, std::string>> kTiny = {
    {"preset", "small"},          {"seed", "5"},
    {"synth.users", "60"},        {"synth.tracks", "30"},
    {"synth.records_per_user", "8"}, {"groups", "2"},
    {"pretrain.epochs", "2"},     {"pretrain.batch", "64"},
    {"finetune.epochs", "2"},     {"train.epochs", "2"},
    {"train.batch", "128"},       {"train.neg_k", "2"},
    {"eval.neighbors", "10"},
};

Config tiny_config(const std::string& out) {
  auto entries = kTiny;
  entries.emplace_back("out", out);
  return Config::resolve({}, entries);
}

void run_step(const Workspace& ws, const std::string& name) {
  std::ostringstream log;
  for (const auto& [n, fn] : commands()) {
    if (n == name) {
      fn(ws, log);
      return;
    }
  }
  FAIL() << "no command " << name;
}

std::string tiny_args(const std::string& out) {
  std::string a;
  for (const auto& [k, v] : kTiny) a += " --set " + k + "=" + v;
  return a + " --out " + out;
}

}  // namespace

TEST(Config, PresetsDiffer) {
  const auto l = Config::preset("large").hyper_params();
  const auto s = Config::preset("small").hyper_params();
  EXPECT_EQ(l.groups, 50);
  EXPECT_EQ(s.groups, 10);
  EXPECT_EQ(l.neg_k, 10);
  EXPECT_EQ(s.neg_k, 7);
  EXPECT_EQ(l.lambda4, 1e-4);
  EXPECT_EQ(s.lambda3, 5e-6);
  EXPECT_EQ(l.pretrain.batch, 1024);
  EXPECT_EQ(s.pretrain.alpha, 1e-6);
  EXPECT_THROW(Config::preset("medium"), UsageError);
}

TEST(Config, ParseCommentsAndPrecedence) {
  std::istringstream in("# experiment\npreset = small\n\ngroups = 4   # fewer\n lambda1=0.5\n");
  const auto entries = Config::parse(in, "x.conf");
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[1], (std::pair<std::string, std::string>{"groups", "4"}));
  const auto c = Config::resolve(entries, {{"groups", "6"}});
  EXPECT_EQ(c.get("preset"), "small");
  EXPECT_EQ(c.get_int("groups"), 6);
  EXPECT_EQ(c.get_double("lambda1"), 0.5);
  EXPECT_EQ(c.get_int("train.neg_k"), 7);
  std::istringstream bad("groups 4\n");
  try {
    Config::parse(bad, "bad.conf");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.conf:1"), std::string::npos);
  }
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(Config::resolve({{"lamda1", "0.1"}}, {}), UsageError);
  EXPECT_THROW(Config::resolve({}, {{"groups", "four"}}).hyper_params(), UsageError);
  EXPECT_THROW(Config::resolve({}, {{"train.lr", "-1"}}).hyper_params(), UsageError);
  EXPECT_THROW(Config::resolve({}, {{"ablation.phau", "maybe"}}).hyper_params(), UsageError);
  EXPECT_THROW(Config::resolve({}, {{"seed", "-3"}}).seed(), UsageError);
  EXPECT_THROW(Config::resolve({}, {{"sweep.grid", "1:0:5"}}).grid("sweep.grid"), UsageError);
  const auto g = Config::resolve({}, {{"sweep.grid", "-1:1:5"}}).grid("sweep.grid");
  EXPECT_EQ(g, (std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0}));
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  const auto a = Config::resolve({}, {{"out", "a"}});
  const auto b = Config::resolve({}, {{"out", "b"}});
  const auto c = Config::resolve({}, {{"out", "a"}, {"lambda2", "0.06"}});
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_NE(a.hash(), Config::preset("small").hash());
  EXPECT_EQ(a.canonical().find("out ="), std::string::npos);
}

TEST(Workspace, WriteOnce) {
  TempDir dir;
  const Workspace ws(Config::resolve({}, {{"out", dir.path.string()}}));
  ws.write("a.txt", "hello");
  ws.write("a.txt", "hello");
  EXPECT_THROW(ws.write("a.txt", "changed"), UsageError);
  EXPECT_EQ(slurp(dir / "a.txt"), "hello");
  EXPECT_FALSE(fs::exists(dir / "a.txt.partial"));
  try {
    ws.read("missing.bin", "group");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("run `hdbn group` first"), std::string::npos);
  }
}

TEST(Workspace, EnvelopeRejectsOtherSeed) {
  TempDir dir;
  const Workspace a(Config::resolve({}, {{"out", dir.path.string()}, {"seed", "1"}}));
  const Workspace b(Config::resolve({}, {{"out", dir.path.string()}, {"seed", "2"}}));
  a.write_binary("x.bin", {'p', 'q'});
  auto r = a.read_binary("x.bin", "x");
  EXPECT_FALSE(r.at_end());
  EXPECT_THROW(b.read_binary("x.bin", "x"), UsageError);
}

TEST(Pipeline, StepsProduceArtifactsAndRerunIsIdentical) {
  TempDir one, two;
  for (const auto* dir : {&one, &two}) {
    const Workspace ws(tiny_config(dir->path.string()));
    for (const auto* step : {"synth", "group", "pretrain", "finetune", "train", "evaluate"}) run_step(ws, step);
  }
  for (const auto* f : {"dataset.bin", "group.bin", "pretrain.bin", "finetune.bin", "train.bin", "evaluate.json",
                        "evaluate.csv", "train.csv", "finetune.csv", "group.csv", "synth.json"}) {
    ASSERT_TRUE(fs::exists(one / f)) << f;
    EXPECT_EQ(slurp(one / f), slurp(two / f)) << f;
  }
  const auto j = nlohmann::json::parse(slurp(one / "evaluate.json"));
  EXPECT_EQ(j["reports"].size(), baseline_names().size());
  for (const auto& r : j["reports"]) EXPECT_EQ(r["metrics"].size(), 16u);
  const auto csv = slurp(one / "evaluate.csv");
  EXPECT_NE(csv.find("# config_hash=" + hex64(tiny_config("x").hash())), std::string::npos);

  // re-running a step into the same directory is accepted
  const Workspace ws(tiny_config(one.path.string()));
  run_step(ws, "group");
}

TEST(Pipeline, MissingPrerequisiteNamesProducer) {
  TempDir dir;
  const Workspace ws(tiny_config(dir.path.string()));
  run_step(ws, "synth");
  try {
    run_step(ws, "finetune");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("hdbn group"), std::string::npos);
  }
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("synth --set lamda=1 --out " + (dir / "a")).code, 1);
  const auto missing = run_cli("train --out " + (dir / "b"));
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.output.find("hdbn ingest"), std::string::npos);

  write_file(dir / "bad.csv", "user_id,emotion_tag,music_id\nu1,happy\n");
  write_file(dir / "music.csv", "music_id,artist,genre\nm1,a,g\n");
  const auto data = run_cli("ingest --set data.interactions=" + (dir / "bad.csv") + " --set data.music=" +
                            (dir / "music.csv") + " --out " + (dir / "c"));
  EXPECT_EQ(data.code, 2);
  EXPECT_NE(data.output.find("line 2"), std::string::npos) << data.output;

  const auto out = dir / "d";
  ASSERT_EQ(run_cli("synth" + tiny_args(out)).code, 0);
  const auto numeric = run_cli("pretrain" + tiny_args(out) + " --set pretrain.lr=1e300");
  EXPECT_EQ(numeric.code, 3) << numeric.output;
}

TEST(Cli, FullPipelineAndAblationRerun) {
  TempDir dir;
  std::string first;
  for (const auto* name : {"a", "b"}) {
    const auto out = dir / name;
    for (const auto* step : {"synth", "group", "pretrain", "finetune", "train", "ablate"}) {
      const auto r = run_cli(std::string(step) + tiny_args(out));
      ASSERT_EQ(r.code, 0) << step << ": " << r.output;
    }
    const auto text = slurp(out + "/ablate.json");
    if (first.empty()) {
      first = text;
    } else {
      EXPECT_EQ(text, first);
    }
  }
  const auto j = nlohmann::json::parse(first);
  ASSERT_EQ(j["reports"].size(), 5u);
  std::vector<std::string> names;
  for (const auto& r : j["reports"]) {
    names.push_back(r["method"]);
    EXPECT_EQ(r["metrics"].size(), 16u);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"HDBN", "w/o EHAU", "w/o EHWU", "w/o PHAU", "w/o PHWU"}));

  const auto out = dir / "a";
  const auto rec = run_cli("recommend" + tiny_args(out) + " --set recommend.user=user0 --set recommend.tag=tag0");
  ASSERT_EQ(rec.code, 0) << rec.output;
  const auto rj = nlohmann::json::parse(slurp(out + "/recommend.json"));
  EXPECT_EQ(rj["items"].size(), 10u);
  EXPECT_EQ(run_cli("recommend" + tiny_args(out) + " --set recommend.user=nobody --set recommend.tag=tag0").code, 1);
  EXPECT_EQ(run_cli("sweep-led" + tiny_args(out) + " --set sweep.dim=3").code, 0);
  EXPECT_EQ(run_cli("sweep-led" + tiny_args(out) + " --set sweep.dim=16").code, 1);
  EXPECT_EQ(run_cli("case-study" + tiny_args(out) + " --set case.user=user1").code, 0);
  EXPECT_TRUE(fs::exists(out + "/case-study.csv"));
}
