// hdbn: command-line driver for the pipeline.
//
//   hdbn <command> [--config FILE] [--preset large|small] [--seed N]
//                  [--out DIR] [--set key=value ...]
//
// Exit codes: 0 ok, 1 usage, 2 data validation, 3 numerical failure.

#include "hdbn/hdbn.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

int main(int argc, char** argv) {
  CLI::App app{"Emotion-aware music recommendation pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::string preset;
  std::string out;
  std::string seed;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "key = value config file");
  app.add_option("--preset", preset, "large or small");
  app.add_option("--seed", seed, "root seed");
  app.add_option("-o,--out", out, "output directory");
  app.add_option("--set", sets, "override: key=value (repeatable)");

  const std::map<std::string, std::string> help = {
      {"ingest", "load interaction and music tables into dataset.bin"},
      {"synth", "generate a seeded synthetic dataset into dataset.bin"},
      {"group", "cluster users by preference profile"},
      {"pretrain", "train the global mood network"},
      {"finetune", "fine-tune one mood network per group"},
      {"train", "train the recommender on frozen mood networks"},
      {"evaluate", "score the model and baselines on the test split"},
      {"recommend", "top-N tracks for recommend.user under recommend.tag"},
      {"ablate", "retrain with each inference unit removed and evaluate"},
      {"sweep-led", "vary one latent coordinate and record track scores"},
      {"case-study", "history and top tracks with mood vectors for case.user"},
  };
  for (const auto& [name, fn] : hdbn::commands()) {
    const auto it = help.find(name);
    app.add_subcommand(name, it == help.end() ? name : it->second);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    if (!preset.empty()) overrides.emplace_back("preset", preset);
    if (!seed.empty()) overrides.emplace_back("seed", seed);
    if (!out.empty()) overrides.emplace_back("out", out);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw hdbn::UsageError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(hdbn::detail::trim(s.substr(0, eq)), hdbn::detail::trim(s.substr(eq + 1)));
    }
    const auto file = config_path.empty() ? std::vector<std::pair<std::string, std::string>>{}
                                          : hdbn::Config::parse_file(config_path);
    const hdbn::Workspace ws(hdbn::Config::resolve(file, overrides));
    const std::string which = app.get_subcommands().front()->get_name();
    for (const auto& [name, fn] : hdbn::commands()) {
      if (name == which) fn(ws, std::cout);
    }
    return 0;
  } catch (const hdbn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const hdbn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const hdbn::FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const hdbn::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
