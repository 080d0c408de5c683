#include "ehrcvd_cli/cli.hpp"

#include <cstdlib>
#include <functional>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd_cli/stages.hpp"

namespace ehrcvd::cli {

namespace fs = std::filesystem;

namespace {

void use_stderr_logger() {
  static const bool once = [] {
    spdlog::set_default_logger(spdlog::stderr_color_st("ehrcvd"));
    return true;
  }();
  (void)once;
}

fs::path output_dir(const std::string& flag, const ExperimentConfig* config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("EHRCVD_OUT_DIR"); env && *env) return env;
  if (config) return config->output_dir;
  return "out";
}

struct Flags {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  std::size_t n_patients = 0;
  std::string log_level = "info";
};

}  // namespace

int run(const std::vector<std::string>& args) {
  use_stderr_logger();
  CLI::App app{"Cardiovascular event prediction from longitudinal health records"};
  app.name(args.empty() ? "ehrcvd" : args.front());
  app.require_subcommand(1);

  Flags flags;
  std::map<CLI::App*, std::string> names;
  const auto add = [&](const std::string& name, const std::string& help, bool needs_config) {
    auto* sub = app.add_subcommand(name, help);
    auto* c = sub->add_option("--config,-c", flags.config, "experiment config (JSON)")
                  ->check(CLI::ExistingFile);
    if (needs_config) c->required();
    sub->add_option("--out,-o", flags.out, "output directory (default $EHRCVD_OUT_DIR or the config's)");
    sub->add_option("--jobs,-j", flags.jobs, "parallel folds")->check(CLI::PositiveNumber);
    sub->add_option("--log-level", flags.log_level, "trace, debug, info, warn or error")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
    names[sub] = name;
    return sub;
  };
  auto* gen = add("generate", "simulate a synthetic cohort", false);
  gen->add_option("--seed", flags.seed, "generator seed (overrides the config)");
  gen->add_option("--n-patients", flags.n_patients, "cohort size (without --config)")
      ->check(CLI::PositiveNumber);
  for (const auto& [name, help, seed_help] :
       std::vector<std::tuple<std::string, std::string, std::string>>{
           {"cohort", "apply inclusion rules, match controls, label and split folds", "fold seed"},
           {"featurize", "build the vocabulary and per-day feature sequences", ""},
           {"tune", "Bayesian hyperparameter search", "tuner seed"},
           {"train", "fit every configured model on the whole cohort", "training seed"},
           {"evaluate", "cross-validate every configured model", "training seed"},
           {"importance", "permutation feature importance", "permutation seed"},
           {"attention", "per-day attention weights of held-out patients", "training seed"}}) {
    auto* sub = add(name, help, true);
    if (!seed_help.empty()) sub->add_option("--seed", flags.seed, seed_help + " (overrides the config)");
  }
  add("report", "render tables and figures from earlier artifacts", false);

  std::vector<std::string> argv_rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(argv_rev.begin(), argv_rev.end());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string& command = names.at(sub);
  spdlog::set_level(spdlog::level::from_str(flags.log_level));

  try {
    StageOptions options;
    options.jobs = flags.jobs;
    if (sub->get_option("--jobs")->count() == 0) options.jobs = 1;
    const bool seeded = sub->get_option_no_throw("--seed") && sub->get_option("--seed")->count() > 0;
    if (seeded) options.seed = flags.seed;

    if (command == "report") {
      std::optional<ExperimentConfig> config;
      if (!flags.config.empty()) config = load_experiment(flags.config);
      options.out_dir = output_dir(flags.out, config ? &*config : nullptr);
      stage_report(options);
      return kOk;
    }

    ExperimentConfig config;
    if (!flags.config.empty()) {
      config = load_experiment(flags.config);
      options.config_path = flags.config;
      if (flags.n_patients != 0) {
        throw ConfigError("--n-patients only applies without --config");
      }
    } else {
      // `generate` without a config: default generator settings.
      config.generator = GeneratorConfig::defaults();
      if (flags.n_patients != 0) config.generator->n_patients = flags.n_patients;
      config.seeds.generator = config.generator->seed;
    }
    options.out_dir = output_dir(flags.out, flags.config.empty() ? nullptr : &config);

    static const std::map<std::string, std::function<void(const ExperimentConfig&, const StageOptions&)>>
        kStages = {{"generate", stage_generate},     {"cohort", stage_cohort},
                   {"featurize", stage_featurize},   {"tune", stage_tune},
                   {"train", stage_train},           {"evaluate", stage_evaluate},
                   {"importance", stage_importance}, {"attention", stage_attention}};
    kStages.at(command)(config, options);
    spdlog::info("{}: artifacts in {}", command, (options.out_dir / command).string());
    return kOk;
  } catch (const NumericError& e) {
    spdlog::error("{}: {}", command, e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", command, e.what());
    return kDataError;
  }
}

}  // namespace ehrcvd::cli
