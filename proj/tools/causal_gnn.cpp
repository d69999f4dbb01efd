#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"
#include "cgnn/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> model;
  std::optional<std::size_t> horizon;
  std::optional<std::string> preset;
  std::optional<std::string> data;
  std::optional<std::size_t> steps;
  std::optional<std::string> checkpoint;
};

void AddCommonFlags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--model", f.model, "lstm, gru, gnn_corr, gnn_full or gnn_causal");
  cmd->add_option("--horizon", f.horizon, "forecast horizon in steps");
  cmd->add_option("--preset", f.preset, "mediterranean, boreal or fig6-default");
  cmd->add_option("--data", f.data, "dataset CSV (default <out>/data.csv)");
  cmd->add_option("--steps", f.steps, "number of generated time steps");
}

// defaults <- config file <- flags
cgnn::RunConfig Resolve(const Flags& f) {
  cgnn::RunConfig c;
  if (!f.config.empty()) c = cgnn::RunConfigFromJson(cgnn::ReadJson(f.config));
  nlohmann::json overrides = cgnn::ToJson(c);
  if (f.seed) overrides["seed"] = *f.seed;
  if (f.out) overrides["out"] = *f.out;
  if (f.model) overrides["model"]["kind"] = *f.model;
  if (f.horizon) overrides["windows"]["horizon"] = *f.horizon;
  if (f.preset) {
    overrides["data"]["preset"] = *f.preset;
    overrides["data"].erase("scm");
  }
  if (f.data) overrides["data"]["path"] = *f.data;
  if (f.steps) overrides["data"]["num_steps"] = *f.steps;
  if (f.checkpoint) overrides["explain"]["checkpoint"] = *f.checkpoint;
  return cgnn::RunConfigFromJson(overrides);
}

void ConfigureLogging() {
  auto logger = spdlog::stderr_color_mt("causal-gnn");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CAUSAL_GNN_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("unknown CAUSAL_GNN_LOG level '{}', keeping info", env);
    else
      spdlog::set_level(level);
  }
}

void RunGenerate(const cgnn::RunConfig& c) {
  cgnn::WriteConfigSnapshot(c, "generate");
  const auto out = cgnn::CmdGenerate(c);
  fmt::print("wrote {}\npositive_rate {}\nlabel_bias {}\n", out.csv.string(), cgnn::FormatDouble(out.positive_rate),
             cgnn::FormatDouble(out.label_bias));
}

void RunDiscover(const cgnn::RunConfig& c) {
  cgnn::WriteConfigSnapshot(c, "discover");
  const auto out = cgnn::CmdDiscover(c);
  fmt::print("{:<12} {:>4} {:<12} {:>10} {:>12}\n", "source", "lag", "target", "mci", "p");
  for (const auto& l : out.graph.links)
    fmt::print("{:<12} {:>4} {:<12} {:>10.4f} {:>12.3e}\n", out.graph.variables[l.source], -l.lag,
               out.graph.variables[l.target], l.mci, l.pvalue);
  if (out.score)
    fmt::print("precision {:.3f} recall {:.3f} (tp {} fp {} fn {})\n", out.score->precision, out.score->recall,
               out.score->true_positives, out.score->false_positives, out.score->false_negatives);
}

void RunTrain(const cgnn::RunConfig& c) {
  cgnn::WriteConfigSnapshot(c, "train");
  for (const auto& p : cgnn::CmdTrain(c)) fmt::print("checkpoint {}\n", p.string());
}

void RunEvaluate(const cgnn::RunConfig& c) {
  cgnn::WriteConfigSnapshot(c, "evaluate");
  const auto r = cgnn::CmdEvaluate(c);
  for (const auto& s : r.seeds) fmt::print("seed {:<20} auprc {:.4f} auroc {:.4f}\n", s.seed, s.auprc, s.auroc);
  fmt::print("{} mean auprc {:.4f} +- {:.4f}, auroc {:.4f} +- {:.4f}; random auprc {:.4f} ({} of {} positive)\n",
             r.model, r.MeanAuprc(), r.StdAuprc(), r.MeanAuroc(), r.StdAuroc(), r.positive_fraction, r.num_positives,
             r.num_samples);
}

void RunExplain(const cgnn::RunConfig& c) {
  cgnn::WriteConfigSnapshot(c, "explain");
  const auto r = cgnn::CmdExplain(c);
  fmt::print("explained {} positive test samples\n", r.num_samples);
}

}  // namespace

int main(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Causal graph neural network wildfire forecasting pipeline"};
  app.require_subcommand(1);
  Flags flags;
  std::function<void(const cgnn::RunConfig&)> action;

  auto add = [&](const char* name, const char* help, std::function<void(const cgnn::RunConfig&)> fn) {
    CLI::App* cmd = app.add_subcommand(name, help);
    AddCommonFlags(cmd, flags);
    cmd->callback([&action, fn] { action = fn; });
    return cmd;
  };
  add("generate", "simulate a synthetic dataset", RunGenerate);
  add("discover", "run causal discovery on a dataset", RunDiscover);
  add("train", "train a model for every configured seed", RunTrain);
  add("evaluate", "score trained checkpoints on the test split", RunEvaluate);
  auto* explain = add("explain", "Shapley attributions for positive test samples", RunExplain);
  explain->add_option("--checkpoint", flags.checkpoint, "checkpoint prefix");
  add("run", "generate, discover, train, evaluate and explain", [](const cgnn::RunConfig& c) {
    RunGenerate(c);
    RunDiscover(c);
    RunTrain(c);
    RunEvaluate(c);
    RunExplain(c);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    action(Resolve(flags));
  } catch (const cgnn::Error& e) {
    spdlog::error("{}", e.what());
    return cgnn::ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}
