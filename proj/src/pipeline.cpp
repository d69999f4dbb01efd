#include "cgnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"
#include "cgnn/graph_builder.hpp"
#include "cgnn/io.hpp"

namespace cgnn {

namespace {

void RejectUnknownKeys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  CGNN_CHECK(j.is_object(), ErrorKind::kConfig, where + " must be an object");
  for (const auto& [key, value] : j.items())
    CGNN_CHECK(known.count(key) > 0, ErrorKind::kConfig, "unknown key '" + key + "' in " + where);
}

struct Prepared {
  LoadedDataset loaded;
  WindowSet windows;
  ModelConfig model_config;
};

Prepared Prepare(const RunConfig& config) {
  LoadedDataset loaded = ReadDataset(config.dataset_path());
  WindowSet windows(loaded.dataset, config.windows);
  ModelConfig mc = config.model_config;
  mc.num_local = windows.num_local();
  mc.num_oci = windows.num_oci();
  mc.local_window = config.windows.local_window;
  mc.oci_window = config.windows.oci_window;
  mc.horizon = config.windows.horizon;
  return {std::move(loaded), std::move(windows), mc};
}

PreprocessOptions DiscoveryPreprocessing(const nlohmann::json& sidecar) {
  PreprocessOptions opt;
  const auto cadence = sidecar.value("cadence", std::size_t{1});
  const auto period = sidecar.value("seasonal_period", std::size_t{0});
  opt.block = std::max<std::size_t>(cadence, 1);
  opt.period = period / opt.block;
  return opt;
}

std::optional<AdjacencyMatrix> AdjacencyFor(const RunConfig& config) {
  if (config.model != ModelKind::kGnnCausal) return std::nullopt;
  const auto path = config.out_dir() / "graph.json";
  CGNN_CHECK(std::filesystem::exists(path), ErrorKind::kConfig,
             "gnn_causal needs " + path.string() + "; run discover first");
  return CausalAdjacency(GraphFromJson(ReadJson(path)));
}

}  // namespace

std::filesystem::path RunConfig::dataset_path() const {
  return data.path.empty() ? out_dir() / "data.csv" : std::filesystem::path(data.path);
}

ScmSpec RunConfig::Scm() const { return data.scm ? ScmSpecFromJson(*data.scm) : PresetSpec(data.preset); }

std::uint64_t RunConfig::TrainSeed(std::uint64_t run_seed) const {
  return SeedStreams(seed).Child("train").SubSeed(std::to_string(run_seed));
}

nlohmann::json ToJson(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["data"] = {{"preset", c.data.preset}, {"num_steps", c.data.num_steps}, {"path", c.data.path}};
  if (c.data.scm) j["data"]["scm"] = *c.data.scm;
  j["pcmci"] = {{"tau_max", c.pcmci.tau_max}, {"alpha", c.pcmci.alpha},   {"alpha_pc", c.pcmci.alpha_pc},
                {"p_max", c.pcmci.p_max},     {"p_x", c.pcmci.p_x},       {"allow_target_autolinks", c.allow_target_autolinks}};
  j["windows"] = {{"local_window", c.windows.local_window}, {"oci_window", c.windows.oci_window},
                  {"stride", c.windows.stride},             {"horizon", c.windows.horizon},
                  {"train_fraction", c.windows.train_fraction}, {"val_fraction", c.windows.val_fraction}};
  j["model"] = {{"kind", ToString(c.model)},
                {"hidden_dim", c.model_config.hidden_dim},
                {"gnn_hidden", c.model_config.gnn_hidden},
                {"leaky_slope", c.model_config.leaky_slope}};
  j["train"] = ToJson(c.train);
  j["explain"] = {{"permutations", c.explain.permutations}, {"background", c.explain.background},
                  {"max_samples", c.explain.max_samples},   {"scaled", c.explain.scaled},
                  {"checkpoint", c.explain.checkpoint}};
  return j;
}

RunConfig RunConfigFromJson(const nlohmann::json& j, RunConfig c) {
  RejectUnknownKeys(j, {"seed", "out", "data", "pcmci", "windows", "model", "train", "explain"}, "config");
  try {
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    if (j.contains("data")) {
      const auto& d = j["data"];
      RejectUnknownKeys(d, {"preset", "num_steps", "path", "scm"}, "data");
      c.data.preset = d.value("preset", c.data.preset);
      c.data.num_steps = d.value("num_steps", c.data.num_steps);
      c.data.path = d.value("path", c.data.path);
      if (d.contains("scm")) c.data.scm = d["scm"];
    }
    if (j.contains("pcmci")) {
      const auto& p = j["pcmci"];
      RejectUnknownKeys(p, {"tau_max", "alpha", "alpha_pc", "p_max", "p_x", "allow_target_autolinks"}, "pcmci");
      c.pcmci.tau_max = p.value("tau_max", c.pcmci.tau_max);
      c.pcmci.alpha = p.value("alpha", c.pcmci.alpha);
      c.pcmci.alpha_pc = p.value("alpha_pc", c.pcmci.alpha_pc);
      c.pcmci.p_max = p.value("p_max", c.pcmci.p_max);
      c.pcmci.p_x = p.value("p_x", c.pcmci.p_x);
      c.allow_target_autolinks = p.value("allow_target_autolinks", c.allow_target_autolinks);
    }
    if (j.contains("windows")) {
      const auto& w = j["windows"];
      RejectUnknownKeys(w, {"local_window", "oci_window", "stride", "horizon", "train_fraction", "val_fraction"},
                        "windows");
      c.windows.local_window = w.value("local_window", c.windows.local_window);
      c.windows.oci_window = w.value("oci_window", c.windows.oci_window);
      c.windows.stride = w.value("stride", c.windows.stride);
      c.windows.horizon = w.value("horizon", c.windows.horizon);
      c.windows.train_fraction = w.value("train_fraction", c.windows.train_fraction);
      c.windows.val_fraction = w.value("val_fraction", c.windows.val_fraction);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      RejectUnknownKeys(m, {"kind", "hidden_dim", "gnn_hidden", "leaky_slope"}, "model");
      if (m.contains("kind")) c.model = ParseModelKind(m["kind"].get<std::string>());
      c.model_config = ModelConfigFromJson(m, c.model_config);
    }
    if (j.contains("train")) {
      RejectUnknownKeys(j["train"],
                        {"lr", "weight_decay", "neg_pos_ratio", "epochs", "batch_size", "seeds",
                         "resample_each_epoch", "beta1", "beta2", "eps"},
                        "train");
      c.train = TrainConfigFromJson(j["train"], c.train);
    }
    if (j.contains("explain")) {
      const auto& e = j["explain"];
      RejectUnknownKeys(e, {"permutations", "background", "max_samples", "scaled", "checkpoint"}, "explain");
      c.explain.permutations = e.value("permutations", c.explain.permutations);
      c.explain.background = e.value("background", c.explain.background);
      c.explain.max_samples = e.value("max_samples", c.explain.max_samples);
      c.explain.scaled = e.value("scaled", c.explain.scaled);
      c.explain.checkpoint = e.value("checkpoint", c.explain.checkpoint);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  try {
    c.windows.Validate();
    c.train.Validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
  CGNN_CHECK(c.explain.permutations >= 1 && c.explain.background >= 1, ErrorKind::kConfig,
             "explain needs at least one permutation and one background sample");
  return c;
}

void WriteConfigSnapshot(const RunConfig& config, const std::string& command) {
  WriteJson(config.out_dir() / ("config." + command + ".json"), ToJson(config));
}

GenerateOutput CmdGenerate(const RunConfig& config) {
  const ScmSpec spec = config.Scm();
  const GeneratedData data = Generate(spec, config.data.num_steps, SeedStreams(config.seed).SubSeed("generate"));
  std::filesystem::path stem = config.dataset_path();
  stem.replace_extension();
  WriteDataset(stem, data, spec, config.seed);
  GenerateOutput out;
  out.csv = config.dataset_path();
  out.positive_rate = data.label.positive_rate;
  out.label_bias = data.label.bias;
  return out;
}

DiscoverOutput CmdDiscover(const RunConfig& config) {
  const LoadedDataset loaded = ReadDataset(config.dataset_path());
  const TimeSeriesDataset pre = PreprocessCausalStationarity(loaded.dataset, DiscoveryPreprocessing(loaded.sidecar));
  const auto assumptions =
      LinkAssumptions::MediatorOrdering(pre.kinds, config.pcmci.tau_max, config.allow_target_autolinks);
  DiscoverOutput out;
  out.graph = RunPcmci(pre, assumptions, config.pcmci);
  const auto dir = config.out_dir();
  WriteJson(dir / "graph.json", GraphToJson(out.graph));
  WriteText(dir / "graph.dot", GraphToDot(out.graph));
  WriteAdjacencyCsv(dir / "adjacency.csv", CausalAdjacency(out.graph));
  if (loaded.sidecar.contains("ground_truth"))
    out.score = ScoreEdges(out.graph, GraphFromJson(loaded.sidecar["ground_truth"]));
  return out;
}

std::filesystem::path CheckpointPrefix(const RunConfig& config, std::uint64_t run_seed) {
  return config.out_dir() / "checkpoints" / (std::string(ToString(config.model)) + "_seed" + std::to_string(run_seed));
}

std::vector<std::filesystem::path> CmdTrain(const RunConfig& config) {
  const Prepared p = Prepare(config);
  const auto adjacency = AdjacencyFor(config);
  const Splits splits = p.windows.ChronologicalSplits();
  std::filesystem::create_directories(config.out_dir() / "checkpoints");
  std::vector<std::filesystem::path> written;
  for (auto run_seed : config.train.seeds) {
    const TrainResult r =
        TrainFromSeed(config.model, p.model_config, adjacency, p.windows, splits, config.train, config.TrainSeed(run_seed));
    nlohmann::json meta;
    meta["run_seed"] = run_seed;
    meta["seed"] = config.TrainSeed(run_seed);
    meta["best_epoch"] = r.history.best_epoch;
    meta["train_loss"] = r.history.train_loss;
    std::vector<nlohmann::json> val;
    for (double v : r.history.val_auprc) val.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
    meta["val_auprc"] = val;
    const auto prefix = CheckpointPrefix(config, run_seed);
    SaveCheckpoint(prefix, r.model, meta);
    spdlog::info("{} seed {}: best epoch {}, checkpoint {}", ToString(config.model), run_seed, r.history.best_epoch,
                 prefix.string());
    written.push_back(prefix);
  }
  return written;
}

EvalReport CmdEvaluate(const RunConfig& config) {
  const Prepared p = Prepare(config);
  std::vector<Model> models;
  for (auto run_seed : config.train.seeds) {
    Model m = LoadCheckpoint(CheckpointPrefix(config, run_seed));
    CGNN_CHECK(m.kind() == config.model, ErrorKind::kConfig, "checkpoint holds a different model kind");
    models.push_back(m);
  }
  const EvalReport report = Evaluate(models, config.train.seeds, p.windows);
  const std::string kind = ToString(config.model);
  WriteJson(config.out_dir() / ("eval_" + kind + ".json"), ToJson(report));
  WriteCurvesCsv(config.out_dir() / ("curves_" + kind + ".csv"), report);
  return report;
}

ExplainOutput CmdExplain(const RunConfig& config) {
  const Prepared p = Prepare(config);
  const auto prefix = config.explain.checkpoint.empty()
                          ? CheckpointPrefix(config, config.train.seeds.front())
                          : std::filesystem::path(config.explain.checkpoint);
  const Model model = LoadCheckpoint(prefix);
  const Splits splits = p.windows.ChronologicalSplits();

  std::vector<std::size_t> positives;
  for (auto i : splits.test)
    if (p.windows.label(i) == 1) positives.push_back(i);
  if (config.explain.max_samples > 0 && positives.size() > config.explain.max_samples)
    positives.resize(config.explain.max_samples);

  const SeedStreams streams(config.seed);
  Rng bg_rng = streams.Stream("background");
  std::vector<std::size_t> bg_idx(splits.train.begin(), splits.train.end());
  std::shuffle(bg_idx.begin(), bg_idx.end(), bg_rng);
  bg_idx.resize(std::min(bg_idx.size(), config.explain.background));
  std::sort(bg_idx.begin(), bg_idx.end());
  const Batch bg_batch = p.windows.MakeBatch(bg_idx);
  std::vector<std::vector<double>> background;
  for (std::size_t b = 0; b < bg_batch.size; ++b) background.push_back(bg_batch.Features(b));

  const auto& names = p.windows.node_names();
  const std::vector<std::string> local_names(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(p.windows.num_local()));
  const std::vector<std::string> oci_names(names.begin() + static_cast<std::ptrdiff_t>(p.windows.num_local()), names.end());
  const auto groups = DefaultGroups(local_names, config.windows.local_window, oci_names, config.windows.oci_window);

  const ValueFunction f = ModelValueFunction(model);
  Rng perm_rng = streams.Stream("shapley");
  std::vector<Attribution> attributions;
  if (positives.empty()) spdlog::warn("no positive test samples; writing empty attribution tables");
  const Batch batch = p.windows.MakeBatch(positives);
  for (std::size_t b = 0; b < batch.size; ++b)
    attributions.push_back(ShapleyEstimate(f, batch.Features(b), background, groups, config.explain.permutations, perm_rng));

  ExplainOutput out;
  out.num_samples = attributions.size();
  out.aggregate = AggregateAbsByLag(attributions, groups, config.explain.scaled);
  const std::string kind = ToString(config.model);
  WriteAttributionCsv(config.out_dir() / ("shap_" + kind + ".csv"), groups, attributions);
  WriteLagAggregateCsv(config.out_dir() / ("shap_lag_" + kind + ".csv"), out.aggregate);
  return out;
}

}  // namespace cgnn
