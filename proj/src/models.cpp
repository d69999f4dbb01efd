#include "cgnn/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"

namespace cgnn {

const char* ToString(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLstm:
      return "lstm";
    case ModelKind::kGru:
      return "gru";
    case ModelKind::kGnnCorr:
      return "gnn_corr";
    case ModelKind::kGnnFull:
      return "gnn_full";
    case ModelKind::kGnnCausal:
      return "gnn_causal";
  }
  return "?";
}

ModelKind ParseModelKind(const std::string& name) {
  for (auto k : {ModelKind::kLstm, ModelKind::kGru, ModelKind::kGnnCorr, ModelKind::kGnnFull,
                 ModelKind::kGnnCausal})
    if (name == ToString(k)) return k;
  throw Error(ErrorKind::kConfig, "unknown model kind '" + name + "'");
}

bool IsGraphModel(ModelKind kind) {
  return kind == ModelKind::kGnnCorr || kind == ModelKind::kGnnFull || kind == ModelKind::kGnnCausal;
}

void ModelConfig::Validate() const {
  CGNN_CHECK(hidden_dim >= 1 && gnn_hidden >= 1, ErrorKind::kConfig, "hidden sizes must be >= 1");
  CGNN_CHECK(hidden_dim >= 2 && gnn_hidden >= 2, ErrorKind::kConfig,
             "layer norm needs hidden sizes >= 2");
  CGNN_CHECK(num_classes == 2, ErrorKind::kConfig, "only binary classification is supported");
  CGNN_CHECK(leaky_slope > 0.0 && leaky_slope < 1.0, ErrorKind::kConfig, "leaky_slope must be in (0,1)");
  CGNN_CHECK(num_nodes() >= 1, ErrorKind::kConfig, "model needs at least one input variable");
  CGNN_CHECK(local_window >= 1 && oci_window >= 1, ErrorKind::kConfig, "lag windows must be >= 1");
  CGNN_CHECK(horizon >= 1, ErrorKind::kConfig, "horizon must be >= 1");
}

nlohmann::json ToJson(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},   {"gnn_hidden", c.gnn_hidden},
          {"num_classes", c.num_classes}, {"leaky_slope", c.leaky_slope},
          {"num_local", c.num_local},     {"num_oci", c.num_oci},
          {"local_window", c.local_window}, {"oci_window", c.oci_window},
          {"horizon", c.horizon}};
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig c) {
  try {
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.gnn_hidden = j.value("gnn_hidden", c.gnn_hidden);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.num_local = j.value("num_local", c.num_local);
    c.num_oci = j.value("num_oci", c.num_oci);
    c.local_window = j.value("local_window", c.local_window);
    c.oci_window = j.value("oci_window", c.oci_window);
    c.horizon = j.value("horizon", c.horizon);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("model config: ") + e.what());
  }
  return c;
}

// --- encoders -------------------------------------------------------------------

namespace {

Tensor Column(const Tensor& series, std::size_t s) {
  const std::size_t n = series.rows(), l = series.cols();
  std::vector<double> v(n);
  for (std::size_t r = 0; r < n; ++r) v[r] = series.at(r * l + s);
  return Tensor({n, 1}, std::move(v));
}

Tensor LstmStep(Tape& tape, const RecurrentParams& p, const Tensor& x, Tensor& h, Tensor& c,
                bool first) {
  const std::size_t hd = p.hidden();
  Tensor pre = MatMul(tape, x, p.w_input);
  if (!first) pre = Add(tape, pre, MatMul(tape, h, p.w_hidden));
  pre = AddRowVector(tape, pre, p.b_input);
  const Tensor i = Sigmoid(tape, SliceCols(tape, pre, 0, hd));
  const Tensor g = Tanh(tape, SliceCols(tape, pre, 2 * hd, 3 * hd));
  const Tensor o = Sigmoid(tape, SliceCols(tape, pre, 3 * hd, 4 * hd));
  if (first) {
    c = Mul(tape, i, g);
  } else {
    const Tensor f = Sigmoid(tape, SliceCols(tape, pre, hd, 2 * hd));
    c = Add(tape, Mul(tape, f, c), Mul(tape, i, g));
  }
  h = Mul(tape, o, Tanh(tape, c));
  return h;
}

Tensor GruStep(Tape& tape, const RecurrentParams& p, const Tensor& x, Tensor& h, bool first) {
  const std::size_t hd = p.hidden();
  const std::size_t n = x.rows();
  const Tensor gi = AddRowVector(tape, MatMul(tape, x, p.w_input), p.b_input);
  // With h = 0 the recurrent pre-activation is just its bias.
  const Tensor gh = first ? AddRowVector(tape, Tensor::Zeros({n, 3 * hd}), p.b_hidden)
                          : AddRowVector(tape, MatMul(tape, h, p.w_hidden), p.b_hidden);
  const Tensor r = Sigmoid(tape, Add(tape, SliceCols(tape, gi, 0, hd), SliceCols(tape, gh, 0, hd)));
  const Tensor z =
      Sigmoid(tape, Add(tape, SliceCols(tape, gi, hd, 2 * hd), SliceCols(tape, gh, hd, 2 * hd)));
  const Tensor cand = Tanh(tape, Add(tape, SliceCols(tape, gi, 2 * hd, 3 * hd),
                                     Mul(tape, r, SliceCols(tape, gh, 2 * hd, 3 * hd))));
  if (first) {
    // h' = (1 - z) * n when h = 0.
    h = Sub(tape, cand, Mul(tape, z, cand));
  } else {
    h = Add(tape, cand, Mul(tape, z, Sub(tape, h, cand)));
  }
  return h;
}

Tensor GcnLayerImpl(Tape& tape, const Tensor& nodes, const Tensor& adj_norm,
                    const GcnLayerParams& p, double slope) {
  const Tensor mixed = GraphMix(tape, adj_norm, nodes);
  return LeakyRelu(tape, LayerNorm(tape, MatMul(tape, mixed, p.kernel), p.ln_gamma, p.ln_beta), slope);
}

}  // namespace

Tensor RecurrentEncode(Tape& tape, const RecurrentParams& params, const Tensor& series) {
  CGNN_CHECK(series.defined() && series.rank() == 2 && series.cols() >= 1, ErrorKind::kContract,
             "recurrent encoder needs a non-empty [N x L] series");
  const std::size_t gates = params.cell == CellKind::kLstm ? 4 : 3;
  const std::size_t hd = params.hidden();
  CGNN_CHECK(params.w_input.rank() == 2 && params.w_input.rows() == 1 &&
                 params.w_input.cols() == gates * hd && params.w_hidden.cols() == gates * hd &&
                 params.b_input.size() == gates * hd,
             ErrorKind::kDimension, "recurrent parameter shapes disagree");
  CGNN_CHECK(params.cell == CellKind::kLstm || params.b_hidden.size() == gates * hd,
             ErrorKind::kDimension, "GRU needs a recurrent bias");
  Tensor h, c;
  for (std::size_t s = 0; s < series.cols(); ++s) {
    const Tensor x = Column(series, s);
    if (params.cell == CellKind::kLstm)
      LstmStep(tape, params, x, h, c, s == 0);
    else
      GruStep(tape, params, x, h, s == 0);
  }
  return h;
}

Tensor GcnLayer(Tape& tape, const Tensor& nodes, const AdjacencyMatrix& adjacency,
                const GcnLayerParams& params, double slope) {
  CGNN_CHECK(adjacency.normalized, ErrorKind::kContract, "graph convolution needs a normalized adjacency");
  return GcnLayerImpl(tape, nodes, adjacency.AsTensor(), params, slope);
}

// --- parameters -----------------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> ModelParams::Named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add = [&](const char* name, const Tensor& t) {
    if (t.defined()) out.emplace_back(name, t);
  };
  add("encoder.w_input", encoder.w_input);
  add("encoder.w_hidden", encoder.w_hidden);
  add("encoder.b_input", encoder.b_input);
  add("encoder.b_hidden", encoder.b_hidden);
  add("gcn1.kernel", gcn1.kernel);
  add("gcn1.ln_gamma", gcn1.ln_gamma);
  add("gcn1.ln_beta", gcn1.ln_beta);
  add("gcn2.kernel", gcn2.kernel);
  add("gcn2.ln_gamma", gcn2.ln_gamma);
  add("gcn2.ln_beta", gcn2.ln_beta);
  add("classifier.weight", cls_weight);
  add("classifier.bias", cls_bias);
  return out;
}

std::size_t ModelParams::NumScalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : Named()) n += t.size();
  return n;
}

Tensor XavierNormal(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  CGNN_CHECK(fan_in >= 1 && fan_out >= 1, ErrorKind::kDimension, "xavier init needs a 2-D shape");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return Tensor({fan_in, fan_out}, std::move(v), true);
}

ModelParams InitParams(ModelKind kind, const ModelConfig& config, Rng& rng) {
  config.Validate();
  const std::size_t h = config.hidden_dim, g = config.gnn_hidden;
  ModelParams p;
  p.encoder.cell = kind == ModelKind::kGru ? CellKind::kGru : CellKind::kLstm;
  const std::size_t gates = p.encoder.cell == CellKind::kLstm ? 4 : 3;
  p.encoder.w_input = XavierNormal(1, gates * h, rng);
  p.encoder.w_hidden = XavierNormal(h, gates * h, rng);
  p.encoder.b_input = Tensor::Zeros({gates * h}, true);
  if (p.encoder.cell == CellKind::kGru) p.encoder.b_hidden = Tensor::Zeros({gates * h}, true);
  if (IsGraphModel(kind)) {
    p.gcn1 = {XavierNormal(h, g, rng), Tensor({g}, std::vector<double>(g, 1.0), true),
              Tensor::Zeros({g}, true)};
    p.gcn2 = {XavierNormal(g, h, rng), Tensor({h}, std::vector<double>(h, 1.0), true),
              Tensor::Zeros({h}, true)};
  }
  p.cls_weight = XavierNormal(h, config.num_classes, rng);
  p.cls_bias = Tensor::Zeros({config.num_classes}, true);
  return p;
}

std::vector<double> PositiveConfidence(const Tensor& logits) {
  CGNN_CHECK(logits.rank() == 2 && logits.cols() == 2, ErrorKind::kDimension, "expected [B x 2] logits");
  std::vector<double> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    // sigma(l1 - l0) is the two-class softmax.
    const double d = logits.at(b, 1) - logits.at(b, 0);
    out[b] = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  }
  return out;
}

// --- model ----------------------------------------------------------------------

Model::Model(ModelKind kind, const ModelConfig& config, ModelParams params,
             std::optional<AdjacencyMatrix> adjacency)
    : kind_(kind), config_(config), params_(std::move(params)) {
  config_.Validate();
  const std::size_t c = config_.num_nodes();
  if (kind_ == ModelKind::kGnnCausal) {
    CGNN_CHECK(adjacency.has_value(), ErrorKind::kConfig, "gnn_causal needs a causal adjacency");
    CGNN_CHECK(!adjacency->normalized, ErrorKind::kContract, "pass the raw adjacency; it is normalized here");
    CGNN_CHECK(adjacency->size() == c, ErrorKind::kContract,
               "adjacency has " + std::to_string(adjacency->size()) + " nodes, model has " +
                   std::to_string(c));
    adjacency_ = std::move(adjacency);
  } else if (kind_ == ModelKind::kGnnFull) {
    std::vector<std::string> names = adjacency ? adjacency->nodes : std::vector<std::string>{};
    if (names.size() != c) {
      names.clear();
      for (std::size_t i = 0; i < c; ++i) names.push_back("v" + std::to_string(i));
    }
    adjacency_ = FullAdjacency(names);
  }
  if (adjacency_) norm_adjacency_ = Normalize(*adjacency_).AsTensor();
  if (IsGraphModel(kind_))
    CGNN_CHECK(params_.gcn1.kernel.defined() && params_.gcn2.kernel.defined(), ErrorKind::kContract,
               "graph model without graph-convolution parameters");
}

Model Model::Create(ModelKind kind, const ModelConfig& config, Rng& rng,
                    std::optional<AdjacencyMatrix> adjacency) {
  return Model(kind, config, InitParams(kind, config, rng), std::move(adjacency));
}

Tensor Model::EncodeNodes(Tape& tape, const Batch& batch) const {
  const std::size_t b = batch.size, cl = config_.num_local, co = config_.num_oci;
  std::vector<Tensor> parts;
  if (cl > 0) {
    const Tensor series({b * cl, config_.local_window}, batch.local);
    parts.push_back(RecurrentEncode(tape, params_.encoder, series));
  }
  if (co > 0) {
    const Tensor series({b * co, config_.oci_window}, batch.oci);
    parts.push_back(RecurrentEncode(tape, params_.encoder, series));
  }
  const Tensor stacked = parts.size() == 1 ? parts[0] : ConcatRows(tape, parts);
  if (cl == 0 || co == 0) return stacked;
  // Interleave to node order: row s*C + c holds node c of sample s.
  const std::size_t c = cl + co;
  std::vector<std::size_t> perm(b * c);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t n = 0; n < c; ++n)
      perm[s * c + n] = n < cl ? s * cl + n : b * cl + s * co + (n - cl);
  return GatherRows(tape, stacked, perm);
}

ForwardResult Model::Forward(Tape& tape, const Batch& batch) const {
  batch.Validate();
  CGNN_CHECK(batch.num_local == config_.num_local && batch.num_oci == config_.num_oci,
             ErrorKind::kContract, "batch variable counts do not match the model");
  CGNN_CHECK(batch.local_window == config_.local_window && batch.oci_window == config_.oci_window,
             ErrorKind::kContract, "batch lag windows do not match the model");
  const std::size_t c = config_.num_nodes();
  Tensor nodes = EncodeNodes(tape, batch);
  if (IsGraphModel(kind_)) {
    const double slope = config_.leaky_slope;
    if (kind_ == ModelKind::kGnnCorr) {
      // One adjacency per sample, from that sample's own node features.
      std::vector<Tensor> layer2;
      std::vector<std::size_t> rows(c);
      for (std::size_t s = 0; s < batch.size; ++s) {
        for (std::size_t n = 0; n < c; ++n) rows[n] = s * c + n;
        const Tensor own = GatherRows(tape, nodes, rows);
        const Tensor adj = NormalizeAdjacency(tape, AbsCorrcoef(tape, own, c));
        const Tensor x1 = GcnLayerImpl(tape, own, adj, params_.gcn1, slope);
        layer2.push_back(GcnLayerImpl(tape, x1, adj, params_.gcn2, slope));
      }
      nodes = layer2.size() == 1 ? layer2[0] : ConcatRows(tape, layer2);
    } else {
      const Tensor x1 = GcnLayerImpl(tape, nodes, norm_adjacency_, params_.gcn1, slope);
      nodes = GcnLayerImpl(tape, x1, norm_adjacency_, params_.gcn2, slope);
    }
  }
  const Tensor pooled = SegmentMean(tape, nodes, c);
  ForwardResult out;
  out.logits = AddRowVector(tape, MatMul(tape, pooled, params_.cls_weight), params_.cls_bias);
  out.confidence = PositiveConfidence(out.logits);
  return out;
}

std::vector<double> Model::Predict(const Batch& batch, std::size_t chunk) const {
  CGNN_CHECK(chunk >= 1, ErrorKind::kContract, "chunk must be >= 1");
  std::vector<double> out;
  out.reserve(batch.size);
  const std::size_t nl = batch.num_local * batch.local_window;
  const std::size_t no = batch.num_oci * batch.oci_window;
  for (std::size_t begin = 0; begin < batch.size; begin += chunk) {
    const std::size_t end = std::min(batch.size, begin + chunk);
    Batch part;
    part.size = end - begin;
    part.num_local = batch.num_local;
    part.local_window = batch.local_window;
    part.num_oci = batch.num_oci;
    part.oci_window = batch.oci_window;
    part.local.assign(batch.local.begin() + static_cast<std::ptrdiff_t>(begin * nl),
                      batch.local.begin() + static_cast<std::ptrdiff_t>(end * nl));
    part.oci.assign(batch.oci.begin() + static_cast<std::ptrdiff_t>(begin * no),
                    batch.oci.begin() + static_cast<std::ptrdiff_t>(end * no));
    part.labels.assign(part.size, 0);
    Tape tape(Tape::Mode::kInference);
    const auto res = Forward(tape, part);
    out.insert(out.end(), res.confidence.begin(), res.confidence.end());
  }
  return out;
}

// --- checkpoint -----------------------------------------------------------------

void SaveCheckpoint(const std::filesystem::path& prefix, const Model& model,
                    const nlohmann::json& metadata) {
  nlohmann::json manifest;
  manifest["kind"] = ToString(model.kind());
  manifest["config"] = ToJson(model.config());
  manifest["config_hash"] = Fnv1a64(manifest["config"].dump());
  manifest["metadata"] = metadata;
  auto params = nlohmann::json::array();
  std::vector<double> flat;
  for (const auto& [name, t] : model.params().Named()) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"offset", flat.size()}});
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  }
  manifest["params"] = params;
  manifest["num_scalars"] = flat.size();
  if (model.kind() == ModelKind::kGnnCausal && model.adjacency()) {
    const auto& a = *model.adjacency();
    std::vector<std::vector<double>> rows(a.size(), std::vector<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a.size(); ++j)
        rows[i][j] = a.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    manifest["adjacency"] = {{"nodes", a.nodes}, {"weights", rows}};
  }
  std::filesystem::path bin = prefix;
  bin += ".bin";
  std::filesystem::path json = prefix;
  json += ".json";
  if (bin.has_parent_path()) std::filesystem::create_directories(bin.parent_path());
  std::ofstream os(bin, std::ios::binary);
  CGNN_CHECK(os.good(), ErrorKind::kIo, "cannot write " + bin.string());
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  WriteJson(json, manifest);
}

Model LoadCheckpoint(const std::filesystem::path& prefix, nlohmann::json* metadata) {
  std::filesystem::path bin = prefix;
  bin += ".bin";
  std::filesystem::path json = prefix;
  json += ".json";
  const auto manifest = ReadJson(json);
  try {
    const ModelKind kind = ParseModelKind(manifest.at("kind").get<std::string>());
    const ModelConfig config = ModelConfigFromJson(manifest.at("config"));
    const auto count = manifest.at("num_scalars").get<std::size_t>();
    std::vector<double> flat(count);
    std::ifstream is(bin, std::ios::binary);
    CGNN_CHECK(is.good(), ErrorKind::kIo, "cannot read " + bin.string());
    is.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(count * sizeof(double)));
    CGNN_CHECK(is.gcount() == static_cast<std::streamsize>(count * sizeof(double)), ErrorKind::kIo,
               "checkpoint binary is truncated");

    // Shapes come from a fresh init so a manifest cannot smuggle in a different architecture.
    Rng rng(0);
    ModelParams params = InitParams(kind, config, rng);
    auto named = params.Named();
    const auto& entries = manifest.at("params");
    CGNN_CHECK(entries.size() == named.size(), ErrorKind::kIo, "checkpoint parameter count mismatch");
    for (std::size_t k = 0; k < named.size(); ++k) {
      const auto& e = entries[k];
      CGNN_CHECK(e.at("name").get<std::string>() == named[k].first &&
                     e.at("shape").get<Shape>() == named[k].second.shape(),
                 ErrorKind::kIo, "checkpoint parameter " + named[k].first + " does not match");
      const auto offset = e.at("offset").get<std::size_t>();
      CGNN_CHECK(offset + named[k].second.size() <= count, ErrorKind::kIo, "checkpoint offset overflow");
      auto dst = named[k].second.mutable_values();
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    }
    std::optional<AdjacencyMatrix> adjacency;
    if (manifest.contains("adjacency")) {
      AdjacencyMatrix a;
      a.kind = AdjacencyKind::kCausal;
      a.nodes = manifest["adjacency"].at("nodes").get<std::vector<std::string>>();
      const auto rows = manifest["adjacency"].at("weights").get<std::vector<std::vector<double>>>();
      a.weights.resize(static_cast<Eigen::Index>(a.nodes.size()), static_cast<Eigen::Index>(a.nodes.size()));
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
          a.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      adjacency = a;
    }
    if (metadata) *metadata = manifest.value("metadata", nlohmann::json::object());
    return Model(kind, config, std::move(params), std::move(adjacency));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed checkpoint manifest: ") + e.what());
  }
}

}  // namespace cgnn
