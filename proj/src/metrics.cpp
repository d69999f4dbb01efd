#include "cgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"

namespace cgnn {

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts CheckInputs(std::span<const double> scores, std::span<const int> labels) {
  CGNN_CHECK(scores.size() == labels.size(), ErrorKind::kDimension, "scores and labels differ in length");
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    CGNN_CHECK(std::isfinite(scores[i]), ErrorKind::kNumerical, "non-finite score");
    CGNN_CHECK(labels[i] == 0 || labels[i] == 1, ErrorKind::kLabel, "labels must be 0 or 1");
    (labels[i] ? c.pos : c.neg)++;
  }
  CGNN_CHECK(c.pos > 0 && c.neg > 0, ErrorKind::kUndefinedMetric, "metric needs both classes present");
  return c;
}

std::vector<std::size_t> DescendingOrder(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Cumulative (tp, fp) at the end of each tie group, with its threshold.
struct Step {
  double threshold;
  std::size_t tp;
  std::size_t fp;
};

std::vector<Step> ThresholdSteps(std::span<const double> scores, std::span<const int> labels) {
  const auto idx = DescendingOrder(scores);
  std::vector<Step> steps;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    (labels[idx[k]] ? tp : fp)++;
    if (k + 1 == idx.size() || scores[idx[k + 1]] != scores[idx[k]])
      steps.push_back({scores[idx[k]], tp, fp});
  }
  return steps;
}

double Mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double Std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double Auprc(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = CheckInputs(scores, labels);
  double ap = 0.0;
  std::size_t prev_tp = 0;
  for (const auto& s : ThresholdSteps(scores, labels)) {
    if (s.tp != prev_tp) {
      const double precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
      ap += precision * static_cast<double>(s.tp - prev_tp) / static_cast<double>(c.pos);
      prev_tp = s.tp;
    }
  }
  return ap;
}

double Auroc(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = CheckInputs(scores, labels);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e + 1 < idx.size() && scores[idx[e + 1]] == scores[idx[k]]) ++e;
    const double mid = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t q = k; q <= e; ++q)
      if (labels[idx[q]]) rank_sum += mid;
    k = e + 1;
  }
  const double np = static_cast<double>(c.pos), nn = static_cast<double>(c.neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double PositiveFraction(std::span<const int> labels) {
  CGNN_CHECK(!labels.empty(), ErrorKind::kUndefinedMetric, "no labels");
  std::size_t pos = 0;
  for (int y : labels) {
    CGNN_CHECK(y == 0 || y == 1, ErrorKind::kLabel, "labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  return static_cast<double>(pos) / static_cast<double>(labels.size());
}

std::vector<CurvePoint> PrCurve(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = CheckInputs(scores, labels);
  std::vector<CurvePoint> out;
  for (const auto& s : ThresholdSteps(scores, labels))
    out.push_back({s.threshold, static_cast<double>(s.tp) / static_cast<double>(c.pos),
                   static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp)});
  return out;
}

std::vector<CurvePoint> RocCurve(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = CheckInputs(scores, labels);
  std::vector<CurvePoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (const auto& s : ThresholdSteps(scores, labels))
    out.push_back({s.threshold, static_cast<double>(s.fp) / static_cast<double>(c.neg),
                   static_cast<double>(s.tp) / static_cast<double>(c.pos)});
  return out;
}

double EvalReport::MeanAuprc() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.auprc);
  return Mean(v);
}
double EvalReport::MeanAuroc() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.auroc);
  return Mean(v);
}
double EvalReport::StdAuprc() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.auprc);
  return Std(v);
}
double EvalReport::StdAuroc() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.auroc);
  return Std(v);
}

nlohmann::json ToJson(const EvalReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["horizon"] = r.horizon;
  j["num_samples"] = r.num_samples;
  j["num_positives"] = r.num_positives;
  j["positive_fraction"] = r.positive_fraction;
  auto seeds = nlohmann::json::array();
  for (const auto& s : r.seeds)
    seeds.push_back({{"seed", s.seed}, {"auprc", s.auprc}, {"auroc", s.auroc}});
  j["seeds"] = seeds;
  j["mean"] = {{"auprc", r.MeanAuprc()}, {"auroc", r.MeanAuroc()}};
  j["std"] = {{"auprc", r.StdAuprc()}, {"auroc", r.StdAuroc()}};
  return j;
}

void WriteCurvesCsv(const std::filesystem::path& path, const EvalReport& report) {
  std::ostringstream os;
  os << "seed,curve,threshold,x,y\n";
  for (const auto& s : report.seeds) {
    for (const auto& p : s.pr_curve)
      os << s.seed << ",pr," << FormatDouble(p.threshold) << ',' << FormatDouble(p.x) << ','
         << FormatDouble(p.y) << '\n';
    for (const auto& p : s.roc_curve)
      os << s.seed << ",roc," << FormatDouble(p.threshold) << ',' << FormatDouble(p.x) << ','
         << FormatDouble(p.y) << '\n';
  }
  WriteText(path, os.str());
}

}  // namespace cgnn
