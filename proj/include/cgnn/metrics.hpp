#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cgnn {

// Average precision: sum over score thresholds (equal scores form one
// threshold) of precision times the recall gained there.
double Auprc(std::span<const double> scores, std::span<const int> labels);
// P(score_pos > score_neg) + P(equal) / 2, from midranks.
double Auroc(std::span<const double> scores, std::span<const int> labels);
double PositiveFraction(std::span<const int> labels);

struct CurvePoint {
  double threshold;
  double x;  // recall (PR) or false positive rate (ROC)
  double y;  // precision (PR) or true positive rate (ROC)
};
// One point per distinct score, thresholds descending.
std::vector<CurvePoint> PrCurve(std::span<const double> scores, std::span<const int> labels);
// Starts at (0, 0) and ends at (1, 1).
std::vector<CurvePoint> RocCurve(std::span<const double> scores, std::span<const int> labels);

struct SeedResult {
  std::uint64_t seed = 0;
  double auprc = 0.0;
  double auroc = 0.0;
  std::vector<CurvePoint> pr_curve;
  std::vector<CurvePoint> roc_curve;
};

struct EvalReport {
  std::string model;
  std::size_t horizon = 0;
  std::size_t num_samples = 0;
  std::size_t num_positives = 0;
  double positive_fraction = 0.0;  // random-classifier AUPRC
  std::vector<SeedResult> seeds;

  double MeanAuprc() const;
  double MeanAuroc() const;
  double StdAuprc() const;
  double StdAuroc() const;
};

nlohmann::json ToJson(const EvalReport& report);
// Columns seed,curve,threshold,x,y.
void WriteCurvesCsv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace cgnn
