#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lesionseg/core.hpp"
#include "lesionseg/volume.hpp"

namespace lesionseg {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

ConfusionCounts confusion(const ByteImage& pred, const ByteImage& gt);
ConfusionCounts confusion(const MaskVolume& pred, const MaskVolume& gt);

/// 2TP / (2TP + FP + FN); two empty masks agree perfectly (1.0).
double dice(const ConfusionCounts& c);
double dice(const ByteImage& pred, const ByteImage& gt);
double dice(const MaskVolume& pred, const MaskVolume& gt);

struct PrecisionRecall {
  double precision = 1.0;  // 1.0 when nothing is predicted
  double recall = 1.0;     // 1.0 when the reference is empty
};

PrecisionRecall precision_recall(const ConfusionCounts& c);
PrecisionRecall precision_recall(const ByteImage& pred, const ByteImage& gt);
PrecisionRecall precision_recall(const MaskVolume& pred, const MaskVolume& gt);

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 1.0;
};

/// Voxel-probability container matching MaskVolume's layout.
struct ProbabilityVolume {
  Eigen::Vector3i dims{1, 1, 1};
  std::vector<double> values;
};

/// Precision/recall of {prob >= t} for n_thresholds values of t uniform on
/// [0, 1] inclusive. Recall is non-increasing in t.
std::vector<PrPoint> pr_curve(const double* prob, const std::uint8_t* gt, std::size_t n, int n_thresholds);
std::vector<PrPoint> pr_curve(const Image& prob, const ByteImage& gt, int n_thresholds);
std::vector<PrPoint> pr_curve(const ProbabilityVolume& prob, const MaskVolume& gt, int n_thresholds);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

Aggregate aggregate(const std::vector<double>& values);

struct MetricsRow {
  std::string lesion_id;
  std::string scope;  // e.g. "slice", "volume", or an offset tag
  double dice = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Header `lesion_id,scope,dice,precision,recall`, fixed 6-decimal values.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// Header `threshold,precision,recall`, fixed 6-decimal values.
void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& points);

}  // namespace lesionseg
