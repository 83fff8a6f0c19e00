#include "lesionseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lesionseg {

namespace {

ConfusionCounts count_pair(const std::uint8_t* pred, const std::uint8_t* gt, std::size_t n) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  return c;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ConfusionCounts confusion(const ByteImage& pred, const ByteImage& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw std::invalid_argument("confusion: mask shapes differ");
  return count_pair(pred.data(), gt.data(), static_cast<std::size_t>(pred.size()));
}

ConfusionCounts confusion(const MaskVolume& pred, const MaskVolume& gt) {
  if (pred.dims != gt.dims) throw std::invalid_argument("confusion: mask shapes differ");
  return count_pair(pred.voxels.data(), gt.voxels.data(), pred.voxels.size());
}

double dice(const ConfusionCounts& c) {
  const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dice(const ByteImage& pred, const ByteImage& gt) { return dice(confusion(pred, gt)); }
double dice(const MaskVolume& pred, const MaskVolume& gt) { return dice(confusion(pred, gt)); }

PrecisionRecall precision_recall(const ConfusionCounts& c) {
  PrecisionRecall pr;
  if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

PrecisionRecall precision_recall(const ByteImage& pred, const ByteImage& gt) {
  return precision_recall(confusion(pred, gt));
}

PrecisionRecall precision_recall(const MaskVolume& pred, const MaskVolume& gt) {
  return precision_recall(confusion(pred, gt));
}

std::vector<PrPoint> pr_curve(const double* prob, const std::uint8_t* gt, std::size_t n, int n_thresholds) {
  if (n_thresholds < 2) throw std::invalid_argument("pr_curve: need at least two thresholds");
  std::vector<PrPoint> points;
  points.reserve(static_cast<std::size_t>(n_thresholds));
  for (int i = 0; i < n_thresholds; ++i) {
    const double t = static_cast<double>(i) / (n_thresholds - 1);
    ConfusionCounts c;
    for (std::size_t j = 0; j < n; ++j) {
      const bool p = prob[j] >= t;
      const bool g = gt[j] != 0;
      c.tp += p && g;
      c.fp += p && !g;
      c.fn += !p && g;
    }
    const PrecisionRecall pr = precision_recall(c);
    points.push_back({t, pr.precision, pr.recall});
  }
  return points;
}

std::vector<PrPoint> pr_curve(const Image& prob, const ByteImage& gt, int n_thresholds) {
  if (prob.rows() != gt.rows() || prob.cols() != gt.cols())
    throw std::invalid_argument("pr_curve: shapes differ");
  return pr_curve(prob.data(), gt.data(), static_cast<std::size_t>(prob.size()), n_thresholds);
}

std::vector<PrPoint> pr_curve(const ProbabilityVolume& prob, const MaskVolume& gt, int n_thresholds) {
  if (prob.dims != gt.dims) throw std::invalid_argument("pr_curve: shapes differ");
  return pr_curve(prob.values.data(), gt.voxels.data(), prob.values.size(), n_thresholds);
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "lesion_id,scope,dice,precision,recall\n";
  for (const auto& r : rows) {
    out << r.lesion_id << ',' << r.scope << ',' << format_fixed(r.dice) << ',' << format_fixed(r.precision) << ','
        << format_fixed(r.recall) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<MetricsRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && line.rfind("lesion_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::istringstream ss(line);
    MetricsRow r;
    std::string field;
    if (!std::getline(ss, r.lesion_id, ',') || !std::getline(ss, r.scope, ','))
      throw std::runtime_error("malformed metrics row: " + line);
    double* slots[3] = {&r.dice, &r.precision, &r.recall};
    for (double* slot : slots) {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("malformed metrics row: " + line);
      *slot = std::stod(field);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "threshold,precision,recall\n";
  for (const auto& p : points)
    out << format_fixed(p.threshold) << ',' << format_fixed(p.precision) << ',' << format_fixed(p.recall) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace lesionseg
