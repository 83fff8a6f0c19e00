#pragma once

#include <array>
#include <memory>

#include "lesionseg/grabcut.hpp"

namespace lesionseg {

/// Pixel index sets (linear_index order) for the three loss regions:
/// diameter pixels, estimated foreground, estimated background.
struct RegionPartition {
  std::vector<int> recist_idx;
  std::vector<int> fg_idx;
  std::vector<int> bg_idx;
};

/// Diameter pixels win over the mask label; the rest of the mask splits
/// into foreground/background sets.
RegionPartition partition_from_mask(const ByteImage& y, const ByteImage& recist_raster);
RegionPartition partition_from_mask(const ByteImage& y, const RoiImage& roi, const DiameterCross& cross);

/// Linear warm-up of the region weights over the first `fraction` of
/// training, flat at `end` afterwards.
struct RampSchedule {
  double start = 0.1;
  double end = 1.0;
  double fraction = 0.5;
};

struct LossConfig {
  double alpha = 1.0;  // foreground-region weight at full ramp
  double beta = 1.0;   // background-region weight at full ramp
  RampSchedule ramp;
};

double ramp_value(const RampSchedule& ramp, int epoch, int total_epochs);

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

LossWeights weights_at(const LossConfig& cfg, int epoch, int total_epochs);

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] inside the
/// logs so saturated predictions stay finite.
inline constexpr double kProbClamp = 1e-7;

/// L = mean_R(-log p) + alpha * mean_F(-log p) + beta * mean_B(-log(1-p)).
/// Empty R is an error; an empty F or B term contributes 0 (with a warning
/// on stderr).
double region_loss(const Image& yhat, const RegionPartition& part, double alpha, double beta);

/// dL/d yhat, elementwise; zero outside the three regions and where the
/// clamp is active.
Image region_loss_grad(const Image& yhat, const RegionPartition& part, double alpha, double beta);

inline constexpr int kFeatureCount = 12;
inline constexpr std::array<int, 4> kBoxRadii{1, 2, 4, 8};

/// Per-ROI standardization divides by max(frame sd, kStdFloor), guarding
/// near-constant feature columns against division blowup.
inline constexpr double kStdFloor = 0.05;

/// Row i = features of the pixel with linear index i: intensity, box mean
/// and box std at kBoxRadii (windows truncated at the border), gradient
/// magnitude, and (x, y) offsets from the ROI center normalized to [-1, 1].
using FeatureMatrix = Eigen::MatrixXd;

FeatureMatrix extract_features_raw(const RoiImage& roi);

/// Raw features standardized per ROI against the crop's outer frame (the
/// background band of the 2x-bbox crop): per column, subtract the frame
/// mean and divide by max(frame sd, kStdFloor). Background standardizes to
/// ~0 on every slice of a lesion tube, including background-only slices.
FeatureMatrix extract_features(const RoiImage& roi);

struct FeatureSpec {
  int count = kFeatureCount;
  std::vector<int> radii{kBoxRadii.begin(), kBoxRadii.end()};
};

/// One-hidden-layer network over per-pixel features. theta packs
/// [W1 (hidden x d, row-major), b1, w2, b2].
struct LearnerModel {
  std::string kind = "mlp32";
  FeatureSpec feature;
  int hidden = 32;
  Eigen::VectorXd theta;

  int param_count() const { return hidden * (feature.count + 2) + 1; }
};

/// Xavier-uniform weights, zero biases.
LearnerModel init_model(int hidden, Rng& rng);

/// Per-pixel probabilities for pre-extracted feature rows.
Eigen::VectorXd predict_features(const LearnerModel& m, const FeatureMatrix& features);

Image predict(const LearnerModel& m, const RoiImage& roi);

/// Loss at the model's current parameters; when `grad` is non-null it
/// receives dL/dtheta (same packing as theta).
double loss_and_gradient(const LearnerModel& m, const FeatureMatrix& features, const RegionPartition& part, double alpha, double beta, Eigen::VectorXd* grad);

struct TrainExample {
  RoiImage roi;
  RegionPartition part;
};

/// Mini-batch SGD, one ROI per step, lr 1e-2 halved after 5 epochs without
/// relative improvement > 1e-4 (tracked only between epochs with equal ramp
/// weights). Deterministic for a fixed rng. `epoch_loss` records the mean
/// training loss per epoch.
LearnerModel train(const std::vector<TrainExample>& data, const LossConfig& cfg, int epochs, Rng& rng, std::vector<double>* epoch_loss = nullptr);

/// Versioned JSON parameter dump; loading a mismatched feature spec fails.
void save_model(const LearnerModel& m, const std::filesystem::path& path);
LearnerModel load_model(const std::filesystem::path& path);

/// "-GC" refinement: regenerate seeds from the probability map and rerun
/// GrabCut. `cross` is in parent-volume pixel coordinates.
ByteImage refine_with_grabcut(const RoiImage& roi, const Image& prob, const DiameterCross& cross, const GrabCutParams& params);

/// Training/prediction backend used by the slice-propagation driver; any
/// implementation honoring predict's contract can replace the built-in.
class LearnerBackend {
 public:
  virtual ~LearnerBackend() = default;
  virtual LearnerModel train(const std::vector<TrainExample>& data, const LossConfig& cfg, int epochs, Rng& rng) const = 0;
  virtual Image predict(const LearnerModel& m, const RoiImage& roi) const = 0;
};

class MlpBackend final : public LearnerBackend {
 public:
  LearnerModel train(const std::vector<TrainExample>& data, const LossConfig& cfg, int epochs, Rng& rng) const override;
  Image predict(const LearnerModel& m, const RoiImage& roi) const override;
};

}  // namespace lesionseg
