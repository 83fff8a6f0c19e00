#pragma once

#include "lesionseg/learner.hpp"
#include "lesionseg/metrics.hpp"

namespace lesionseg {

struct LesionEntry {
  std::string lesion_id;
  Volume volume;
  RecistAnnotation annotation;
  std::optional<MaskVolume> gt;  // present when a gt_<id> mask sits next to the CSV
};

struct Dataset {
  std::vector<LesionEntry> entries;
};

/// Reads annotations.csv; volume paths resolve relative to the CSV.
Dataset load_dataset(const std::filesystem::path& annotation_csv);

struct WsssConfig {
  int k_slices = 5;  // odd: slices r-j..r+j train at stage j = (k-1)/2
  int epochs = 60;   // per training stage
  GrabCutParams grabcut;
  LossConfig loss;
  std::uint64_t seed = 42;
  int jobs = 1;
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
};

/// GrabCut per slice on Pythagorean-propagated seeds, no learning. Slices
/// past termination (or the volume edge) stay empty.
MaskVolume grabcut_3de(const Volume& v, const RecistAnnotation& r, const GrabCutParams& p, int jobs = 1);

/// Slice-propagated self-training. Stage 0 trains on GrabCut labels of the
/// RECIST slices; stage j regenerates labels for offsets +-1..+-j from the
/// current model and retrains from scratch. Stage-j training consumes
/// Rng(cfg.seed).fork(j), so k_slices=1 reproduces a plain train() call
/// with Rng(cfg.seed).fork(0).
LearnerModel wsss_train(const Dataset& data, const WsssConfig& cfg, const LearnerBackend& backend);

/// Stacks per-slice segmentations outward from the RECIST slice; a
/// direction stops at the first empty mask, at propagation termination, or
/// (refine=on) once the thresholded prediction endorses less than half of
/// the refined mask. A model silent on the RECIST slice disables the
/// prediction-driven stops, leaving the grabcut_3de fallback behavior.
MaskVolume segment_volume(const LearnerModel& m, const Volume& v, const RecistAnnotation& r, const WsssConfig& cfg, bool refine, const LearnerBackend& backend);

/// Raw per-slice probabilities over the propagation slab, zeros elsewhere.
ProbabilityVolume predict_volume(const LearnerModel& m, const Volume& v, const RecistAnnotation& r, const LearnerBackend& backend);

struct OffsetDice {
  int offset = 0;  // |slice - RECIST slice|
  double mean_dice = 0.0;
  int count = 0;  // slices aggregated (1 or 2 per offset)
};

/// Per-|offset| mean DICE of axial slices against ground truth.
std::vector<OffsetDice> offset_dice(const MaskVolume& pred, const MaskVolume& gt, int recist_slice, int max_offset);

}  // namespace lesionseg
