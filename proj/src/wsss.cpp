#include "lesionseg/wsss.hpp"

#include "lesionseg/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lesionseg {

namespace {

void paste_slice(MaskVolume& out, const ByteImage& mask, const Eigen::Vector3i& origin) {
  const int w = static_cast<int>(mask.cols());
  const int h = static_cast<int>(mask.rows());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(origin.x() + x, origin.y() + y, origin.z()) = mask(y, x);
}

bool slice_in_volume(const Volume& v, int z) { return z >= 0 && z < v.dims[2]; }

void validate_wsss_config(const WsssConfig& cfg) {
  if (cfg.k_slices < 1 || cfg.k_slices % 2 == 0) throw std::invalid_argument("wsss: k_slices must be odd and >= 1");
  if (cfg.epochs < 1) throw std::invalid_argument("wsss: epochs must be positive");
  if (cfg.jobs < 1) throw std::invalid_argument("wsss: jobs must be positive");
}

struct StageLabel {
  std::string lesion_id;
  int offset = 0;
  ByteImage mask;
};

void write_checkpoint(const std::filesystem::path& dir, int stage, const LearnerModel& model, const std::vector<StageLabel>& labels) {
  if (dir.empty()) return;
  const std::filesystem::path stage_dir = dir / ("stage_" + std::to_string(stage));
  std::filesystem::create_directories(stage_dir / "labels");
  save_model(model, stage_dir / "model.bin");
  for (const auto& l : labels)
    save_seed_mask(l.mask, stage_dir / "labels" / (l.lesion_id + "_" + std::to_string(l.offset) + ".raw"));
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& annotation_csv) {
  const std::vector<AnnotationRow> rows = read_annotation_csv(annotation_csv);
  if (rows.empty()) throw std::runtime_error("dataset is empty: " + annotation_csv.string());
  const std::filesystem::path base = annotation_csv.parent_path();

  Dataset data;
  data.entries.reserve(rows.size());
  for (const auto& row : rows) {
    LesionEntry e;
    e.lesion_id = row.lesion_id;
    e.volume = load_volume(base / row.volume_path);
    if (!slice_in_volume(e.volume, row.slice_index))
      throw std::runtime_error("annotation slice out of range for lesion " + row.lesion_id);
    e.annotation = annotation_from_row(row, e.volume.spacing);

    const std::filesystem::path gt_path = base / ("gt_" + row.lesion_id + ".raw");
    if (std::filesystem::exists(gt_path)) {
      MaskVolume gt = load_mask_volume(gt_path);
      if (gt.dims != e.volume.dims) throw std::runtime_error("ground truth dims differ for lesion " + row.lesion_id);
      e.gt = std::move(gt);
    }
    data.entries.push_back(std::move(e));
  }
  return data;
}

MaskVolume grabcut_3de(const Volume& v, const RecistAnnotation& r, const GrabCutParams& p, int jobs) {
  if (!slice_in_volume(v, r.slice_index)) throw std::invalid_argument("grabcut_3de: annotation slice out of range");
  MaskVolume out;
  out.dims = v.dims;
  out.voxels.assign(v.voxel_count(), 0);

  const BBox box = bbox_of(r);
  // Propagation bounds the slab; collect the valid offsets first so the
  // per-slice cuts can run in parallel.
  std::vector<int> offsets;
  offsets.push_back(0);
  for (int o = 1; propagate(r, o) && slice_in_volume(v, r.slice_index + o); ++o) offsets.push_back(o);
  for (int o = -1; propagate(r, o) && slice_in_volume(v, r.slice_index + o); --o) offsets.push_back(o);

  std::vector<std::pair<ByteImage, Eigen::Vector3i>> slices(offsets.size());
  parallel_for(static_cast<int>(offsets.size()), jobs, [&](int i) {
    const int o = offsets[static_cast<std::size_t>(i)];
    const PropagatedRecist rhat = *propagate(r, o);
    const RoiImage roi = crop_roi(v, box, r.slice_index + o);
    const SeedMask seeds = seeds_from_recist(roi, cross_of(rhat));
    slices[static_cast<std::size_t>(i)] = {grabcut(roi, seeds, p), roi.origin};
  });
  for (const auto& [mask, origin] : slices) paste_slice(out, mask, origin);
  return out;
}

LearnerModel wsss_train(const Dataset& data, const WsssConfig& cfg, const LearnerBackend& backend) {
  validate_wsss_config(cfg);
  if (data.entries.empty()) throw std::invalid_argument("wsss_train: empty dataset");
  const Rng root(cfg.seed);

  // Stage 0: GrabCut-R labels on the RECIST slices. These do not depend on
  // the model and are reused verbatim by every later stage.
  const std::size_t n = data.entries.size();
  std::vector<TrainExample> base(n);
  std::vector<StageLabel> base_labels(n);
  parallel_for(static_cast<int>(n), cfg.jobs, [&](int i) {
    const LesionEntry& e = data.entries[static_cast<std::size_t>(i)];
    const RoiImage roi = crop_roi(e.volume, bbox_of(e.annotation), e.annotation.slice_index);
    const SeedMask seeds = seeds_from_recist(roi, cross_of(e.annotation));
    const ByteImage y = grabcut(roi, seeds, cfg.grabcut);
    base[static_cast<std::size_t>(i)] = {roi, partition_from_mask(y, roi, cross_of(e.annotation))};
    base_labels[static_cast<std::size_t>(i)] = {e.lesion_id, 0, y};
  });

  Rng stage_rng = root.fork(0);
  LearnerModel model = backend.train(base, cfg.loss, cfg.epochs, stage_rng);
  write_checkpoint(cfg.checkpoint_dir, 0, model, base_labels);

  const int max_stage = (cfg.k_slices - 1) / 2;
  for (int stage = 1; stage <= max_stage; ++stage) {
    // Every off-slice label is regenerated from the current model, so no
    // stage trains against stale pseudo-labels.
    struct Item {
      int lesion;
      int offset;
    };
    std::vector<Item> items;
    for (std::size_t li = 0; li < n; ++li)
      for (int o = 1; o <= stage; ++o)
        for (int signed_o : {o, -o}) items.push_back({static_cast<int>(li), signed_o});

    std::vector<TrainExample> examples = base;
    std::vector<std::optional<TrainExample>> extra(items.size());
    std::vector<std::optional<StageLabel>> labels(items.size());
    parallel_for(static_cast<int>(items.size()), cfg.jobs, [&](int i) {
      const auto [li, o] = items[static_cast<std::size_t>(i)];
      const LesionEntry& e = data.entries[static_cast<std::size_t>(li)];
      const auto rhat = propagate(e.annotation, o);
      if (!rhat || !slice_in_volume(e.volume, e.annotation.slice_index + o)) return;
      const RoiImage roi = crop_roi(e.volume, bbox_of(e.annotation), e.annotation.slice_index + o);
      const Image prob = backend.predict(model, roi);
      const SeedMask seeds = seeds_off_slice(roi, prob, cross_of(*rhat));
      const ByteImage y = grabcut(roi, seeds, cfg.grabcut);
      extra[static_cast<std::size_t>(i)] = TrainExample{roi, partition_from_mask(y, roi, cross_of(*rhat))};
      labels[static_cast<std::size_t>(i)] = StageLabel{e.lesion_id, o, y};
    });
    std::vector<StageLabel> stage_labels = base_labels;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (extra[i]) examples.push_back(std::move(*extra[i]));
      if (labels[i]) stage_labels.push_back(std::move(*labels[i]));
    }

    Rng rng = root.fork(static_cast<std::uint64_t>(stage));
    model = backend.train(examples, cfg.loss, cfg.epochs, rng);
    write_checkpoint(cfg.checkpoint_dir, stage, model, stage_labels);
  }
  return model;
}

MaskVolume segment_volume(const LearnerModel& m, const Volume& v, const RecistAnnotation& r, const WsssConfig& cfg, bool refine, const LearnerBackend& backend) {
  validate_wsss_config(cfg);
  if (!slice_in_volume(v, r.slice_index)) throw std::invalid_argument("segment_volume: annotation slice out of range");
  MaskVolume out;
  out.dims = v.dims;
  out.voxels.assign(v.voxel_count(), 0);

  const BBox box = bbox_of(r);
  // The model's thresholded prediction drives the stop rule; refinement only
  // upgrades the stored masks. A refined mask contains the pinned diameter
  // seeds and so is never empty by itself: past the lesion pole those seeds
  // keep hallucinating a remnant, so the refined walk stops once the
  // prediction endorses less than half of the refined mask. A model that is
  // silent on the RECIST slice itself carries no stop information: the walk
  // then runs on the seeds_off_slice fallback until propagation terminates,
  // which reproduces grabcut_3de.
  const bool model_speaks = (backend.predict(m, crop_roi(v, box, r.slice_index)).array() >= 0.5).any();
  const auto process = [&](int offset) -> bool {
    const auto rhat = propagate(r, offset);
    if (!rhat || !slice_in_volume(v, r.slice_index + offset)) return false;
    const RoiImage roi = crop_roi(v, box, r.slice_index + offset);
    const Image prob = backend.predict(m, roi);
    const ByteImage thr = (prob >= 0.5).cast<std::uint8_t>();
    if (model_speaks && (thr != 0).count() == 0) return false;
    ByteImage mask = thr;
    if (refine) {
      mask = refine_with_grabcut(roi, prob, cross_of(*rhat), cfg.grabcut);
      if (model_speaks) {
        Eigen::Index agree = 0;
        Eigen::Index total = 0;
        for (Eigen::Index i = 0; i < mask.size(); ++i)
          if (mask.data()[i]) {
            ++total;
            agree += thr.data()[i] != 0;
          }
        if (2 * agree < total) return false;
      }
    }
    if ((mask != 0).count() == 0) return false;
    paste_slice(out, mask, roi.origin);
    return true;
  };

  if (!process(0)) return out;
  for (int o = 1; process(o); ++o) {
  }
  for (int o = -1; process(o); --o) {
  }
  return out;
}

ProbabilityVolume predict_volume(const LearnerModel& m, const Volume& v, const RecistAnnotation& r, const LearnerBackend& backend) {
  if (!slice_in_volume(v, r.slice_index)) throw std::invalid_argument("predict_volume: annotation slice out of range");
  ProbabilityVolume out;
  out.dims = v.dims;
  out.values.assign(v.voxel_count(), 0.0);

  const BBox box = bbox_of(r);
  const auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(v.dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(v.dims[1]) * z);
  };
  const auto process = [&](int offset) -> bool {
    if (!propagate(r, offset) || !slice_in_volume(v, r.slice_index + offset)) return false;
    const RoiImage roi = crop_roi(v, box, r.slice_index + offset);
    const Image prob = backend.predict(m, roi);
    for (int y = 0; y < roi.height(); ++y)
      for (int x = 0; x < roi.width(); ++x)
        out.values[idx(roi.origin.x() + x, roi.origin.y() + y, roi.origin.z())] = prob(y, x);
    return true;
  };
  process(0);
  for (int o = 1; process(o); ++o) {
  }
  for (int o = -1; process(o); --o) {
  }
  return out;
}

std::vector<OffsetDice> offset_dice(const MaskVolume& pred, const MaskVolume& gt, int recist_slice, int max_offset) {
  if (pred.dims != gt.dims) throw std::invalid_argument("offset_dice: dims differ");
  if (max_offset < 0) throw std::invalid_argument("offset_dice: max_offset must be >= 0");
  std::vector<OffsetDice> curve;
  for (int o = 0; o <= max_offset; ++o) {
    OffsetDice pt{o, 0.0, 0};
    double sum = 0.0;
    std::vector<int> slices{recist_slice - o};
    if (o > 0) slices.push_back(recist_slice + o);
    for (const int z : slices) {
      if (z < 0 || z >= pred.dims[2]) continue;
      sum += dice(pred.slice(z), gt.slice(z));
      ++pt.count;
    }
    if (pt.count > 0) pt.mean_dice = sum / pt.count;
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace lesionseg
