#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lesionseg/metrics.hpp"
#include "lesionseg/phantom.hpp"
#include "lesionseg/seeds.hpp"
#include "lesionseg/wsss.hpp"

namespace fs = std::filesystem;
using namespace lesionseg;

namespace {

int g_verbose = 0;

void log_progress(const std::string& msg) {
  if (g_verbose > 0) std::cerr << msg << '\n';
}

MaskVolume embed_slice(const Volume& v, const ByteImage& mask, const Eigen::Vector3i& origin) {
  MaskVolume out;
  out.dims = v.dims;
  out.voxels.assign(v.voxel_count(), 0);
  for (int y = 0; y < mask.rows(); ++y)
    for (int x = 0; x < mask.cols(); ++x) out.at(origin.x() + x, origin.y() + y, origin.z()) = mask(y, x);
  return out;
}

ByteImage segment_one_slice(const LesionEntry& e, const std::string& method, const GrabCutParams& params, RoiImage& roi_out) {
  const RecistAnnotation& r = e.annotation;
  const RoiImage roi = crop_roi(e.volume, bbox_of(r), r.slice_index);
  roi_out = roi;
  if (method == "recist-d") return recist_d_mask(roi, cross_of(r));
  if (method == "grabcut-r") return grabcut(roi, seeds_from_recist(roi, cross_of(r)), params);
  if (method == "grabcut-i") return grabcut(roi, seeds_bbox_variant(roi, r, BBoxSeedVariant::kInner), params);
  if (method == "grabcut") {
    // The plain box prompt carries no FG seeds; plant one at the box center
    // so the foreground mixture has a sample.
    SeedMask seeds = seeds_bbox_variant(roi, r, BBoxSeedVariant::kPlain);
    const BBox box = bbox_of(r);
    const int cx = std::clamp(static_cast<int>(std::lround(box.x + box.w / 2.0)) - roi.origin.x(), 0, roi.width() - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(box.y + box.h / 2.0)) - roi.origin.y(), 0, roi.height() - 1);
    seeds(cy, cx) = seed::kFG;
    return grabcut(roi, seeds, params);
  }
  throw std::runtime_error("unknown method: " + method);
}

const MaskVolume& require_gt(const LesionEntry& e) {
  if (!e.gt) throw std::runtime_error("no ground-truth mask for lesion " + e.lesion_id);
  return *e.gt;
}

void add_phantom_gen(CLI::App& app) {
  auto* cmd = app.add_subcommand("phantom-gen", "Generate a synthetic lesion dataset with ground truth");
  auto n = std::make_shared<int>(10);
  auto seed = std::make_shared<std::uint64_t>(42);
  auto noise = std::make_shared<double>(0.1);
  auto out = std::make_shared<std::string>();
  cmd->add_option("--n", *n, "Number of phantoms")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", *seed, "RNG seed");
  cmd->add_option("--recist-noise", *noise, "RECIST length jitter fraction");
  cmd->add_option("--out", *out, "Output directory")->required();
  cmd->callback([=]() {
    write_phantom_dataset(*out, *n, *seed, *noise);
    log_progress("wrote " + std::to_string(*n) + " phantoms to " + *out);
  });
}

void add_segment_slice(CLI::App& app) {
  auto* cmd = app.add_subcommand("segment-slice", "Segment the RECIST slice of every lesion");
  auto csv = std::make_shared<std::string>();
  auto method = std::make_shared<std::string>("grabcut-r");
  auto out_dir = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(42);
  auto jobs = std::make_shared<int>(1);
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--method", *method, "grabcut-r | recist-d | grabcut | grabcut-i")
      ->check(CLI::IsMember({"grabcut-r", "recist-d", "grabcut", "grabcut-i"}));
  cmd->add_option("--out-dir", *out_dir, "Directory for <lesion_id>.raw masks")->required();
  cmd->add_option("--seed", *seed, "RNG seed");
  cmd->add_option("--jobs", *jobs, "Parallel lesions")->check(CLI::PositiveNumber);
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    fs::create_directories(*out_dir);
    const GrabCutParams params;
    std::vector<MaskVolume> results(data.entries.size());
    parallel_for(static_cast<int>(data.entries.size()), *jobs, [&](int i) {
      const auto& e = data.entries[static_cast<std::size_t>(i)];
      RoiImage roi;
      const ByteImage mask = segment_one_slice(e, *method, params, roi);
      results[static_cast<std::size_t>(i)] = embed_slice(e.volume, mask, roi.origin);
    });
    for (std::size_t i = 0; i < data.entries.size(); ++i) {
      save_mask_volume(results[i], fs::path(*out_dir) / (data.entries[i].lesion_id + ".raw"));
      log_progress("segmented " + data.entries[i].lesion_id);
    }
  });
}

void add_grabcut_3de(CLI::App& app) {
  auto* cmd = app.add_subcommand("grabcut-3de", "Per-slice GrabCut on propagated RECIST seeds");
  auto csv = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto jobs = std::make_shared<int>(1);
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--out-dir", *out_dir, "Directory for <lesion_id>.raw masks")->required();
  cmd->add_option("--jobs", *jobs, "Parallel slices")->check(CLI::PositiveNumber);
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    fs::create_directories(*out_dir);
    const GrabCutParams params;
    for (const auto& e : data.entries) {
      const MaskVolume mask = grabcut_3de(e.volume, e.annotation, params, *jobs);
      save_mask_volume(mask, fs::path(*out_dir) / (e.lesion_id + ".raw"));
      log_progress("segmented " + e.lesion_id);
    }
  });
}

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Slice-propagated weakly supervised training");
  auto csv = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto checkpoint_dir = std::make_shared<std::string>();
  auto cfg = std::make_shared<WsssConfig>();
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--out", *out, "Model output path")->required();
  cmd->add_option("--k-slices", cfg->k_slices, "Odd slice count (1 = RECIST slice only)");
  cmd->add_option("--epochs", cfg->epochs, "Epochs per stage")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", cfg->seed, "RNG seed");
  cmd->add_option("--jobs", cfg->jobs, "Parallel lesions")->check(CLI::PositiveNumber);
  cmd->add_option("--checkpoint-dir", *checkpoint_dir, "Stage checkpoint directory");
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    cfg->checkpoint_dir = *checkpoint_dir;
    const MlpBackend backend;
    const LearnerModel model = wsss_train(data, *cfg, backend);
    save_model(model, *out);
    log_progress("model written to " + *out);
  });
}

void add_segment_volume(CLI::App& app) {
  auto* cmd = app.add_subcommand("segment-volume", "Volumetric segmentation with a trained model");
  auto csv = std::make_shared<std::string>();
  auto model_path = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto refine = std::make_shared<bool>(false);
  auto cfg = std::make_shared<WsssConfig>();
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--model", *model_path, "Trained model file")->required();
  cmd->add_option("--out-dir", *out_dir, "Directory for <lesion_id>.raw masks")->required();
  cmd->add_flag("--refine", *refine, "GrabCut refinement of each slice");
  cmd->add_option("--seed", cfg->seed, "RNG seed");
  cmd->add_option("--jobs", cfg->jobs, "Parallel lesions")->check(CLI::PositiveNumber);
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    const LearnerModel model = load_model(*model_path);
    fs::create_directories(*out_dir);
    const MlpBackend backend;
    std::vector<MaskVolume> results(data.entries.size());
    parallel_for(static_cast<int>(data.entries.size()), cfg->jobs, [&](int i) {
      const auto& e = data.entries[static_cast<std::size_t>(i)];
      results[static_cast<std::size_t>(i)] = segment_volume(model, e.volume, e.annotation, *cfg, *refine, backend);
    });
    for (std::size_t i = 0; i < data.entries.size(); ++i) {
      save_mask_volume(results[i], fs::path(*out_dir) / (data.entries[i].lesion_id + ".raw"));
      log_progress("segmented " + data.entries[i].lesion_id);
    }
  });
}

void add_evaluate(CLI::App& app) {
  auto* cmd = app.add_subcommand("evaluate", "DICE/precision/recall of predicted masks against ground truth");
  auto csv = std::make_shared<std::string>();
  auto pred_dir = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto scope = std::make_shared<std::string>("volume");
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--pred-dir", *pred_dir, "Directory holding <lesion_id>.raw masks")->required();
  cmd->add_option("--out", *out, "Metrics CSV path")->required();
  cmd->add_option("--scope", *scope, "slice (RECIST slice only) or volume")->check(CLI::IsMember({"slice", "volume"}));
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    std::vector<MetricsRow> rows;
    std::vector<double> dices;
    for (const auto& e : data.entries) {
      const MaskVolume& gt = require_gt(e);
      const MaskVolume pred = load_mask_volume(fs::path(*pred_dir) / (e.lesion_id + ".raw"));
      if (pred.dims != gt.dims) throw std::runtime_error("prediction dims differ for lesion " + e.lesion_id);
      MetricsRow row;
      row.lesion_id = e.lesion_id;
      row.scope = *scope;
      if (*scope == "slice") {
        const ByteImage p = pred.slice(e.annotation.slice_index);
        const ByteImage g = gt.slice(e.annotation.slice_index);
        row.dice = dice(p, g);
        const PrecisionRecall pr = precision_recall(p, g);
        row.precision = pr.precision;
        row.recall = pr.recall;
      } else {
        row.dice = dice(pred, gt);
        const PrecisionRecall pr = precision_recall(pred, gt);
        row.precision = pr.precision;
        row.recall = pr.recall;
      }
      dices.push_back(row.dice);
      rows.push_back(row);
    }
    write_metrics_csv(*out, rows);
    const Aggregate agg = aggregate(dices);
    std::printf("mean_dice=%.6f std=%.6f n=%zu\n", agg.mean, agg.stddev, dices.size());
  });
}

void add_pr_curve(CLI::App& app) {
  auto* cmd = app.add_subcommand("pr-curve", "Pooled volumetric precision-recall curve of a model");
  auto csv = std::make_shared<std::string>();
  auto model_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto n_thresholds = std::make_shared<int>(21);
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--model", *model_path, "Trained model file")->required();
  cmd->add_option("--out", *out, "PR CSV path")->required();
  cmd->add_option("--thresholds", *n_thresholds, "Threshold count")->check(CLI::Range(2, 1001));
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    const LearnerModel model = load_model(*model_path);
    const MlpBackend backend;
    std::vector<ConfusionCounts> counts(static_cast<std::size_t>(*n_thresholds));
    for (const auto& e : data.entries) {
      const MaskVolume& gt = require_gt(e);
      const ProbabilityVolume prob = predict_volume(model, e.volume, e.annotation, backend);
      for (int i = 0; i < *n_thresholds; ++i) {
        const double t = static_cast<double>(i) / (*n_thresholds - 1);
        auto& c = counts[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < prob.values.size(); ++j) {
          const bool p = prob.values[j] >= t;
          const bool g = gt.voxels[j] != 0;
          c.tp += p && g;
          c.fp += p && !g;
          c.fn += !p && g;
        }
      }
      log_progress("pooled " + e.lesion_id);
    }
    std::vector<PrPoint> points;
    for (int i = 0; i < *n_thresholds; ++i) {
      const PrecisionRecall pr = precision_recall(counts[static_cast<std::size_t>(i)]);
      points.push_back({static_cast<double>(i) / (*n_thresholds - 1), pr.precision, pr.recall});
    }
    write_pr_csv(*out, points);
  });
}

void add_offset_curve(CLI::App& app) {
  auto* cmd = app.add_subcommand("offset-curve", "Mean per-slice DICE as a function of slice offset");
  auto csv = std::make_shared<std::string>();
  auto pred_dir = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto max_offset = std::make_shared<int>(6);
  cmd->add_option("--annotations,--annotation", *csv, "Annotation CSV")->required();
  cmd->add_option("--pred-dir", *pred_dir, "Directory holding <lesion_id>.raw masks")->required();
  cmd->add_option("--out", *out, "Offset CSV path")->required();
  cmd->add_option("--max-offset", *max_offset, "Largest |offset| reported")->check(CLI::Range(0, 64));
  cmd->callback([=]() {
    const Dataset data = load_dataset(*csv);
    std::vector<double> sums(static_cast<std::size_t>(*max_offset) + 1, 0.0);
    std::vector<int> ns(static_cast<std::size_t>(*max_offset) + 1, 0);
    for (const auto& e : data.entries) {
      const MaskVolume& gt = require_gt(e);
      const MaskVolume pred = load_mask_volume(fs::path(*pred_dir) / (e.lesion_id + ".raw"));
      for (const OffsetDice& pt : offset_dice(pred, gt, e.annotation.slice_index, *max_offset)) {
        sums[static_cast<std::size_t>(pt.offset)] += pt.mean_dice * pt.count;
        ns[static_cast<std::size_t>(pt.offset)] += pt.count;
      }
    }
    std::ofstream f(*out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + *out);
    f << "offset,mean_dice,n\n";
    char buf[64];
    for (int o = 0; o <= *max_offset; ++o) {
      const double mean = ns[static_cast<std::size_t>(o)] > 0 ? sums[static_cast<std::size_t>(o)] / ns[static_cast<std::size_t>(o)] : 0.0;
      std::snprintf(buf, sizeof buf, "%d,%.6f,%d\n", o, mean, ns[static_cast<std::size_t>(o)]);
      f << buf;
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RECIST-supervised lesion segmentation pipeline"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", g_verbose, "Log progress to stderr");
  app.failure_message(CLI::FailureMessage::help);

  add_phantom_gen(app);
  add_segment_slice(app);
  add_grabcut_3de(app);
  add_train(app);
  add_segment_volume(app);
  add_evaluate(app);
  add_pr_curve(app);
  add_offset_curve(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the failure message
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
