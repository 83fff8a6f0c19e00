#include "lesionseg/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include <fstream>

namespace lesionseg {

namespace {

DiameterCross localize(const DiameterCross& c, const RoiImage& roi) {
  const auto shift = [&](const Vec2& p) { return Vec2(p.x() - roi.origin.x(), p.y() - roi.origin.y()); };
  const DiameterCross out{shift(c.long_p1), shift(c.long_p2), shift(c.short_p1), shift(c.short_p2)};
  const double w = roi.width(), h = roi.height();
  for (const Vec2& p : {out.long_p1, out.long_p2, out.short_p1, out.short_p2}) {
    if (!(p.x() > -0.5 && p.x() < w - 0.5 && p.y() > -0.5 && p.y() < h - 0.5))
      throw std::invalid_argument("seeds: diameter endpoint falls outside the ROI");
  }
  return out;
}

int count_nonzero(const ByteImage& m) {
  int n = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) n += m.data()[i] != 0;
  return n;
}

/// Key whose level sets are centered rectangles with the grid's aspect.
Image centered_rect_key(int width, int height) {
  Image key(height, width);
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      key(y, x) = std::max(std::abs(x - cx) / width, std::abs(y - cy) / height);
  return key;
}

ByteImage dilate_to_count(const ByteImage& raster, int target) {
  const Image d2 = squared_distance_transform(raster);
  return select_smallest(d2, target);
}

/// Splits every unlabeled pixel into PFG/PBG by distance to the nearest
/// FG vs BG pixel, ties to PBG.
void fill_probable(SeedMask& labels, const ByteImage& fg, const ByteImage& bg) {
  const Image d2fg = squared_distance_transform(fg);
  const Image d2bg = squared_distance_transform(bg);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels.data()[i] != seed::kUnknown) continue;
    labels.data()[i] = d2fg.data()[i] < d2bg.data()[i] ? seed::kPFG : seed::kPBG;
  }
}

}  // namespace

int count_label(const SeedMask& seeds, std::uint8_t label) {
  int n = 0;
  for (Eigen::Index i = 0; i < seeds.size(); ++i) n += seeds.data()[i] == label;
  return n;
}

SeedMask seeds_from_recist(const RoiImage& roi, const DiameterCross& cross) {
  const int w = roi.width();
  const int h = roi.height();
  const int n = w * h;
  if (n < 4) throw std::invalid_argument("seeds: ROI too small");

  const DiameterCross local = localize(cross, roi);
  const ByteImage raster = rasterize_cross(local, w, h);
  const int raster_count = count_nonzero(raster);
  if (raster_count == 0) throw std::invalid_argument("seeds: diameter raster is empty");

  // Inner rectangle keeps exactly floor(N/2) pixels; its complement is BG.
  const ByteImage inner = select_smallest(centered_rect_key(w, h), n / 2);

  const int fg_target = std::max(static_cast<int>(std::lround(0.1 * n)), raster_count);
  const ByteImage fg = dilate_to_count(raster, fg_target);

  SeedMask labels = SeedMask::Constant(h, w, seed::kUnknown);
  ByteImage bg = ByteImage::Zero(h, w);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (fg.data()[i]) {
      labels.data()[i] = seed::kFG;
    } else if (!inner.data()[i]) {
      labels.data()[i] = seed::kBG;
      bg.data()[i] = 1;
    }
  }
  fill_probable(labels, fg, bg);
  return labels;
}

ByteImage recist_d_mask(const RoiImage& roi, const DiameterCross& cross) {
  const int w = roi.width();
  const int h = roi.height();
  const DiameterCross local = localize(cross, roi);
  const ByteImage raster = rasterize_cross(local, w, h);
  const int raster_count = count_nonzero(raster);
  if (raster_count == 0) throw std::invalid_argument("recist_d_mask: diameter raster is empty");

  const BBox box = bbox_of(cross);
  const int target =
      std::min(w * h, std::max(static_cast<int>(std::lround(0.2 * box.w * box.h)), raster_count));
  return dilate_to_count(raster, target);
}

SeedMask seeds_bbox_variant(const RoiImage& roi, const RecistAnnotation& r, BBoxSeedVariant variant) {
  const int w = roi.width();
  const int h = roi.height();
  const BBox bbox = bbox_of(r);
  if (bbox.w <= 0 || bbox.h <= 0) throw std::invalid_argument("seeds: degenerate bbox");

  // Pad by 25% of the side on each edge (1.5x extents overall).
  const double px0 = (bbox.x - roi.origin.x()) - 0.25 * bbox.w;
  const double py0 = (bbox.y - roi.origin.y()) - 0.25 * bbox.h;
  const double pw = 1.5 * bbox.w;
  const double ph = 1.5 * bbox.h;

  SeedMask labels(h, w);
  ByteImage inside(h, w);
  int n_inside = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool in = x >= px0 && x <= px0 + pw && y >= py0 && y <= py0 + ph;
      inside(y, x) = in;
      labels(y, x) = in ? seed::kPFG : seed::kBG;
      n_inside += in;
    }
  }
  if (n_inside == 0) throw std::invalid_argument("seeds: padded bbox misses the ROI");

  if (variant == BBoxSeedVariant::kInner) {
    // FG core: centered rectangle with the box aspect holding 20% of the
    // padded box area.
    Image key(h, w);
    const double ccx = px0 + pw / 2.0;
    const double ccy = py0 + ph / 2.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) key(y, x) = std::max(std::abs(x - ccx) / pw, std::abs(y - ccy) / ph);
    const int k = std::min(n_inside, std::max(1, static_cast<int>(std::lround(0.2 * n_inside))));
    const ByteImage core = select_smallest(key, k, inside);
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      if (core.data()[i]) labels.data()[i] = seed::kFG;
  }
  return labels;
}

SeedMask seeds_off_slice(const RoiImage& roi, const Image& prob, const DiameterCross& rhat) {
  const int w = roi.width();
  const int h = roi.height();
  if (prob.rows() != h || prob.cols() != w) throw std::invalid_argument("seeds: probability map shape differs from ROI");

  const DiameterCross local = localize(rhat, roi);
  const ByteImage raster = rasterize_cross(local, w, h);
  const int raster_count = count_nonzero(raster);
  if (raster_count == 0) throw std::invalid_argument("seeds: diameter raster is empty");

  // Adaptive threshold: median probability over the raster, floored at 0.2
  // so a map that is confidently background everywhere falls through to the
  // pure-RECIST seeds.
  std::vector<double> raster_probs;
  raster_probs.reserve(static_cast<std::size_t>(raster_count));
  for (Eigen::Index i = 0; i < raster.size(); ++i)
    if (raster.data()[i]) raster_probs.push_back(prob.data()[i]);
  std::sort(raster_probs.begin(), raster_probs.end(), std::greater<>());
  const double t_star = raster_probs[static_cast<std::size_t>((raster_count + 1) / 2 - 1)];
  const double threshold = std::max(t_star, 0.2);

  bool any_binarized = false;
  for (Eigen::Index i = 0; i < prob.size() && !any_binarized; ++i) any_binarized = prob.data()[i] >= threshold;
  if (!any_binarized) return seeds_from_recist(roi, rhat);

  // FG: the raster plus confident components that touch it.
  ByteImage fg = raster;
  {
    const ByteImage hi = (prob > 0.8).cast<std::uint8_t>();
    int n_comps = 0;
    const Eigen::ArrayXXi comp = connected_components(hi, &n_comps);
    std::vector<char> keep(static_cast<std::size_t>(n_comps) + 1, 0);
    for (Eigen::Index i = 0; i < comp.size(); ++i)
      if (raster.data()[i] && comp.data()[i] > 0) keep[static_cast<std::size_t>(comp.data()[i])] = 1;
    for (Eigen::Index i = 0; i < comp.size(); ++i)
      if (comp.data()[i] > 0 && keep[static_cast<std::size_t>(comp.data()[i])]) fg.data()[i] = 1;
  }

  // BG: confident-background components that never meet the raster.
  ByteImage bg = ByteImage::Zero(h, w);
  {
    const ByteImage lo = (prob < 0.2).cast<std::uint8_t>();
    int n_comps = 0;
    const Eigen::ArrayXXi comp = connected_components(lo, &n_comps);
    std::vector<char> drop(static_cast<std::size_t>(n_comps) + 1, 0);
    for (Eigen::Index i = 0; i < comp.size(); ++i)
      if (raster.data()[i] && comp.data()[i] > 0) drop[static_cast<std::size_t>(comp.data()[i])] = 1;
    for (Eigen::Index i = 0; i < comp.size(); ++i)
      if (comp.data()[i] > 0 && !drop[static_cast<std::size_t>(comp.data()[i])] && !fg.data()[i]) bg.data()[i] = 1;
  }
  if (count_nonzero(bg) == 0) return seeds_from_recist(roi, rhat);

  SeedMask labels = SeedMask::Constant(h, w, seed::kUnknown);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (fg.data()[i])
      labels.data()[i] = seed::kFG;
    else if (bg.data()[i])
      labels.data()[i] = seed::kBG;
  }
  fill_probable(labels, fg, bg);
  return labels;
}

void save_seed_mask(const SeedMask& seeds, const std::filesystem::path& path) {
  std::filesystem::path raw = path;
  if (raw.extension() != ".raw") raw.replace_extension(".raw");
  std::filesystem::path sidecar = raw;
  sidecar.replace_extension(".json");

  std::ofstream out(raw, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + raw.string());
  const int w = static_cast<int>(seeds.cols());
  const int h = static_cast<int>(seeds.rows());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.put(static_cast<char>(seeds(y, x)));
  if (!out) throw std::runtime_error("write failed: " + raw.string());

  nlohmann::json meta;
  meta["dims"] = {w, h};
  meta["labels"] = {{"BG", seed::kBG}, {"FG", seed::kFG}, {"PBG", seed::kPBG}, {"PFG", seed::kPFG}, {"UNKNOWN", seed::kUnknown}};
  std::ofstream side(sidecar, std::ios::binary);
  side << meta.dump(2) << '\n';
  if (!side) throw std::runtime_error("write failed: " + sidecar.string());
}

SeedMask load_seed_mask(const std::filesystem::path& path) {
  std::filesystem::path raw = path;
  if (raw.extension() != ".raw") raw.replace_extension(".raw");
  std::filesystem::path sidecar = raw;
  sidecar.replace_extension(".json");

  std::ifstream side(sidecar, std::ios::binary);
  if (!side) throw std::runtime_error("cannot open: " + sidecar.string());
  nlohmann::json meta = nlohmann::json::parse(side);
  const int w = meta.at("dims").at(0).get<int>();
  const int h = meta.at("dims").at(1).get<int>();
  if (w < 1 || h < 1) throw std::runtime_error("invalid seed mask dims in " + sidecar.string());

  std::ifstream in(raw, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + raw.string());
  std::vector<char> bytes(static_cast<std::size_t>(w) * h);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::runtime_error("seed mask shorter than its dims: " + raw.string());

  SeedMask seeds(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(linear_index(x, y, w))]);
      if (v > seed::kUnknown) throw std::runtime_error("invalid seed label in " + raw.string());
      seeds(y, x) = v;
    }
  return seeds;
}

}  // namespace lesionseg
