#pragma once

#include "lesionseg/recist.hpp"

namespace lesionseg {

/// Seed labels, also the on-disk byte values of exported seed masks.
namespace seed {
inline constexpr std::uint8_t kBG = 0;
inline constexpr std::uint8_t kFG = 1;
inline constexpr std::uint8_t kPBG = 2;
inline constexpr std::uint8_t kPFG = 3;
inline constexpr std::uint8_t kUnknown = 4;
}  // namespace seed

/// Per-pixel seed labels over an ROI, values from the seed namespace.
using SeedMask = ByteImage;

int count_label(const SeedMask& seeds, std::uint8_t label);

/// RECIST-derived quadmap. BG is the complement of a centered rectangle
/// holding floor(N/2) pixels (sides ~ sqrt(2)w x sqrt(2)h on an uncropped
/// ROI); FG is the diameter raster dilated to max(round(0.1 N), raster)
/// pixels; the rest splits into PFG/PBG by which of FG/BG is closer.
/// `cross` is in parent-volume pixel coordinates.
SeedMask seeds_from_recist(const RoiImage& roi, const DiameterCross& cross);

/// RECIST-D binary pseudo-label: the diameter raster dilated until it
/// covers max(round(0.2 * bbox area), raster) pixels. Returns 0/1.
ByteImage recist_d_mask(const RoiImage& roi, const DiameterCross& cross);

enum class BBoxSeedVariant {
  kPlain,  // inside padded box -> PFG, outside -> BG; no FG pixels
  kInner,  // additionally promotes a centered rectangle of 20% bbox area to FG
};

/// Box-prompt seeding: the tight bbox grown by 25% per side, labels per
/// variant. The Plain variant emits no FG; callers that need one inject it.
SeedMask seeds_bbox_variant(const RoiImage& roi, const RecistAnnotation& r, BBoxSeedVariant variant);

/// Seeds for an off-RECIST slice from the model probability map and the
/// propagated cross. Falls back to seeds_from_recist(roi, rhat) when the
/// binarized map is empty or yields no BG component.
SeedMask seeds_off_slice(const RoiImage& roi, const Image& prob, const DiameterCross& rhat);

/// Raw uint8 labels + JSON sidecar, for inspection and tests.
void save_seed_mask(const SeedMask& seeds, const std::filesystem::path& path);
SeedMask load_seed_mask(const std::filesystem::path& path);

}  // namespace lesionseg
