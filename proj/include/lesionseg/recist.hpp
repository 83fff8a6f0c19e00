#pragma once

#include "lesionseg/volume.hpp"

#include <optional>

namespace lesionseg {

/// Raw four-endpoint cross geometry (pixel coordinates). Carries no
/// validity guarantees; shared by measured and propagated annotations.
struct DiameterCross {
  Vec2 long_p1, long_p2;
  Vec2 short_p1, short_p2;
};

/// Two perpendicular RECIST diameters on an axial slice.
/// Construct via make_recist so the invariants hold: physical long-axis
/// length >= short-axis length > 0 and the segments cross (2 px tolerance).
struct RecistAnnotation {
  Vec2 long_p1, long_p2;
  Vec2 short_p1, short_p2;
  int slice_index = 0;
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
};

/// RECIST estimated on an off-RECIST slice. Semi-axes may collapse to zero
/// length; offset is the signed slice distance from the source annotation.
struct PropagatedRecist {
  Vec2 long_p1, long_p2;
  Vec2 short_p1, short_p2;
  int slice_index = 0;  // slice of the source annotation
  int offset = 0;
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
};

RecistAnnotation make_recist(const Vec2& long_p1, const Vec2& long_p2, const Vec2& short_p1, const Vec2& short_p2, int slice_index, const Eigen::Vector3d& spacing);

inline DiameterCross cross_of(const RecistAnnotation& r) { return {r.long_p1, r.long_p2, r.short_p1, r.short_p2}; }
inline DiameterCross cross_of(const PropagatedRecist& r) { return {r.long_p1, r.long_p2, r.short_p1, r.short_p2}; }

/// In-plane physical length of a segment, mm.
double physical_length(const Vec2& a, const Vec2& b, const Eigen::Vector2d& spacing);

/// Center used for propagation: intersection point of the two diameter
/// lines, falling back to the long-axis midpoint when they fail to cross.
Vec2 axis_center(const DiameterCross& cross);

/// Minimal axis-aligned box containing the four endpoints.
BBox bbox_of(const DiameterCross& cross);
inline BBox bbox_of(const RecistAnnotation& r) { return bbox_of(cross_of(r)); }
inline BBox bbox_of(const PropagatedRecist& r) { return bbox_of(cross_of(r)); }

/// Pixels covered by the two diameter segments, clipped to a w x h grid.
ByteImage rasterize_cross(const DiameterCross& cross, int width, int height);

/// Measures RECIST diameters from a binary mask volume: slice of maximal
/// area, longest in-mask chord between boundary pixels, and the longest
/// roughly-perpendicular in-mask chord. Each semi-length is then scaled by
/// (1 + u), u ~ Uniform(-noise_frac, +noise_frac).
RecistAnnotation extract_recist_from_mask(const MaskVolume& mask, const Eigen::Vector3d& spacing, double noise_frac, Rng& rng);

/// Shrinks every endpoint toward the axis center so its physical distance
/// becomes sqrt(max(l^2 - (offset*sz)^2, 0)). Returns nullopt (TERMINATED)
/// once the long axis has fully collapsed.
std::optional<PropagatedRecist> propagate(const RecistAnnotation& r, int offset);

/// One row of the DeepLesion-style annotation CSV.
struct AnnotationRow {
  std::string lesion_id;
  std::string volume_path;
  int slice_index = 0;
  Vec2 long_p1, long_p2;
  Vec2 short_p1, short_p2;
};

std::vector<AnnotationRow> read_annotation_csv(const std::filesystem::path& path);
void write_annotation_csv(const std::filesystem::path& path, const std::vector<AnnotationRow>& rows);

/// Binds a CSV row to its volume's spacing (validates the invariants).
RecistAnnotation annotation_from_row(const AnnotationRow& row, const Eigen::Vector3d& spacing);

}  // namespace lesionseg
