#pragma once

#include "lesionseg/core.hpp"

#include <filesystem>

namespace lesionseg {

/// Axis-aligned pixel box; w/h are extents (max - min of the covered span).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;
};

/// 3-D scalar intensity grid with physical voxel spacing and a display
/// window. Voxels are stored x-fastest, then y, then z.
struct Volume {
  Eigen::Vector3i dims{1, 1, 1};           // nx, ny, nz
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};  // mm per voxel
  Eigen::Vector2d window{0.0, 1.0};        // (lo, hi) intensity bounds
  std::vector<std::int16_t> voxels;

  std::int16_t at(int x, int y, int z) const {
    return voxels[static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z)];
  }
  std::int16_t& at(int x, int y, int z) {
    return voxels[static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z)];
  }
  std::size_t voxel_count() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
};

/// Binary 3-D mask, same voxel ordering as Volume (0 = background, 1 = foreground).
struct MaskVolume {
  Eigen::Vector3i dims{1, 1, 1};
  std::vector<std::uint8_t> voxels;

  std::uint8_t at(int x, int y, int z) const {
    return voxels[static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z)];
  }
  std::uint8_t& at(int x, int y, int z) {
    return voxels[static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z)];
  }
  std::size_t voxel_count() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
  ByteImage slice(int z) const;
  void set_slice(int z, const ByteImage& s);
};

/// Windowed volume: intensities mapped into [0, 1].
struct NormalizedVolume {
  Eigen::Vector3i dims{1, 1, 1};
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
  std::vector<double> values;

  double at(int x, int y, int z) const {
    return values[static_cast<std::size_t>(x) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z)];
  }
  Image slice(int z) const;
};

/// A windowed 2-D crop of an axial slice. `origin` records where the crop
/// sits in the parent volume so masks can be re-inserted.
struct RoiImage {
  Image pixels;                        // (h, w), values in [0, 1]
  Eigen::Vector3i origin{0, 0, 0};     // x0, y0, z in parent voxel coords
  Eigen::Vector2d spacing{1.0, 1.0};   // mm per pixel in-plane

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  int pixel_count() const { return width() * height(); }
};

Volume make_volume(const Eigen::Vector3i& dims, const Eigen::Vector3d& spacing, const Eigen::Vector2d& window);

/// Raw little-endian int16 voxels + JSON sidecar. `path` may be the .raw
/// file, the .json sidecar, or the shared basename.
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);

MaskVolume load_mask_volume(const std::filesystem::path& path);
void save_mask_volume(const MaskVolume& m, const std::filesystem::path& path);

/// clamp((x - lo) / (hi - lo), 0, 1) per voxel.
NormalizedVolume window_intensity(const Volume& v);

/// Windowed crop of dims (2w, 2h) centered on the bbox center; crops past
/// the volume edge are clamped and the clamped origin recorded.
RoiImage crop_roi(const Volume& v, const BBox& lesion_bbox, int slice);

}  // namespace lesionseg
