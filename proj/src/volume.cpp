#include "lesionseg/volume.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace lesionseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void validate_volume_header(const Eigen::Vector3i& dims, const Eigen::Vector3d& spacing, const Eigen::Vector2d& window) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw std::runtime_error("volume dims must be >= 1 in every axis");
  if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0) throw std::runtime_error("voxel spacing must be positive");
  if (!(window[0] < window[1])) throw std::runtime_error("intensity window requires lo < hi");
}

std::pair<fs::path, fs::path> volume_paths(const fs::path& path) {
  fs::path base = path;
  if (base.extension() == ".raw" || base.extension() == ".json") base.replace_extension();
  fs::path raw = base;
  raw += ".raw";
  fs::path sidecar = base;
  sidecar += ".json";
  return {raw, sidecar};
}

json read_sidecar(const fs::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw std::runtime_error("missing sidecar header: " + sidecar.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("unreadable sidecar header " + sidecar.string() + ": " + e.what());
  }
  return j;
}

template <typename T>
std::vector<T> read_raw(const fs::path& raw, std::size_t expected_count) {
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw std::runtime_error("missing raw file: " + raw.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes != expected_count * sizeof(T)) {
    throw std::runtime_error("byte count mismatch in " + raw.string() + ": expected " + std::to_string(expected_count * sizeof(T)) + " bytes, found " + std::to_string(bytes));
  }
  std::vector<T> data(expected_count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("short read from " + raw.string());
  return data;
}

template <typename T>
void write_raw(const fs::path& raw, const std::vector<T>& data) {
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + raw.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!out) throw std::runtime_error("short write to " + raw.string());
}

}  // namespace

ByteImage MaskVolume::slice(int z) const {
  ByteImage s(dims[1], dims[0]);
  for (int y = 0; y < dims[1]; ++y)
    for (int x = 0; x < dims[0]; ++x) s(y, x) = at(x, y, z);
  return s;
}

void MaskVolume::set_slice(int z, const ByteImage& s) {
  for (int y = 0; y < dims[1]; ++y)
    for (int x = 0; x < dims[0]; ++x) at(x, y, z) = s(y, x);
}

Image NormalizedVolume::slice(int z) const {
  Image s(dims[1], dims[0]);
  for (int y = 0; y < dims[1]; ++y)
    for (int x = 0; x < dims[0]; ++x) s(y, x) = at(x, y, z);
  return s;
}

Volume make_volume(const Eigen::Vector3i& dims, const Eigen::Vector3d& spacing, const Eigen::Vector2d& window) {
  validate_volume_header(dims, spacing, window);
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  v.window = window;
  v.voxels.assign(v.voxel_count(), 0);
  return v;
}

Volume load_volume(const fs::path& path) {
  const auto [raw, sidecar] = volume_paths(path);
  const json j = read_sidecar(sidecar);
  if (!j.contains("dims") || !j.contains("spacing") || !j.contains("window")) {
    throw std::runtime_error("inconsistent header " + sidecar.string() + ": needs dims, spacing, window");
  }
  Volume v;
  for (int i = 0; i < 3; ++i) {
    v.dims[i] = j["dims"].at(i).get<int>();
    v.spacing[i] = j["spacing"].at(i).get<double>();
  }
  v.window[0] = j["window"].at(0).get<double>();
  v.window[1] = j["window"].at(1).get<double>();
  validate_volume_header(v.dims, v.spacing, v.window);
  v.voxels = read_raw<std::int16_t>(raw, v.voxel_count());
  return v;
}

void save_volume(const Volume& v, const fs::path& path) {
  validate_volume_header(v.dims, v.spacing, v.window);
  if (v.voxels.size() != v.voxel_count()) throw std::runtime_error("voxel buffer does not match dims");
  const auto [raw, sidecar] = volume_paths(path);
  json j;
  j["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
  j["spacing"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
  j["window"] = {v.window[0], v.window[1]};
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + sidecar.string());
  out << j.dump(2) << "\n";
  write_raw(raw, v.voxels);
}

MaskVolume load_mask_volume(const fs::path& path) {
  const auto [raw, sidecar] = volume_paths(path);
  const json j = read_sidecar(sidecar);
  if (!j.contains("dims")) throw std::runtime_error("inconsistent header " + sidecar.string() + ": needs dims");
  MaskVolume m;
  for (int i = 0; i < 3; ++i) m.dims[i] = j["dims"].at(i).get<int>();
  if (m.dims.minCoeff() < 1) throw std::runtime_error("mask dims must be >= 1 in every axis");
  m.voxels = read_raw<std::uint8_t>(raw, m.voxel_count());
  return m;
}

void save_mask_volume(const MaskVolume& m, const fs::path& path) {
  if (m.voxels.size() != m.voxel_count()) throw std::runtime_error("mask buffer does not match dims");
  const auto [raw, sidecar] = volume_paths(path);
  json j;
  j["dims"] = {m.dims[0], m.dims[1], m.dims[2]};
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + sidecar.string());
  out << j.dump(2) << "\n";
  write_raw(raw, m.voxels);
}

NormalizedVolume window_intensity(const Volume& v) {
  validate_volume_header(v.dims, v.spacing, v.window);
  NormalizedVolume out;
  out.dims = v.dims;
  out.spacing = v.spacing;
  out.values.resize(v.voxel_count());
  const double lo = v.window[0];
  const double scale = 1.0 / (v.window[1] - v.window[0]);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    out.values[i] = std::clamp((static_cast<double>(v.voxels[i]) - lo) * scale, 0.0, 1.0);
  }
  return out;
}

RoiImage crop_roi(const Volume& v, const BBox& lesion_bbox, int slice) {
  if (lesion_bbox.w < 1 || lesion_bbox.h < 1) throw std::runtime_error("crop_roi: bbox must have positive extent");
  if (slice < 0 || slice >= v.dims[2]) throw std::runtime_error("crop_roi: slice index out of range");
  if (lesion_bbox.x + lesion_bbox.w <= 0 || lesion_bbox.x >= v.dims[0] || lesion_bbox.y + lesion_bbox.h <= 0 || lesion_bbox.y >= v.dims[1]) {
    throw std::runtime_error("crop_roi: bbox fully outside image");
  }

  const double cx = lesion_bbox.x + lesion_bbox.w / 2.0;
  const double cy = lesion_bbox.y + lesion_bbox.h / 2.0;
  const int roi_w = 2 * lesion_bbox.w;
  const int roi_h = 2 * lesion_bbox.h;
  int x0 = static_cast<int>(std::floor(cx - roi_w / 2.0));
  int y0 = static_cast<int>(std::floor(cy - roi_h / 2.0));
  int x1 = x0 + roi_w;
  int y1 = y0 + roi_h;
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, v.dims[0]);
  y1 = std::min(y1, v.dims[1]);

  RoiImage roi;
  roi.origin = {x0, y0, slice};
  roi.spacing = {v.spacing[0], v.spacing[1]};
  roi.pixels.resize(y1 - y0, x1 - x0);
  const double lo = v.window[0];
  const double scale = 1.0 / (v.window[1] - v.window[0]);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      roi.pixels(y - y0, x - x0) = std::clamp((static_cast<double>(v.at(x, y, slice)) - lo) * scale, 0.0, 1.0);
    }
  }
  return roi;
}

}  // namespace lesionseg
