#include "lesionseg/recist.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lesionseg {

namespace {

constexpr double kCrossTolerancePx = 2.0;

struct LineHit {
  bool crosses = false;  // within both segment extents (+ tolerance)
  Vec2 point{0.0, 0.0};
};

// Intersection of the infinite lines through two segments, flagged as a
// crossing when the hit lies within both segments extended by tol pixels.
LineHit intersect_segments(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2, double tol) {
  const Vec2 d1 = a2 - a1;
  const Vec2 d2 = b2 - b1;
  const double det = d1.x() * d2.y() - d1.y() * d2.x();
  const double scale = std::max(d1.norm() * d2.norm(), 1e-12);
  LineHit hit;
  if (std::abs(det) < 1e-9 * scale) return hit;  // parallel or degenerate
  const Vec2 rhs = b1 - a1;
  const double t = (rhs.x() * d2.y() - rhs.y() * d2.x()) / det;
  const double s = (rhs.x() * d1.y() - rhs.y() * d1.x()) / det;
  hit.point = a1 + t * d1;
  const double slack1 = d1.norm() > 0 ? tol / d1.norm() : 0.0;
  const double slack2 = d2.norm() > 0 ? tol / d2.norm() : 0.0;
  hit.crosses = t >= -slack1 && t <= 1.0 + slack1 && s >= -slack2 && s <= 1.0 + slack2;
  return hit;
}

// Chord endpoints must stay within the mask along the whole segment.
bool segment_inside_mask(const ByteImage& mask, const Vec2& a, const Vec2& b) {
  const int w = static_cast<int>(mask.cols());
  const int h = static_cast<int>(mask.rows());
  const double len = (b - a).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.3)));
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    if (x < 0 || y < 0 || x >= w || y >= h || !mask(y, x)) return false;
  }
  return true;
}

double physical_angle_deg(const Vec2& d1, const Vec2& d2, const Eigen::Vector2d& spacing) {
  const Vec2 u(d1.x() * spacing.x(), d1.y() * spacing.y());
  const Vec2 v(d2.x() * spacing.x(), d2.y() * spacing.y());
  const double denom = u.norm() * v.norm();
  if (denom <= 0) return 0.0;
  const double c = std::clamp(std::abs(u.dot(v)) / denom, 0.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;  // in [0, 90]
}

std::vector<Vec2> boundary_pixels(const ByteImage& mask) {
  const int w = static_cast<int>(mask.cols());
  const int h = static_cast<int>(mask.rows());
  std::vector<Vec2> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const bool edge = x == 0 || y == 0 || x == w - 1 || y == h - 1 || !mask(y, x - 1) || !mask(y, x + 1) || !mask(y - 1, x) || !mask(y + 1, x);
      if (edge) out.emplace_back(x, y);
    }
  }
  return out;
}

struct Chord {
  Vec2 a, b;
  double length = 0.0;
};

std::string csv_field(std::istringstream& line, const std::string& path) {
  std::string field;
  if (!std::getline(line, field, ',')) throw std::runtime_error("annotation CSV " + path + ": missing column");
  const auto begin = field.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = field.find_last_not_of(" \t\r");
  return field.substr(begin, end - begin + 1);
}

double csv_number(std::istringstream& line, const std::string& path) {
  const std::string field = csv_field(line, path);
  std::size_t used = 0;
  const double value = std::stod(field, &used);
  if (used != field.size()) throw std::runtime_error("annotation CSV " + path + ": bad number '" + field + "'");
  return value;
}

}  // namespace

double physical_length(const Vec2& a, const Vec2& b, const Eigen::Vector2d& spacing) {
  const double dx = (b.x() - a.x()) * spacing.x();
  const double dy = (b.y() - a.y()) * spacing.y();
  return std::sqrt(dx * dx + dy * dy);
}

RecistAnnotation make_recist(const Vec2& long_p1, const Vec2& long_p2, const Vec2& short_p1, const Vec2& short_p2, int slice_index, const Eigen::Vector3d& spacing) {
  if (spacing.minCoeff() <= 0) throw std::runtime_error("recist: spacing must be positive");
  const Eigen::Vector2d sp(spacing.x(), spacing.y());
  const double long_len = physical_length(long_p1, long_p2, sp);
  const double short_len = physical_length(short_p1, short_p2, sp);
  if (!(short_len > 0)) throw std::runtime_error("recist: short axis has zero length");
  if (long_len < short_len) throw std::runtime_error("recist: long axis shorter than short axis");
  if (!intersect_segments(long_p1, long_p2, short_p1, short_p2, kCrossTolerancePx).crosses) {
    throw std::runtime_error("recist: diameter axes do not cross");
  }
  return {long_p1, long_p2, short_p1, short_p2, slice_index, spacing};
}

Vec2 axis_center(const DiameterCross& cross) {
  const LineHit hit = intersect_segments(cross.long_p1, cross.long_p2, cross.short_p1, cross.short_p2, kCrossTolerancePx);
  if (hit.crosses) return hit.point;
  return 0.5 * (cross.long_p1 + cross.long_p2);
}

BBox bbox_of(const DiameterCross& cross) {
  const double min_x = std::min({cross.long_p1.x(), cross.long_p2.x(), cross.short_p1.x(), cross.short_p2.x()});
  const double max_x = std::max({cross.long_p1.x(), cross.long_p2.x(), cross.short_p1.x(), cross.short_p2.x()});
  const double min_y = std::min({cross.long_p1.y(), cross.long_p2.y(), cross.short_p1.y(), cross.short_p2.y()});
  const double max_y = std::max({cross.long_p1.y(), cross.long_p2.y(), cross.short_p1.y(), cross.short_p2.y()});
  BBox box;
  box.x = static_cast<int>(std::floor(min_x));
  box.y = static_cast<int>(std::floor(min_y));
  box.w = std::max(1, static_cast<int>(std::ceil(max_x)) - box.x);
  box.h = std::max(1, static_cast<int>(std::ceil(max_y)) - box.y);
  return box;
}

ByteImage rasterize_cross(const DiameterCross& cross, int width, int height) {
  ByteImage out = ByteImage::Zero(height, width);
  const auto draw = [&](const Vec2& a, const Vec2& b) {
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
    for (int i = 0; i <= steps; ++i) {
      const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
      const int x = static_cast<int>(std::lround(p.x()));
      const int y = static_cast<int>(std::lround(p.y()));
      if (x >= 0 && y >= 0 && x < width && y < height) out(y, x) = 1;
    }
  };
  draw(cross.long_p1, cross.long_p2);
  draw(cross.short_p1, cross.short_p2);
  return out;
}

RecistAnnotation extract_recist_from_mask(const MaskVolume& mask, const Eigen::Vector3d& spacing, double noise_frac, Rng& rng) {
  if (noise_frac < 0.0 || noise_frac > 0.5) throw std::runtime_error("extract_recist: noise_frac must be in [0, 0.5]");
  const Eigen::Vector2d sp(spacing.x(), spacing.y());

  // Slice of maximal area (lowest index wins ties).
  int best_slice = -1;
  long best_area = 0;
  for (int z = 0; z < mask.dims[2]; ++z) {
    long area = 0;
    for (int y = 0; y < mask.dims[1]; ++y)
      for (int x = 0; x < mask.dims[0]; ++x) area += mask.at(x, y, z) ? 1 : 0;
    if (area > best_area) {
      best_area = area;
      best_slice = z;
    }
  }
  if (best_slice < 0) throw std::runtime_error("extract_recist: mask is empty");

  const ByteImage slice = mask.slice(best_slice);
  const std::vector<Vec2> boundary = boundary_pixels(slice);

  std::vector<Chord> chords;
  chords.reserve(boundary.size() * (boundary.size() - 1) / 2);
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    for (std::size_t j = i + 1; j < boundary.size(); ++j) {
      chords.push_back({boundary[i], boundary[j], physical_length(boundary[i], boundary[j], sp)});
    }
  }
  std::stable_sort(chords.begin(), chords.end(), [](const Chord& a, const Chord& b) { return a.length > b.length; });

  const Chord* long_chord = nullptr;
  for (const Chord& c : chords) {
    if (segment_inside_mask(slice, c.a, c.b)) {
      long_chord = &c;
      break;
    }
  }
  if (!long_chord) throw std::runtime_error("extract_recist: no in-mask chord found");

  const Vec2 long_dir = long_chord->b - long_chord->a;
  const Chord* short_chord = nullptr;
  for (const Chord& c : chords) {
    if (&c == long_chord) continue;
    const double angle = physical_angle_deg(long_dir, c.b - c.a, sp);
    if (angle < 80.0) continue;  // within 90 +/- 10 degrees
    if (!intersect_segments(long_chord->a, long_chord->b, c.a, c.b, kCrossTolerancePx).crosses) continue;
    if (!segment_inside_mask(slice, c.a, c.b)) continue;
    short_chord = &c;
    break;
  }

  Vec2 short_a, short_b;
  if (short_chord) {
    short_a = short_chord->a;
    short_b = short_chord->b;
  } else {
    // Walk the exact perpendicular through the long-chord midpoint; always
    // yields a crossing chord when the midpoint is interior.
    const Vec2 mid = 0.5 * (long_chord->a + long_chord->b);
    Vec2 perp(-long_dir.y() * sp.y() / sp.x(), long_dir.x() * sp.x() / sp.y());
    perp.normalize();
    const auto walk = [&](double sign) {
      Vec2 last = mid;
      for (double t = 0.5; t < slice.rows() + slice.cols(); t += 0.5) {
        const Vec2 p = mid + sign * t * perp;
        const int x = static_cast<int>(std::lround(p.x()));
        const int y = static_cast<int>(std::lround(p.y()));
        if (x < 0 || y < 0 || x >= slice.cols() || y >= slice.rows() || !slice(y, x)) break;
        last = p;
      }
      return last;
    };
    short_a = walk(+1.0);
    short_b = walk(-1.0);
    if ((short_b - short_a).norm() < 0.5) throw std::runtime_error("extract_recist: no perpendicular chord found");
  }

  // Inject measurement noise per semi-axis, about the axes' crossing point.
  const LineHit hit = intersect_segments(long_chord->a, long_chord->b, short_a, short_b, kCrossTolerancePx);
  const Vec2 center = hit.crosses ? hit.point : 0.5 * (long_chord->a + long_chord->b);
  const auto jitter = [&](const Vec2& p) {
    const double u = rng.uniform(-noise_frac, noise_frac);
    return Vec2(center + (p - center) * (1.0 + u));
  };
  Vec2 lp1 = jitter(long_chord->a), lp2 = jitter(long_chord->b);
  Vec2 sp1 = jitter(short_a), sp2 = jitter(short_b);

  if (physical_length(lp1, lp2, sp) < physical_length(sp1, sp2, sp)) {
    std::swap(lp1, sp1);
    std::swap(lp2, sp2);
  }
  return make_recist(lp1, lp2, sp1, sp2, best_slice, spacing);
}

std::optional<PropagatedRecist> propagate(const RecistAnnotation& r, int offset) {
  PropagatedRecist out;
  out.slice_index = r.slice_index;
  out.offset = offset;
  out.spacing = r.spacing;
  if (offset == 0) {
    out.long_p1 = r.long_p1;
    out.long_p2 = r.long_p2;
    out.short_p1 = r.short_p1;
    out.short_p2 = r.short_p2;
    return out;
  }

  const Eigen::Vector2d sp(r.spacing.x(), r.spacing.y());
  const Vec2 center = axis_center(cross_of(r));
  const double dz = std::abs(offset) * r.spacing.z();
  const auto shrink = [&](const Vec2& p) {
    const double l = physical_length(center, p, sp);
    if (l <= 0.0) return center;
    const double shrunk = std::sqrt(std::max(l * l - dz * dz, 0.0));
    return Vec2(center + (p - center) * (shrunk / l));
  };

  const double long_l1 = physical_length(center, r.long_p1, sp);
  const double long_l2 = physical_length(center, r.long_p2, sp);
  if (long_l1 <= dz && long_l2 <= dz) return std::nullopt;  // TERMINATED

  out.long_p1 = shrink(r.long_p1);
  out.long_p2 = shrink(r.long_p2);
  out.short_p1 = shrink(r.short_p1);
  out.short_p2 = shrink(r.short_p2);
  return out;
}

std::vector<AnnotationRow> read_annotation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation CSV: " + path.string());
  std::vector<AnnotationRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (first && line.rfind("lesion_id", 0) == 0) {
      first = false;
      continue;  // header
    }
    first = false;
    std::istringstream ss(line);
    AnnotationRow row;
    row.lesion_id = csv_field(ss, path.string());
    row.volume_path = csv_field(ss, path.string());
    row.slice_index = static_cast<int>(csv_number(ss, path.string()));
    row.long_p1 = {csv_number(ss, path.string()), csv_number(ss, path.string())};
    row.long_p2 = {csv_number(ss, path.string()), csv_number(ss, path.string())};
    row.short_p1 = {csv_number(ss, path.string()), csv_number(ss, path.string())};
    row.short_p2 = {csv_number(ss, path.string()), csv_number(ss, path.string())};
    rows.push_back(std::move(row));  // extra columns ignored
  }
  return rows;
}

void write_annotation_csv(const std::filesystem::path& path, const std::vector<AnnotationRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "lesion_id,volume_path,slice_index,x1,y1,x2,y2,x3,y3,x4,y4\n";
  char buf[512];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.lesion_id.c_str(), row.volume_path.c_str(), row.slice_index, row.long_p1.x(), row.long_p1.y(), row.long_p2.x(), row.long_p2.y(), row.short_p1.x(), row.short_p1.y(), row.short_p2.x(), row.short_p2.y());
    out << buf;
  }
}

RecistAnnotation annotation_from_row(const AnnotationRow& row, const Eigen::Vector3d& spacing) {
  return make_recist(row.long_p1, row.long_p2, row.short_p1, row.short_p2, row.slice_index, spacing);
}

}  // namespace lesionseg
