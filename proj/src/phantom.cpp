#include "lesionseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lesionseg {

namespace {

void validate_spec(const PhantomSpec& s) {
  if ((s.dims.array() < 4).any()) throw std::invalid_argument("phantom: dims too small");
  if ((s.spacing.array() <= 0.0).any()) throw std::invalid_argument("phantom: spacing must be positive");
  if ((s.semi_axes.array() <= 0.0).any()) throw std::invalid_argument("phantom: semi-axes must be positive");
  if (s.fg_mean == s.bg_mean) throw std::invalid_argument("phantom: fg and bg intensities must differ");
  // In-plane bbox half-extents of the rotated ellipse; z is unrotated. Tilt
  // adds at most |tilt| * (c in voxels) of in-plane drift at the poles.
  const double th = s.rotation_deg * M_PI / 180.0;
  const double cz_vox = s.semi_axes[2] / s.spacing[2];
  const double ex = std::hypot(s.semi_axes[0] * std::cos(th), s.semi_axes[1] * std::sin(th)) +
                    std::abs(s.axis_tilt[0]) * cz_vox * s.spacing[0];
  const double ey = std::hypot(s.semi_axes[0] * std::sin(th), s.semi_axes[1] * std::cos(th)) +
                    std::abs(s.axis_tilt[1]) * cz_vox * s.spacing[1];
  const double extents[3] = {ex, ey, s.semi_axes[2]};
  for (int a = 0; a < 3; ++a) {
    const double extent = extents[a] / s.spacing[a];
    if (s.center[a] - extent < 0.0 || s.center[a] + extent > s.dims[a] - 1.0)
      throw std::invalid_argument("phantom: lesion extends outside the volume");
  }
}

/// Separable Gaussian blur along one axis, sigma in voxels.
void blur_axis(std::vector<double>& field, const Eigen::Vector3i& dims, int axis, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  if (radius < 1) return;
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  const int nx = dims[0], ny = dims[1], nz = dims[2];
  const auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
  };
  std::vector<double> out(field.size());
  const int extent = dims[axis];
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        int pos[3] = {x, y, z};
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int q[3] = {pos[0], pos[1], pos[2]};
          q[axis] = std::clamp(pos[axis] + i, 0, extent - 1);  // edge clamp
          acc += kernel[static_cast<std::size_t>(i + radius)] * field[idx(q[0], q[1], q[2])];
        }
        out[idx(x, y, z)] = acc;
      }
    }
  }
  field.swap(out);
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec, Rng& rng) {
  validate_spec(spec);
  const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;

  double phase[3] = {0.0, 0.0, 0.0};
  if (spec.texture_amplitude > 0.0)
    for (double& p : phase) p = rng.uniform(0.0, 2.0 * M_PI);

  Phantom out;
  out.mask.dims = spec.dims;
  out.mask.voxels.assign(n, 0);
  std::vector<double> field(n);

  const double two_pi = 2.0 * M_PI;
  const double th = spec.rotation_deg * M_PI / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  std::size_t i = 0;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x, ++i) {
        const double ux = (x - spec.center[0] - spec.axis_tilt[0] * (z - spec.center[2])) * spec.spacing[0];
        const double uy = (y - spec.center[1] - spec.axis_tilt[1] * (z - spec.center[2])) * spec.spacing[1];
        const double dx = (ux * ct + uy * st) / spec.semi_axes[0];
        const double dy = (uy * ct - ux * st) / spec.semi_axes[1];
        const double dz = (z - spec.center[2]) * spec.spacing[2] / spec.semi_axes[2];
        const bool inside = dx * dx + dy * dy + dz * dz <= 1.0;
        out.mask.voxels[i] = inside ? 1 : 0;
        double v = inside ? spec.fg_mean : spec.bg_mean;
        if (spec.texture_amplitude > 0.0) {
          v += spec.texture_amplitude / 3.0 *
               (std::sin(two_pi * x * spec.spacing[0] / spec.texture_period_mm + phase[0]) +
                std::sin(two_pi * y * spec.spacing[1] / spec.texture_period_mm + phase[1]) +
                std::sin(two_pi * z * spec.spacing[2] / spec.texture_period_mm + phase[2]));
        }
        field[i] = v;
      }
    }
  }

  if (spec.blur_sigma > 0.0)
    for (int axis = 0; axis < 3; ++axis) blur_axis(field, spec.dims, axis, spec.blur_sigma);

  if (spec.noise_sigma > 0.0)
    for (double& v : field) v += rng.normal(0.0, spec.noise_sigma);

  out.volume = make_volume(spec.dims, spec.spacing, {0.0, 1000.0});
  for (std::size_t j = 0; j < n; ++j)
    out.volume.voxels[j] = static_cast<std::int16_t>(std::lround(std::clamp(field[j], 0.0, 1.0) * 1000.0));
  return out;
}

std::vector<PhantomSpec> make_suite_specs(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("phantom suite: n must be positive");
  std::vector<PhantomSpec> specs;
  specs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PhantomSpec s;
    const double a = rng.uniform(7.0, 11.0);
    if (i % 2 == 0) {
      s.semi_axes = {a, a, a};  // sphere
    } else {
      // In-plane rotated ellipse stresses the seeding geometry; the
      // through-plane axis stays near the long axis because diameter
      // propagation assumes a roughly isotropic body, and a strongly oblate
      // lesion would be dominated by propagation overrun rather than by
      // anything the segmenter controls.
      s.semi_axes = {a, a * rng.uniform(0.55, 0.8), a * rng.uniform(0.85, 1.0)};
      s.rotation_deg = rng.uniform(0.0, 180.0);
    }
    s.center += Eigen::Vector3d(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-1.5, 1.5));
    s.texture_amplitude = (i % 3 == 2) ? 0.08 : 0.0;
    // Oblique body: deeper sections drift off the annotated center, which
    // degrades purely geometric seed propagation off the annotated slice the
    // way irregular clinical lesions do.
    const double tilt_ang = rng.uniform(0.0, 2.0 * M_PI);
    const double tilt_mag = rng.uniform(0.15, 0.35);
    s.axis_tilt = {tilt_mag * std::cos(tilt_ang), tilt_mag * std::sin(tilt_ang)};
    // Heavy partial-volume blur: crisp edges let any seeding reach a
    // near-perfect cut; smeared edges make the result depend on seed
    // quality, as it does on clinical data.
    s.blur_sigma = 2.0;
    specs.push_back(s);
  }
  return specs;
}

void write_phantom_dataset(const std::filesystem::path& dir, int n, std::uint64_t seed, double recist_noise_frac) {
  std::filesystem::create_directories(dir);
  Rng root(seed);
  Rng spec_rng = root.fork(1);
  const std::vector<PhantomSpec> specs = make_suite_specs(n, spec_rng);

  std::vector<AnnotationRow> rows;
  rows.reserve(specs.size());
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "lesion_%03d", i);
    Rng gen_rng = root.fork(100 + static_cast<std::uint64_t>(i));
    const Phantom ph = generate_phantom(specs[static_cast<std::size_t>(i)], gen_rng);

    const std::string vol_name = std::string("vol_") + id + ".raw";
    save_volume(ph.volume, dir / vol_name);
    save_mask_volume(ph.mask, dir / (std::string("gt_") + id + ".raw"));

    Rng recist_rng = root.fork(200 + static_cast<std::uint64_t>(i));
    const RecistAnnotation r = extract_recist_from_mask(ph.mask, ph.volume.spacing, recist_noise_frac, recist_rng);
    rows.push_back({id, vol_name, r.slice_index, r.long_p1, r.long_p2, r.short_p1, r.short_p2});
  }
  write_annotation_csv(dir / "annotations.csv", rows);
}

}  // namespace lesionseg
