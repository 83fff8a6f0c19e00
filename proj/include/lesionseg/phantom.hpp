#pragma once

#include "lesionseg/recist.hpp"

namespace lesionseg {

/// Ellipsoidal lesion on a uniform background. Intensities are normalized
/// ([0, 1]) before quantization into the volume's (0, 1000) window.
struct PhantomSpec {
  Eigen::Vector3i dims{64, 64, 48};
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};   // mm
  Eigen::Vector3d center{31.5, 31.5, 23.5}; // voxel coordinates
  Eigen::Vector3d semi_axes{10.0, 10.0, 10.0};  // mm
  double rotation_deg = 0.0;        // in-plane rotation about the center
  double fg_mean = 0.7;
  double bg_mean = 0.3;
  double noise_sigma = 0.05;
  double texture_amplitude = 0.0;   // low-frequency modulation, 0 = off
  double texture_period_mm = 24.0;
  double blur_sigma = 0.0;          // partial-volume blur, voxels
  // In-plane drift of the lesion center per slice (voxels of xy shift per
  // voxel of z), modeling lesions oblique to the axial stack. The center
  // slice is unaffected; deeper sections move off the annotated center.
  Eigen::Vector2d axis_tilt{0.0, 0.0};
};

struct Phantom {
  Volume volume;
  MaskVolume mask;  // analytic ground truth
};

/// Deterministic per rng state: texture phases first (only when textured),
/// then one normal deviate per voxel in storage order.
Phantom generate_phantom(const PhantomSpec& spec, Rng& rng);

/// Mixed sphere/rotated-ellipsoid specs with jittered centers, alternating
/// texture.
std::vector<PhantomSpec> make_suite_specs(int n, Rng& rng);

/// Writes vol_<id>.raw/.json, gt_<id>.raw/.json and annotations.csv (RECIST
/// measured from the ground truth with +-recist_noise_frac length jitter).
void write_phantom_dataset(const std::filesystem::path& dir, int n, std::uint64_t seed, double recist_noise_frac);

}  // namespace lesionseg
