#pragma once

#include <Eigen/Core>
#include <vector>

#include "evsurf/types.hpp"

namespace evsurf {

/// Coarse-to-fine schedule for positional-encoding bands.
struct AnnealSchedule {
  int n_fmin = 0;        // bands fully on from the start
  int n_fmax = 9;        // bands on after annealing completes
  int n_anneal = 30000;  // iterations to go from n_fmin to n_fmax

  bool valid() const { return n_fmin >= 0 && n_fmin <= n_fmax && n_anneal > 0; }
};

/// Weight of band k at iteration n:
///   beta_k(n) = 1/2 (1 - cos(pi clamp(alpha(n) - k + n_fmin, 0, 1)))
/// with alpha(n) = (n_fmax - n_fmin) n / n_anneal.
double anneal_coeff(int k, long long n, const AnnealSchedule& sched);

/// All band coefficients for an encoding with num_bands bands.
Eigen::VectorXd anneal_coeffs(int num_bands, long long n, const AnnealSchedule& sched);

/// Sinusoidal positional encoding of 3D coordinates.
struct PosEncoding {
  int num_bands = 8;
  bool include_input = true;

  int output_dim() const { return (include_input ? 3 : 0) + 6 * num_bands; }
};

/// Encode one point: [x, then per band k: beta_k sin(2^k pi x_a), beta_k cos(2^k pi x_a)].
Eigen::VectorXd pos_encode(const Vec3& x, const PosEncoding& enc,
                           const Eigen::VectorXd& coeffs);

/// Batched encoding; rows of `points` are xyz. Output is N x output_dim().
Mat pos_encode_batch(const Mat& points, const PosEncoding& enc,
                     const Eigen::VectorXd& coeffs);

/// d(encoding)/d(x_axis) for the whole batch; used to seed analytic
/// input gradients through the field networks.
Mat pos_encode_dbatch(const Mat& points, const PosEncoding& enc,
                      const Eigen::VectorXd& coeffs, int axis);

/// Degree-4 (16 component) real spherical harmonics, (l, m) lexicographic,
/// Condon-Shortley phase omitted. `d` must be unit length within 1e-6.
Eigen::Matrix<double, 16, 1> sh_encode(const Vec3& d);

/// Batched SH; rows of `dirs` are unit vectors. Output is N x 16.
Mat sh_encode_batch(const Mat& dirs);

}  // namespace evsurf
