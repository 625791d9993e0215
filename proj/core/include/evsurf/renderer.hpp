#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "evsurf/autodiff.hpp"
#include "evsurf/camera.hpp"
#include "evsurf/fields.hpp"
#include "evsurf/image.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

/// Hierarchical sampling budget along one ray.
struct SamplingConfig {
  int n_coarse = 64;
  int n_rounds = 4;
  int n_per_round = 16;
};

// The scene is normalised into the unit sphere at the origin; rays are
// sampled between their entry and exit depths.
inline constexpr double kSceneRadius = 1.0;

/// Entry/exit depths of a ray against the unit bounding sphere. False when
/// the ray misses (such pixels render pure background).
bool ray_unit_sphere(const Ray& ray, double& t_near, double& t_far);

/// NeuS opacity from consecutive SDF samples:
///   alpha = max((Phi_s(sdf_i) - Phi_s(sdf_next)) / Phi_s(sdf_i), 0),
/// Phi_s the logistic sigmoid with sharpness s.
double alpha_from_sdf(double sdf_i, double sdf_next, double s);

/// Front-to-back compositing. Returns the pixel colour (background added
/// with the residual transmittance) and the per-sample weights w_i = T_i a_i.
std::pair<Vec3, Eigen::VectorXd> composite(const Eigen::VectorXd& alphas,
                                           const std::vector<Vec3>& colours,
                                           const Vec3& background);

/// Field interface for sampling and plain (non-taped) rendering. Analytic
/// scenes and detached networks both fit it.
struct FieldFns {
  std::function<Eigen::VectorXd(const Mat&)> sdf;           // n x 3 -> n
  std::function<Mat(const Mat&, const Mat&)> colour;        // pts, dirs -> n x 3
  double sharpness = 64.0;
};

/// Stratified + importance-refined samples along one ray (detached).
struct RaySamples {
  Eigen::VectorXd t_values;  // strictly increasing
  Mat positions;             // n x 3
  Eigen::VectorXd sdf;
  Eigen::VectorXd alphas;    // alphas[i] from (sdf[i], sdf[i+1]); last is 0
  Eigen::VectorXd weights;   // T_i * alpha_i
};

/// Coarse stratified samples plus n_rounds of weight-PDF refinement with the
/// single SDF network. Empty sample set when the ray misses the scene bound.
RaySamples importance_sample(const Ray& ray, const FieldFns& field,
                             const SamplingConfig& cfg, std::mt19937_64& rng);

/// Plain per-pixel render against a FieldFns scene.
std::vector<Vec3> render_pixels(const CameraModel& cam,
                                const std::vector<std::pair<int, int>>& pixels,
                                const FieldFns& field, const SamplingConfig& cfg,
                                const Vec3& background, std::uint64_t seed,
                                long long iteration);

/// Detached sampling pass for a pixel batch: importance_sample per ray with
/// per-ray RNG streams keyed on (seed, iteration, pixel index).
std::vector<RaySamples> sample_pixel_rays(const FieldFns& field,
                                          const CameraModel& cam,
                                          const std::vector<std::pair<int, int>>& pixels,
                                          const SamplingConfig& cfg,
                                          std::uint64_t seed, long long iteration);

/// Max-weight sample position per ray, when one carries enough weight.
std::vector<std::optional<Vec3>> surface_candidates(const std::vector<RaySamples>& samples);

/// Differentiable render of a pixel batch over fixed (detached) sample
/// depths. One 1x3 colour var per pixel; rays with fewer than two samples
/// become constant background.
std::vector<ad::Var> render_pixels_with_samples(
    ad::Tape& tape, ad::ParamBinding& bind, const FieldParams& params,
    const CameraModel& cam, const std::vector<std::pair<int, int>>& pixels,
    const std::vector<RaySamples>& samples,
    const Eigen::VectorXd& anneal_coeffs, const Vec3& background);

/// Taped differentiable render of a pixel batch against the field networks.
struct TapedRender {
  std::vector<ad::Var> pixel_rgb;  // one 1x3 var per requested pixel
  std::vector<RaySamples> samples;
  /// Detached max-weight sample position per pixel (surface candidates).
  std::vector<std::optional<Vec3>> surface_points;
};

TapedRender render_pixels_taped(ad::Tape& tape, ad::ParamBinding& bind,
                                const FieldParams& params, const CameraModel& cam,
                                const std::vector<std::pair<int, int>>& pixels,
                                const Eigen::VectorXd& anneal_coeffs,
                                const SamplingConfig& cfg, const Vec3& background,
                                std::uint64_t seed, long long iteration);

/// Full-frame render through the taped path (forward only), chunked to bound
/// memory. Bit-identical to training-time rendering of the same pixels.
Image3 render_image(const FieldParams& params, const CameraModel& cam,
                    const Eigen::VectorXd& anneal_coeffs, const SamplingConfig& cfg,
                    const Vec3& background, std::uint64_t seed, long long iteration,
                    int chunk_pixels = 1024);

/// FieldFns view of the networks (detached); colour queries evaluate the
/// radiance net with normals and features from the SDF net.
FieldFns field_fns_from_params(const FieldParams& params,
                               const Eigen::VectorXd& anneal_coeffs);

}  // namespace evsurf
