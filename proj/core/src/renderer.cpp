#include "evsurf/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "evsurf/rng.hpp"

namespace evsurf {

bool ray_unit_sphere(const Ray& ray, double& t_near, double& t_far) {
  require(ray.direction.norm() > 1e-12, "ray_unit_sphere: degenerate ray");
  const Vec3 d = ray.direction.normalized();
  const Vec3 o = ray.origin;
  const double b = o.dot(d);
  const double c = o.squaredNorm() - kSceneRadius * kSceneRadius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double sq = std::sqrt(disc);
  t_near = std::max(-b - sq, 0.0);
  t_far = -b + sq;
  return t_far > t_near;
}

double alpha_from_sdf(double sdf_i, double sdf_next, double s) {
  require(s > 0.0, "alpha_from_sdf: sharpness must be positive");
  const double phi_i = 1.0 / (1.0 + std::exp(-s * sdf_i));
  const double phi_next = 1.0 / (1.0 + std::exp(-s * sdf_next));
  if (phi_i <= 0.0) return 0.0;
  return std::max((phi_i - phi_next) / phi_i, 0.0);
}

std::pair<Vec3, Eigen::VectorXd> composite(const Eigen::VectorXd& alphas,
                                           const std::vector<Vec3>& colours,
                                           const Vec3& background) {
  require(static_cast<std::size_t>(alphas.size()) == colours.size(),
          "composite: alpha/colour length mismatch");
  Eigen::VectorXd weights(alphas.size());
  Vec3 out = Vec3::Zero();
  double trans = 1.0, wsum = 0.0;
  for (Eigen::Index i = 0; i < alphas.size(); ++i) {
    require(alphas[i] >= 0.0 && alphas[i] <= 1.0, "composite: alpha outside [0,1]");
    const double w = trans * alphas[i];
    weights[i] = w;
    out += w * colours[static_cast<std::size_t>(i)];
    wsum += w;
    trans *= 1.0 - alphas[i];
  }
  out += (1.0 - wsum) * background;
  return {out, weights};
}

namespace {

Eigen::VectorXd stratified_depths(double near, double far, int n, std::mt19937_64& rng) {
  Eigen::VectorXd t(n);
  const double step = (far - near) / double(n);
  for (int i = 0; i < n; ++i) {
    t[i] = near + step * (double(i) + uniform01(rng));
  }
  return t;
}

// Piecewise-constant PDF over the bins between consecutive depths, mass
// proportional to the leading sample's weight; inverse-CDF draws.
Eigen::VectorXd sample_pdf_depths(const Eigen::VectorXd& t,
                                  const Eigen::VectorXd& weights, int n,
                                  double near, double far, std::mt19937_64& rng) {
  const Eigen::Index bins = t.size() - 1;
  Eigen::VectorXd out(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < bins; ++i) total += std::max(weights[i], 0.0);
  if (bins < 1 || total <= 1e-12) {
    for (int i = 0; i < n; ++i) out[i] = uniform(rng, near, far);
    return out;
  }
  for (int k = 0; k < n; ++k) {
    double u = uniform01(rng) * total;
    Eigen::Index bin = bins - 1;
    for (Eigen::Index i = 0; i < bins; ++i) {
      const double w = std::max(weights[i], 0.0);
      if (u <= w || i == bins - 1) {
        bin = i;
        const double frac = w > 0.0 ? std::clamp(u / w, 0.0, 1.0) : uniform01(rng);
        out[k] = t[bin] + frac * (t[bin + 1] - t[bin]);
        break;
      }
      u -= w;
    }
  }
  return out;
}

Mat positions_at(const Ray& ray, const Eigen::VectorXd& t) {
  Mat pts(t.size(), 3);
  const Vec3 d = ray.direction;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    pts.row(i) = (ray.origin + t[i] * d).transpose();
  }
  return pts;
}

void fill_alpha_weights(RaySamples& s, double sharpness) {
  const Eigen::Index n = s.t_values.size();
  s.alphas = Eigen::VectorXd::Zero(n);
  s.weights = Eigen::VectorXd::Zero(n);
  double trans = 1.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    s.alphas[i] = alpha_from_sdf(s.sdf[i], s.sdf[i + 1], sharpness);
    s.weights[i] = trans * s.alphas[i];
    trans *= 1.0 - s.alphas[i];
  }
}

void merge_sorted_depths(Eigen::VectorXd& t, const Eigen::VectorXd& extra) {
  std::vector<double> all(t.data(), t.data() + t.size());
  all.insert(all.end(), extra.data(), extra.data() + extra.size());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  t = Eigen::Map<Eigen::VectorXd>(all.data(), static_cast<Eigen::Index>(all.size()));
}

}  // namespace

RaySamples importance_sample(const Ray& ray, const FieldFns& field,
                             const SamplingConfig& cfg, std::mt19937_64& rng) {
  require(cfg.n_coarse >= 2, "importance_sample: need at least 2 coarse samples");
  RaySamples s;
  double near, far;
  if (!ray_unit_sphere(ray, near, far)) return s;  // empty: pure background

  s.t_values = stratified_depths(near, far, cfg.n_coarse, rng);
  std::sort(s.t_values.data(), s.t_values.data() + s.t_values.size());
  s.positions = positions_at(ray, s.t_values);
  s.sdf = field.sdf(s.positions);
  fill_alpha_weights(s, field.sharpness);

  for (int round = 0; round < cfg.n_rounds; ++round) {
    const Eigen::VectorXd extra = sample_pdf_depths(
        s.t_values, s.weights, cfg.n_per_round, near, far, rng);
    merge_sorted_depths(s.t_values, extra);
    s.positions = positions_at(ray, s.t_values);
    s.sdf = field.sdf(s.positions);  // single network, re-evaluated
    fill_alpha_weights(s, field.sharpness);
  }
  return s;
}

std::vector<Vec3> render_pixels(const CameraModel& cam,
                                const std::vector<std::pair<int, int>>& pixels,
                                const FieldFns& field, const SamplingConfig& cfg,
                                const Vec3& background, std::uint64_t seed,
                                long long iteration) {
  const std::vector<Ray> rays = generate_rays(cam, pixels);
  std::vector<Vec3> out(pixels.size(), background);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto [px, py] = pixels[i];
    const std::uint64_t pixel_index =
        std::uint64_t(py) * std::uint64_t(cam.intrinsics.width) + std::uint64_t(px);
    auto rng = make_rng(seed, RngStream::kRayJitter,
                        static_cast<std::uint64_t>(iteration), pixel_index);
    const RaySamples s = importance_sample(rays[i], field, cfg, rng);
    const Eigen::Index n = s.t_values.size();
    if (n < 2) continue;
    const Mat dirs = rays[i].direction.transpose().replicate(n - 1, 1);
    const Mat colours = field.colour(s.positions.topRows(n - 1), dirs);
    std::vector<Vec3> cols(static_cast<std::size_t>(n - 1));
    for (Eigen::Index k = 0; k + 1 < n; ++k) cols[k] = colours.row(k).transpose();
    out[i] = composite(s.alphas.head(n - 1), cols, background).first;
  }
  return out;
}

FieldFns field_fns_from_params(const FieldParams& params,
                               const Eigen::VectorXd& anneal_coeffs) {
  FieldFns f;
  f.sharpness = params.sharpness();
  f.sdf = [&params, anneal_coeffs](const Mat& pts) {
    return sdf_values(params, pts, anneal_coeffs);
  };
  f.colour = [&params, anneal_coeffs](const Mat& pts, const Mat& dirs) {
    ad::Tape tape;
    ad::ParamBinding bind(tape, params.store());
    SdfBatch sb = sdf_forward(tape, bind, params, pts, anneal_coeffs, true);
    ad::Var rgb = radiance_forward(tape, bind, params, pts, dirs, sb.gradient,
                                   sb.feature);
    return tape.value(rgb);
  };
  return f;
}

std::vector<RaySamples> sample_pixel_rays(const FieldFns& field,
                                          const CameraModel& cam,
                                          const std::vector<std::pair<int, int>>& pixels,
                                          const SamplingConfig& cfg,
                                          std::uint64_t seed, long long iteration) {
  const std::vector<Ray> rays = generate_rays(cam, pixels);
  std::vector<RaySamples> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto [px, py] = pixels[i];
    const std::uint64_t pixel_index =
        std::uint64_t(py) * std::uint64_t(cam.intrinsics.width) + std::uint64_t(px);
    auto rng = make_rng(seed, RngStream::kRayJitter,
                        static_cast<std::uint64_t>(iteration), pixel_index);
    out[i] = importance_sample(rays[i], field, cfg, rng);
  }
  return out;
}

std::vector<std::optional<Vec3>> surface_candidates(const std::vector<RaySamples>& samples) {
  std::vector<std::optional<Vec3>> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].t_values.size() < 2) continue;
    Eigen::Index best;
    if (samples[i].weights.maxCoeff(&best) > 1e-6) {
      out[i] = Vec3(samples[i].positions.row(best).transpose());
    }
  }
  return out;
}

std::vector<ad::Var> render_pixels_with_samples(
    ad::Tape& tape, ad::ParamBinding& bind, const FieldParams& params,
    const CameraModel& cam, const std::vector<std::pair<int, int>>& pixels,
    const std::vector<RaySamples>& samples,
    const Eigen::VectorXd& anneal_coeffs, const Vec3& background) {
  require(samples.size() == pixels.size(),
          "render_pixels_with_samples: sample/pixel count mismatch");
  const std::vector<Ray> rays = generate_rays(cam, pixels);
  std::vector<ad::Var> out(pixels.size());

  std::vector<Eigen::Index> offsets(pixels.size(), -1);
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Eigen::Index n = samples[i].t_values.size();
    if (n >= 2) {
      offsets[i] = total;
      total += n;
    }
  }
  if (total == 0) {
    for (auto& v : out) v = tape.constant(background.transpose());
    return out;
  }

  // One mega-batch through both networks for every sample of every ray.
  Mat all_pts(total, 3), all_dirs(total, 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (offsets[i] < 0) continue;
    const Eigen::Index n = samples[i].t_values.size();
    all_pts.middleRows(offsets[i], n) = samples[i].positions;
    all_dirs.middleRows(offsets[i], n) = rays[i].direction.transpose().replicate(n, 1);
  }

  SdfBatch sdf = sdf_forward(tape, bind, params, all_pts, anneal_coeffs, true);
  ad::Var rgb = radiance_forward(tape, bind, params, all_pts, all_dirs,
                                 sdf.gradient, sdf.feature);
  // Phi = sigmoid(s * sdf); s participates in the graph via exp(log_s).
  ad::Var s_var = tape.exp(bind(params.log_s_id()));
  ad::Var phi = tape.sigmoid(tape.mul(sdf.value, s_var));

  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (offsets[i] < 0) {
      out[i] = tape.constant(background.transpose());
      continue;
    }
    const Eigen::Index n = samples[i].t_values.size();
    ad::Var phi_ray = tape.slice_rows(phi, int(offsets[i]), int(n));
    ad::Var head = tape.slice_rows(phi_ray, 0, int(n - 1));
    ad::Var next = tape.slice_rows(phi_ray, 1, int(n - 1));
    // max((head - next) / head, 0); denominator floored only against 0/0.
    ad::Var alpha = tape.relu(
        tape.div(tape.sub(head, next), tape.clamp_min(head, 1e-30)));
    ad::Var cols = tape.slice_rows(rgb, int(offsets[i]), int(n - 1));
    out[i] = tape.composite(alpha, cols, background);
  }
  return out;
}

TapedRender render_pixels_taped(ad::Tape& tape, ad::ParamBinding& bind,
                                const FieldParams& params, const CameraModel& cam,
                                const std::vector<std::pair<int, int>>& pixels,
                                const Eigen::VectorXd& anneal_coeffs,
                                const SamplingConfig& cfg, const Vec3& background,
                                std::uint64_t seed, long long iteration) {
  TapedRender out;
  const FieldFns detached = field_fns_from_params(params, anneal_coeffs);
  out.samples = sample_pixel_rays(detached, cam, pixels, cfg, seed, iteration);
  out.surface_points = surface_candidates(out.samples);
  out.pixel_rgb = render_pixels_with_samples(tape, bind, params, cam, pixels,
                                             out.samples, anneal_coeffs, background);
  return out;
}

Image3 render_image(const FieldParams& params, const CameraModel& cam,
                    const Eigen::VectorXd& anneal_coeffs, const SamplingConfig& cfg,
                    const Vec3& background, std::uint64_t seed, long long iteration,
                    int chunk_pixels) {
  require(chunk_pixels > 0, "render_image: chunk size must be positive");
  const int w = cam.intrinsics.width, h = cam.intrinsics.height;
  Image3 img(w, h);
  std::vector<std::pair<int, int>> chunk;
  chunk.reserve(static_cast<std::size_t>(chunk_pixels));
  auto flush = [&](const std::vector<std::pair<int, int>>& px) {
    if (px.empty()) return;
    ad::Tape tape;
    ad::ParamBinding bind(tape, params.store());
    TapedRender r = render_pixels_taped(tape, bind, params, cam, px, anneal_coeffs,
                                        cfg, background, seed, iteration);
    for (std::size_t i = 0; i < px.size(); ++i) {
      img.set_pixel(px[i].first, px[i].second,
                    Vec3(tape.value(r.pixel_rgb[i]).row(0).transpose()));
    }
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      chunk.emplace_back(x, y);
      if (static_cast<int>(chunk.size()) == chunk_pixels) {
        flush(chunk);
        chunk.clear();
      }
    }
  }
  flush(chunk);
  return img;
}

}  // namespace evsurf
