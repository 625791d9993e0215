#include "evsurf/training.hpp"

#include <cmath>
#include <sstream>

#include "evsurf/rng.hpp"

namespace evsurf {

double event_loss(const std::vector<Vec3>& rendered_t0,
                  const std::vector<Vec3>& rendered_t1,
                  const std::vector<double>& frame_values,
                  const std::vector<std::pair<int, int>>& pixels,
                  const BayerMask& bayer) {
  require(rendered_t0.size() == pixels.size() &&
              rendered_t1.size() == pixels.size() &&
              frame_values.size() == pixels.size(),
          "event_loss: misaligned pixel sets");
  require(!pixels.empty(), "event_loss: empty pixel set");
  double acc = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const int ch = bayer.channel_at(pixels[i].first, pixels[i].second);
    const double l0 = std::log(std::max(rendered_t0[i][ch], kLogFloor));
    const double l1 = std::log(std::max(rendered_t1[i][ch], kLogFloor));
    const double r = (l1 - l0) - frame_values[i];
    acc += r * r;
  }
  return acc / double(pixels.size());
}

double eikonal_loss_from_gradients(const Mat& gradients) {
  require(gradients.rows() >= 1 && gradients.cols() == 3,
          "eikonal_loss: empty point set");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < gradients.rows(); ++i) {
    const double d = gradients.row(i).norm() - 1.0;
    acc += d * d;
  }
  return acc / double(gradients.rows());
}

double eikonal_loss(const Mat& points, const FieldParams& params,
                    const Eigen::VectorXd& anneal_coeffs) {
  require(points.rows() >= 1 && points.cols() == 3, "eikonal_loss: empty point set");
  ad::Tape tape;
  ad::ParamBinding bind(tape, params.store());
  SdfBatch b = sdf_forward(tape, bind, params, points, anneal_coeffs, true);
  return eikonal_loss_from_gradients(tape.value(b.gradient));
}

std::vector<std::pair<int, int>> sample_pixel_batch(const EventFrame& frame,
                                                    int batch_rays,
                                                    double neg_fraction,
                                                    std::mt19937_64& rng) {
  require(batch_rays > 0, "sample_pixel_batch: zero batch size");
  require(neg_fraction >= 0.0 && neg_fraction <= 1.0,
          "sample_pixel_batch: neg_fraction outside [0,1]");
  const Image1& v = frame.values;
  std::vector<std::pair<int, int>> event_px, zero_px;
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      (v.at(x, y) != 0.0 ? event_px : zero_px).emplace_back(x, y);
    }
  }
  int n_event = static_cast<int>(std::ceil((1.0 - neg_fraction) * batch_rays));
  n_event = std::min(n_event, batch_rays);
  if (event_px.empty()) n_event = 0;
  if (zero_px.empty()) n_event = batch_rays;

  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(batch_rays));
  for (int i = 0; i < n_event; ++i) {
    out.push_back(event_px[static_cast<std::size_t>(uniform01(rng) * double(event_px.size()))]);
  }
  for (int i = n_event; i < batch_rays; ++i) {
    out.push_back(zero_px[static_cast<std::size_t>(uniform01(rng) * double(zero_px.size()))]);
  }
  return out;
}

double lr_at(const TrainConfig& cfg, long long iteration) {
  const long long quarter = std::max<long long>(cfg.iterations / 4, 1);
  const long long k = std::min<long long>(iteration / quarter, 3);
  return cfg.learning_rate / double(1LL << k);
}

void adam_update(ad::ParamStore& store, const TrainConfig& cfg, long long step_index) {
  require(step_index >= 1, "adam_update: step index is 1-based");
  const double lr = lr_at(cfg, step_index - 1);
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, double(step_index));
  const double bc2 = 1.0 - std::pow(b2, double(step_index));
  for (int id = 0; id < store.size(); ++id) {
    Mat& m = store.adam_m(id);
    Mat& v = store.adam_v(id);
    const Mat& g = store.grad(id);
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const Mat mhat = m / bc1;
    const Mat vhat = v / bc2;
    store.value(id).array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg.adam_eps);
  }
}

StepPlan plan_step(const TrainState& state, const EventStream& stream,
                   const std::vector<TimedPose>& poses,
                   const CameraIntrinsics& intrinsics) {
  const TrainConfig& cfg = state.config;
  require(cfg.valid(), "plan_step: invalid train config");
  require(stream.t_end > stream.t_begin, "plan_step: degenerate stream span");

  StepPlan plan;
  plan.iteration = state.iteration;

  // Window end uniform over the stream span (exclusive of the exact start),
  // then the start per the adaptive-window rule.
  auto rng_window = make_rng(cfg.seed, RngStream::kWindow,
                             static_cast<std::uint64_t>(state.iteration));
  const double span = stream.t_end - stream.t_begin;
  const double t1 = stream.t_begin + span * (1.0 - uniform01(rng_window));
  std::tie(plan.t0, plan.t1) =
      sample_window(t1, cfg.window_max, stream.t_begin, rng_window);

  const EventFrame frame = accumulate(stream, plan.t0, plan.t1);
  auto rng_batch = make_rng(cfg.seed, RngStream::kPixelBatch,
                            static_cast<std::uint64_t>(state.iteration));
  plan.pixels = sample_pixel_batch(frame, cfg.batch_rays, cfg.neg_fraction, rng_batch);
  plan.targets.reserve(plan.pixels.size());
  for (auto [x, y] : plan.pixels) plan.targets.push_back(frame.values.at(x, y));

  plan.cam0 = CameraModel{intrinsics, interpolate_pose(poses, plan.t0)};
  plan.cam1 = CameraModel{intrinsics, interpolate_pose(poses, plan.t1)};

  const Eigen::VectorXd coeffs = anneal_coeffs(
      state.params.sdf_config().pe_bands, state.iteration, cfg.anneal);
  const FieldFns detached = field_fns_from_params(state.params, coeffs);
  plan.samples0 = sample_pixel_rays(detached, plan.cam0, plan.pixels, cfg.sampling,
                                    cfg.seed, 2 * state.iteration);
  plan.samples1 = sample_pixel_rays(detached, plan.cam1, plan.pixels, cfg.sampling,
                                    cfg.seed, 2 * state.iteration + 1);

  // Eikonal points: half uniform in the unit ball, half Gaussian-perturbed
  // around the current surface candidates (uniform fill-in when scarce).
  const int n_eik = cfg.batch_rays;
  auto rng_eik = make_rng(cfg.seed, RngStream::kEikonal,
                          static_cast<std::uint64_t>(state.iteration));
  const auto candidates = surface_candidates(plan.samples0);
  std::vector<Vec3> surf;
  for (const auto& c : candidates) {
    if (c) surf.push_back(*c);
  }
  plan.eikonal_points.resize(n_eik, 3);
  auto uniform_ball = [&]() {
    while (true) {
      Vec3 p(uniform(rng_eik, -1.0, 1.0), uniform(rng_eik, -1.0, 1.0),
             uniform(rng_eik, -1.0, 1.0));
      if (p.squaredNorm() <= 1.0) return p;
    }
  };
  const int n_uniform = n_eik / 2;
  for (int i = 0; i < n_eik; ++i) {
    Vec3 p;
    if (i < n_uniform || surf.empty()) {
      p = uniform_ball();
    } else {
      const Vec3& base = surf[static_cast<std::size_t>(uniform01(rng_eik) * double(surf.size()))];
      p = base + 0.01 * Vec3(normal01(rng_eik), normal01(rng_eik), normal01(rng_eik));
      if (p.norm() > 1.0) p = uniform_ball();
    }
    plan.eikonal_points.row(i) = p.transpose();
  }
  return plan;
}

ad::Var build_total_loss(ad::Tape& tape, ad::ParamBinding& bind,
                         const FieldParams& params, const StepPlan& plan,
                         const TrainConfig& cfg, ad::Var* event_out,
                         ad::Var* eikonal_out) {
  const Eigen::VectorXd coeffs = anneal_coeffs(params.sdf_config().pe_bands,
                                               plan.iteration, cfg.anneal);
  const std::vector<ad::Var> rgb0 = render_pixels_with_samples(
      tape, bind, params, plan.cam0, plan.pixels, plan.samples0, coeffs,
      cfg.background);
  const std::vector<ad::Var> rgb1 = render_pixels_with_samples(
      tape, bind, params, plan.cam1, plan.pixels, plan.samples1, coeffs,
      cfg.background);

  const BayerMask bayer;
  std::vector<ad::Var> residuals;
  residuals.reserve(plan.pixels.size());
  for (std::size_t i = 0; i < plan.pixels.size(); ++i) {
    const int ch = bayer.channel_at(plan.pixels[i].first, plan.pixels[i].second);
    ad::Var c0 = tape.log(tape.clamp_min(tape.slice_cols(rgb0[i], ch, 1), kLogFloor));
    ad::Var c1 = tape.log(tape.clamp_min(tape.slice_cols(rgb1[i], ch, 1), kLogFloor));
    ad::Var diff = tape.sub(c1, c0);
    residuals.push_back(tape.square(tape.add_const(diff, -plan.targets[i])));
  }
  ad::Var l_event = tape.mean(tape.concat_rows(residuals));
  if (event_out) *event_out = l_event;

  if (cfg.lambda_eik == 0.0) {
    // Left out of the graph so d(total)/dw is exactly d(event)/dw.
    if (eikonal_out) *eikonal_out = ad::Var{};
    return l_event;
  }

  SdfBatch eik = sdf_forward(tape, bind, params, plan.eikonal_points, coeffs, true);
  ad::Var norms = tape.row_norm(eik.gradient);
  ad::Var l_eik = tape.mean(tape.square(tape.add_const(norms, -1.0)));
  if (eikonal_out) *eikonal_out = l_eik;
  return tape.add(l_event, tape.scale(l_eik, cfg.lambda_eik));
}

StepLosses train_step(TrainState& state, const EventStream& stream,
                      const std::vector<TimedPose>& poses,
                      const CameraIntrinsics& intrinsics) {
  const StepPlan plan = plan_step(state, stream, poses, intrinsics);

  ad::Tape tape;
  ad::ParamBinding bind(tape, state.params.store());
  ad::Var l_event, l_eik;
  ad::Var total = build_total_loss(tape, bind, state.params, plan, state.config,
                                   &l_event, &l_eik);

  StepLosses losses;
  losses.event = tape.value(l_event)(0, 0);
  losses.eikonal = l_eik.valid()
                       ? tape.value(l_eik)(0, 0)
                       : eikonal_loss(plan.eikonal_points, state.params,
                                      anneal_coeffs(state.params.sdf_config().pe_bands,
                                                    plan.iteration, state.config.anneal));
  losses.total = tape.value(total)(0, 0);
  if (!std::isfinite(losses.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at iteration " << state.iteration << " (event="
        << losses.event << ", eikonal=" << losses.eikonal << "); pixel batch:";
    for (auto [x, y] : plan.pixels) msg << " (" << x << "," << y << ")";
    throw RuntimeFailure(msg.str());
  }

  state.params.store().zero_grads();
  tape.backward(total);
  tape.accumulate_param_grads(state.params.store());
  adam_update(state.params.store(), state.config, state.iteration + 1);
  state.iteration += 1;
  return losses;
}

}  // namespace evsurf
