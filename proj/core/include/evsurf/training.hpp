#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "evsurf/encodings.hpp"
#include "evsurf/events.hpp"
#include "evsurf/fields.hpp"
#include "evsurf/renderer.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

struct TrainConfig {
  double lambda_eik = 0.1;
  int batch_rays = 96;
  double neg_fraction = 0.5;   // rho: share of the batch from no-event pixels
  double window_max = 0.1;     // L_max, seconds
  long long iterations = 20000;
  AnnealSchedule anneal;       // n_anneal = 3e4 default

  double learning_rate = 5e-4;  // halved every 25% of training
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::uint64_t seed = 1;
  SamplingConfig sampling;
  Vec3 background = Vec3::Constant(159.0 / 255.0);

  long long log_interval = 100;
  long long checkpoint_interval = 5000;

  bool valid() const {
    return lambda_eik >= 0.0 && neg_fraction >= 0.0 && neg_fraction <= 1.0 &&
           iterations > 0 && batch_rays > 0 && window_max > 0.0 && anneal.valid();
  }
};

/// Event-difference loss over a sampled pixel set:
///   MSE(E, log C1 - log C0) on the Bayer-selected channel per pixel,
/// with the kLogFloor clamp inside the logs.
double event_loss(const std::vector<Vec3>& rendered_t0,
                  const std::vector<Vec3>& rendered_t1,
                  const std::vector<double>& frame_values,
                  const std::vector<std::pair<int, int>>& pixels,
                  const BayerMask& bayer = {});

/// Mean squared deviation of gradient norms from 1.
double eikonal_loss_from_gradients(const Mat& gradients);

/// Eikonal loss of the SDF network at the given points.
double eikonal_loss(const Mat& points, const FieldParams& params,
                    const Eigen::VectorXd& anneal_coeffs);

/// Stratified event/no-event pixel batch: ceil((1-rho) * batch) pixels
/// uniform over cells != 0, the rest uniform over cells == 0 (duplicates
/// allowed). Falls back to the other stratum when one is empty.
std::vector<std::pair<int, int>> sample_pixel_batch(const EventFrame& frame,
                                                    int batch_rays,
                                                    double neg_fraction,
                                                    std::mt19937_64& rng);

/// One training step with every random choice resolved: window, pixel batch,
/// interpolated cameras, frozen per-ray sample depths, Eikonal points.
/// Building the loss from a plan is deterministic in the parameters, which
/// is what finite-difference checks need.
struct StepPlan {
  long long iteration = 0;
  double t0 = 0.0, t1 = 0.0;
  std::vector<std::pair<int, int>> pixels;
  std::vector<double> targets;  // accumulated event value per pixel
  CameraModel cam0, cam1;
  std::vector<RaySamples> samples0, samples1;
  Mat eikonal_points;  // N x 3
};

struct TrainState {
  FieldParams params;
  TrainConfig config;
  long long iteration = 0;  // completed steps

  TrainState(FieldParams p, TrainConfig c) : params(std::move(p)), config(c) {}
};

StepPlan plan_step(const TrainState& state, const EventStream& stream,
                   const std::vector<TimedPose>& poses,
                   const CameraIntrinsics& intrinsics);

struct StepLosses {
  double event = 0.0;
  double eikonal = 0.0;
  double total = 0.0;
};

/// Taped L_total = L_event + lambda_eik L_eik for a resolved plan.
/// When lambda_eik == 0 the Eikonal term is left out of the graph entirely.
ad::Var build_total_loss(ad::Tape& tape, ad::ParamBinding& bind,
                         const FieldParams& params, const StepPlan& plan,
                         const TrainConfig& cfg, ad::Var* event_out = nullptr,
                         ad::Var* eikonal_out = nullptr);

/// Plan, render, backpropagate, and apply one optimiser update.
/// Throws RuntimeFailure on a non-finite loss, naming the iteration and batch.
StepLosses train_step(TrainState& state, const EventStream& stream,
                      const std::vector<TimedPose>& poses,
                      const CameraIntrinsics& intrinsics);

/// Learning rate at an iteration: halved as each quarter of training starts.
double lr_at(const TrainConfig& cfg, long long iteration);

/// Adam update from the gradients accumulated in the store.
void adam_update(ad::ParamStore& store, const TrainConfig& cfg, long long step_index);

}  // namespace evsurf
