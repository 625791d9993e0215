#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evsurf/autodiff.hpp"
#include "evsurf/encodings.hpp"
#include "evsurf/types.hpp"

namespace evsurf {

/// Geometry MLP: Softplus activations, encoded input re-injected at one
/// hidden layer, outputs signed distance plus a geometric feature vector.
struct SdfNetworkConfig {
  int hidden_layers = 8;
  int hidden_dim = 256;
  int feature_dim = 256;
  int pe_bands = 9;      // annealed positional-encoding bands
  int skip_layer = 4;    // encoded input concatenated into this layer's output
  double softplus_beta = 100.0;
  double init_radius = 0.5;  // geometric initialisation sphere radius

  PosEncoding encoding() const { return PosEncoding{pe_bands, true}; }
  int encoded_dim() const { return encoding().output_dim(); }
};

/// Appearance MLP: ReLU activations, terminal sigmoid, fed with encoded
/// position, surface normal, geometric feature, and SH-encoded view direction.
struct RadianceNetworkConfig {
  int hidden_layers = 4;
  int hidden_dim = 256;
  int pe_bands = 8;  // fixed (non-annealed) bands

  PosEncoding encoding() const { return PosEncoding{pe_bands, true}; }
  int input_dim(int feature_dim) const {
    return encoding().output_dim() + 3 + feature_dim + 16;
  }
};

/// All trainable state: both networks plus the sigmoid sharpness, which is
/// stored as log(s) so s stays positive by construction.
class FieldParams {
 public:
  struct Layer {
    int W = -1;
    int b = -1;
  };

  static FieldParams create(const SdfNetworkConfig& sdf,
                            const RadianceNetworkConfig& radiance,
                            std::uint64_t seed);

  ad::ParamStore& store() { return store_; }
  const ad::ParamStore& store() const { return store_; }

  const SdfNetworkConfig& sdf_config() const { return sdf_cfg_; }
  const RadianceNetworkConfig& radiance_config() const { return rad_cfg_; }
  const std::vector<Layer>& sdf_layers() const { return sdf_layers_; }
  const std::vector<Layer>& radiance_layers() const { return rad_layers_; }
  int log_s_id() const { return log_s_id_; }

  /// Current sigmoid sharpness s = exp(log_s).
  double sharpness() const;

 private:
  FieldParams() = default;

  ad::ParamStore store_;
  SdfNetworkConfig sdf_cfg_;
  RadianceNetworkConfig rad_cfg_;
  std::vector<Layer> sdf_layers_;  // hidden layers then output layer
  std::vector<Layer> rad_layers_;
  int log_s_id_ = -1;

  friend struct CheckpointCodec;
};

/// Batched SDF evaluation on a tape.
struct SdfBatch {
  ad::Var value;     // n x 1
  ad::Var feature;   // n x feature_dim
  ad::Var gradient;  // n x 3 (invalid unless requested)
};

/// Build the SDF forward pass for `points` (n x 3). When `want_gradient`,
/// the analytic spatial gradient is produced as part of the graph, so losses
/// on the gradient (Eikonal, normal-conditioned radiance) backpropagate into
/// the weights.
SdfBatch sdf_forward(ad::Tape& tape, ad::ParamBinding& bind,
                     const FieldParams& params, const Mat& points,
                     const Eigen::VectorXd& anneal_coeffs, bool want_gradient);

/// Build the radiance forward pass. `normals` and `features` are tape vars
/// (typically from sdf_forward); `dirs` are unit view directions.
ad::Var radiance_forward(ad::Tape& tape, ad::ParamBinding& bind,
                         const FieldParams& params, const Mat& points,
                         const Mat& dirs, ad::Var normals, ad::Var features);

/// Detached single-point SDF evaluation.
struct SdfEval {
  double value = 0.0;
  Eigen::VectorXd feature;
  Vec3 gradient = Vec3::Zero();
};
SdfEval sdf_eval(const Vec3& x, const FieldParams& params,
                 const Eigen::VectorXd& anneal_coeffs);

/// Detached batched SDF values (no gradient, no feature); sampling hot path.
Eigen::VectorXd sdf_values(const FieldParams& params, const Mat& points,
                           const Eigen::VectorXd& anneal_coeffs);

/// Detached single-point radiance evaluation.
Vec3 radiance_eval(const Vec3& x, const Vec3& d, const Vec3& normal,
                   const Eigen::VectorXd& feature, const FieldParams& params);

// Checkpoint container: schema version, every parameter tensor with its Adam
// moments, iteration counter and run seed. Doubles are written raw, so a
// reload reproduces bit-identical forward outputs.
struct Checkpoint {
  FieldParams params;
  long long iteration = 0;
  std::uint64_t seed = 0;

  Checkpoint(FieldParams p, long long it, std::uint64_t s)
      : params(std::move(p)), iteration(it), seed(s) {}
};

void save_checkpoint(const std::string& path, const FieldParams& params,
                     long long iteration, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace evsurf
