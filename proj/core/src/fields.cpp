#include "evsurf/fields.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "evsurf/rng.hpp"

namespace evsurf {

namespace {

constexpr double kSkipScale = M_SQRT1_2;  // 1/sqrt(2) on the skip concat

Mat normal_matrix(int rows, int cols, double mean, double stddev,
                  std::mt19937_64& rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = mean + stddev * normal01(rng);
  }
  return m;
}

Mat uniform_matrix(int rows, int cols, double bound, std::mt19937_64& rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = uniform(rng, -bound, bound);
  }
  return m;
}

}  // namespace

FieldParams FieldParams::create(const SdfNetworkConfig& sdf,
                                const RadianceNetworkConfig& radiance,
                                std::uint64_t seed) {
  require(sdf.hidden_layers >= 1 && sdf.hidden_dim >= 1 && sdf.feature_dim >= 1,
          "FieldParams: bad SDF network shape");
  require(sdf.skip_layer >= 1 && sdf.skip_layer <= sdf.hidden_layers,
          "FieldParams: skip layer out of range");
  require(radiance.hidden_layers >= 1 && radiance.hidden_dim >= 1,
          "FieldParams: bad radiance network shape");

  FieldParams fp;
  fp.sdf_cfg_ = sdf;
  fp.rad_cfg_ = radiance;

  const int enc_dim = sdf.encoded_dim();
  const int h = sdf.hidden_dim;

  // Geometric initialisation: the freshly initialised field approximates
  // phi(x) = |x| - init_radius. Hidden weights N(0, sqrt(2/out)); the first
  // layer and the post-skip layer see only the raw xyz part of the encoding;
  // the output layer is near-constant positive with bias -r.
  auto rng_sdf = make_rng(seed, RngStream::kInit, 0);
  for (int l = 0; l < sdf.hidden_layers; ++l) {
    int in_dim = (l == 0) ? enc_dim : h;
    if (l == sdf.skip_layer) in_dim = h + enc_dim;
    const double stddev = std::sqrt(2.0) / std::sqrt(double(h));
    Mat W = normal_matrix(in_dim, h, 0.0, stddev, rng_sdf);
    if (l == 0) {
      W.bottomRows(enc_dim - 3).setZero();  // sin/cos rows start silent
    } else if (l == sdf.skip_layer) {
      W.bottomRows(enc_dim - 3).setZero();  // ditto for the skip branch
    }
    Layer layer;
    layer.W = fp.store_.add("sdf.l" + std::to_string(l) + ".W", std::move(W));
    layer.b = fp.store_.add("sdf.l" + std::to_string(l) + ".b", Mat::Zero(1, h));
    fp.sdf_layers_.push_back(layer);
  }
  {
    const int out_dim = 1 + sdf.feature_dim;
    const double mean = std::sqrt(M_PI) / std::sqrt(double(h));
    Mat W = normal_matrix(h, out_dim, mean, 1e-4, rng_sdf);
    Mat b = Mat::Constant(1, out_dim, -sdf.init_radius);
    Layer layer;
    layer.W = fp.store_.add("sdf.out.W", std::move(W));
    layer.b = fp.store_.add("sdf.out.b", std::move(b));
    fp.sdf_layers_.push_back(layer);
  }

  // Radiance network: uniform fan-in initialisation.
  auto rng_rad = make_rng(seed, RngStream::kInit, 1);
  const int rh = radiance.hidden_dim;
  for (int l = 0; l < radiance.hidden_layers; ++l) {
    const int in_dim = (l == 0) ? radiance.input_dim(sdf.feature_dim) : rh;
    const double bound = 1.0 / std::sqrt(double(in_dim));
    Layer layer;
    layer.W = fp.store_.add("rad.l" + std::to_string(l) + ".W",
                            uniform_matrix(in_dim, rh, bound, rng_rad));
    layer.b = fp.store_.add("rad.l" + std::to_string(l) + ".b",
                            uniform_matrix(1, rh, bound, rng_rad));
    fp.rad_layers_.push_back(layer);
  }
  {
    const double bound = 1.0 / std::sqrt(double(rh));
    Layer layer;
    layer.W = fp.store_.add("rad.out.W", uniform_matrix(rh, 3, bound, rng_rad));
    layer.b = fp.store_.add("rad.out.b", uniform_matrix(1, 3, bound, rng_rad));
    fp.rad_layers_.push_back(layer);
  }

  // 1/s starts at 0.3; trained in log domain so s > 0 is structural.
  fp.log_s_id_ = fp.store_.add("log_s", Mat::Constant(1, 1, std::log(1.0 / 0.3)));
  return fp;
}

double FieldParams::sharpness() const {
  return std::exp(store_.value(log_s_id_)(0, 0));
}

SdfBatch sdf_forward(ad::Tape& tape, ad::ParamBinding& bind,
                     const FieldParams& params, const Mat& points,
                     const Eigen::VectorXd& anneal_coeffs, bool want_gradient) {
  require(points.cols() == 3, "sdf_forward: points must be n x 3");
  require(points.allFinite(), "sdf_forward: non-finite input point");
  const SdfNetworkConfig& cfg = params.sdf_config();
  const PosEncoding enc = cfg.encoding();

  const ad::Var enc_in = tape.constant(pos_encode_batch(points, enc, anneal_coeffs));
  std::array<ad::Var, 3> tang, tang_in;
  if (want_gradient) {
    for (int a = 0; a < 3; ++a) {
      tang_in[a] = tape.constant(pos_encode_dbatch(points, enc, anneal_coeffs, a));
      tang[a] = tang_in[a];
    }
  }

  ad::Var h = enc_in;
  const auto& layers = params.sdf_layers();
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    const ad::Var W = bind(layers[l].W);
    const ad::Var b = bind(layers[l].b);
    const ad::Var z = tape.add_bias(tape.matmul(h, W), b);
    h = tape.softplus(z, cfg.softplus_beta);
    if (want_gradient) {
      // d softplus_beta / dz = sigmoid(beta z), applied to each tangent.
      const ad::Var dact = tape.sigmoid(tape.scale(z, cfg.softplus_beta));
      for (int a = 0; a < 3; ++a) {
        tang[a] = tape.mul(tape.matmul(tang[a], W), dact);
      }
    }
    if (l + 1 == cfg.skip_layer && l + 1 < cfg.hidden_layers) {
      h = tape.scale(tape.concat_cols({h, enc_in}), kSkipScale);
      if (want_gradient) {
        for (int a = 0; a < 3; ++a) {
          tang[a] = tape.scale(tape.concat_cols({tang[a], tang_in[a]}), kSkipScale);
        }
      }
    }
  }

  const FieldParams::Layer out = layers.back();
  const ad::Var W_out = bind(out.W);
  const ad::Var z_out = tape.add_bias(tape.matmul(h, W_out), bind(out.b));

  SdfBatch result;
  result.value = tape.slice_cols(z_out, 0, 1);
  result.feature = tape.slice_cols(z_out, 1, cfg.feature_dim);
  if (want_gradient) {
    const ad::Var w_phi = tape.slice_cols(W_out, 0, 1);
    std::vector<ad::Var> g;
    for (int a = 0; a < 3; ++a) g.push_back(tape.matmul(tang[a], w_phi));
    result.gradient = tape.concat_cols(g);
  }
  return result;
}

ad::Var radiance_forward(ad::Tape& tape, ad::ParamBinding& bind,
                         const FieldParams& params, const Mat& points,
                         const Mat& dirs, ad::Var normals, ad::Var features) {
  require(points.cols() == 3 && dirs.cols() == 3 && points.rows() == dirs.rows(),
          "radiance_forward: points/dirs must be matching n x 3");
  const RadianceNetworkConfig& cfg = params.radiance_config();
  const PosEncoding enc = cfg.encoding();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(enc.num_bands);

  const ad::Var enc_in = tape.constant(pos_encode_batch(points, enc, ones));
  const ad::Var sh_in = tape.constant(sh_encode_batch(dirs));
  ad::Var h = tape.concat_cols({enc_in, normals, features, sh_in});

  const auto& layers = params.radiance_layers();
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    h = tape.relu(tape.add_bias(tape.matmul(h, bind(layers[l].W)), bind(layers[l].b)));
  }
  const FieldParams::Layer out = layers.back();
  return tape.sigmoid(tape.add_bias(tape.matmul(h, bind(out.W)), bind(out.b)));
}

SdfEval sdf_eval(const Vec3& x, const FieldParams& params,
                 const Eigen::VectorXd& anneal_coeffs) {
  ad::Tape tape;
  ad::ParamBinding bind(tape, params.store());
  Mat pts(1, 3);
  pts.row(0) = x.transpose();
  SdfBatch b = sdf_forward(tape, bind, params, pts, anneal_coeffs, true);
  SdfEval out;
  out.value = tape.value(b.value)(0, 0);
  out.feature = tape.value(b.feature).row(0).transpose();
  out.gradient = tape.value(b.gradient).row(0).transpose();
  return out;
}

Eigen::VectorXd sdf_values(const FieldParams& params, const Mat& points,
                           const Eigen::VectorXd& anneal_coeffs) {
  ad::Tape tape;
  ad::ParamBinding bind(tape, params.store());
  SdfBatch b = sdf_forward(tape, bind, params, points, anneal_coeffs, false);
  return tape.value(b.value).col(0);
}

Vec3 radiance_eval(const Vec3& x, const Vec3& d, const Vec3& normal,
                   const Eigen::VectorXd& feature, const FieldParams& params) {
  require(std::abs(d.norm() - 1.0) <= 1e-6, "radiance_eval: non-unit direction");
  require(feature.size() == params.sdf_config().feature_dim,
          "radiance_eval: feature size mismatch");
  ad::Tape tape;
  ad::ParamBinding bind(tape, params.store());
  Mat pts(1, 3), dirs(1, 3);
  pts.row(0) = x.transpose();
  dirs.row(0) = d.transpose();
  ad::Var n = tape.constant(normal.transpose());
  ad::Var f = tape.constant(feature.transpose());
  ad::Var rgb = radiance_forward(tape, bind, params, pts, dirs, n, f);
  return tape.value(rgb).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'E', 'V', 'S', 'F', 'C', 'K', 'P', '\n'};
constexpr std::uint32_t kSchemaVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& what) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw RuntimeFailure("checkpoint truncated while reading " + what);
  return v;
}

void put_mat(std::ofstream& f, const Mat& m) {
  put<std::uint64_t>(f, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(f, static_cast<std::uint64_t>(m.cols()));
  // Row-major on disk.
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(f, m(i, j));
  }
}

Mat get_mat(std::ifstream& f) {
  const auto rows = get<std::uint64_t>(f, "tensor rows");
  const auto cols = get<std::uint64_t>(f, "tensor cols");
  if (rows > (1u << 24) || cols > (1u << 24)) {
    throw RuntimeFailure("checkpoint tensor dimensions implausible");
  }
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>(f, "tensor data");
  }
  return m;
}

}  // namespace

struct CheckpointCodec {
  static void save(const std::string& path, const FieldParams& fp,
                   long long iteration, std::uint64_t seed) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write checkpoint: " + path);
    f.write(kMagic, 8);
    put<std::uint32_t>(f, kSchemaVersion);
    put<std::uint64_t>(f, seed);
    put<std::int64_t>(f, iteration);

    const auto& s = fp.sdf_cfg_;
    put<std::int32_t>(f, s.hidden_layers);
    put<std::int32_t>(f, s.hidden_dim);
    put<std::int32_t>(f, s.feature_dim);
    put<std::int32_t>(f, s.pe_bands);
    put<std::int32_t>(f, s.skip_layer);
    put<double>(f, s.softplus_beta);
    put<double>(f, s.init_radius);
    const auto& r = fp.rad_cfg_;
    put<std::int32_t>(f, r.hidden_layers);
    put<std::int32_t>(f, r.hidden_dim);
    put<std::int32_t>(f, r.pe_bands);

    const auto& store = fp.store_;
    put<std::uint32_t>(f, static_cast<std::uint32_t>(store.size()));
    for (int id = 0; id < store.size(); ++id) {
      const std::string& name = store.name(id);
      put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_mat(f, store.value(id));
      put_mat(f, store.adam_m(id));
      put_mat(f, store.adam_v(id));
    }
    if (!f) throw RuntimeFailure("checkpoint write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) {
      throw RuntimeFailure("not a checkpoint file (bad magic): " + path);
    }
    const auto version = get<std::uint32_t>(f, "schema version");
    if (version != kSchemaVersion) {
      throw RuntimeFailure("unsupported checkpoint schema version " +
                           std::to_string(version) + " (expected " +
                           std::to_string(kSchemaVersion) + "): " + path);
    }
    const auto seed = get<std::uint64_t>(f, "seed");
    const auto iteration = get<std::int64_t>(f, "iteration");

    SdfNetworkConfig s;
    s.hidden_layers = get<std::int32_t>(f, "sdf layers");
    s.hidden_dim = get<std::int32_t>(f, "sdf dim");
    s.feature_dim = get<std::int32_t>(f, "feature dim");
    s.pe_bands = get<std::int32_t>(f, "sdf bands");
    s.skip_layer = get<std::int32_t>(f, "skip layer");
    s.softplus_beta = get<double>(f, "softplus beta");
    s.init_radius = get<double>(f, "init radius");
    RadianceNetworkConfig r;
    r.hidden_layers = get<std::int32_t>(f, "radiance layers");
    r.hidden_dim = get<std::int32_t>(f, "radiance dim");
    r.pe_bands = get<std::int32_t>(f, "radiance bands");

    FieldParams fp = FieldParams::create(s, r, seed);
    const auto n_params = get<std::uint32_t>(f, "parameter count");
    if (static_cast<int>(n_params) != fp.store_.size()) {
      throw RuntimeFailure("checkpoint parameter count mismatch: " + path);
    }
    for (std::uint32_t i = 0; i < n_params; ++i) {
      const auto name_len = get<std::uint32_t>(f, "name length");
      std::string name(name_len, '\0');
      f.read(name.data(), name_len);
      if (!f) throw RuntimeFailure("checkpoint truncated in names: " + path);
      const int id = fp.store_.find(name);
      if (id < 0) throw RuntimeFailure("unknown tensor '" + name + "' in " + path);
      Mat value = get_mat(f);
      Mat m = get_mat(f);
      Mat v = get_mat(f);
      if (value.rows() != fp.store_.value(id).rows() ||
          value.cols() != fp.store_.value(id).cols()) {
        throw RuntimeFailure("tensor shape mismatch for '" + name + "' in " + path);
      }
      fp.store_.value(id) = std::move(value);
      fp.store_.adam_m(id) = std::move(m);
      fp.store_.adam_v(id) = std::move(v);
    }
    return Checkpoint(std::move(fp), iteration, seed);
  }
};

void save_checkpoint(const std::string& path, const FieldParams& params,
                     long long iteration, std::uint64_t seed) {
  CheckpointCodec::save(path, params, iteration, seed);
}

Checkpoint load_checkpoint(const std::string& path) {
  return CheckpointCodec::load(path);
}

}  // namespace evsurf
