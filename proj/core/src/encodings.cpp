#include "evsurf/encodings.hpp"

#include <cmath>

namespace evsurf {

double anneal_coeff(int k, long long n, const AnnealSchedule& sched) {
  require(sched.valid(), "anneal_coeff: invalid schedule");
  if (k < 0) return 1.0;
  const double alpha = double(sched.n_fmax - sched.n_fmin) *
                       (double(n) / double(sched.n_anneal));
  const double arg = std::clamp(alpha - double(k) + double(sched.n_fmin), 0.0, 1.0);
  return 0.5 * (1.0 - std::cos(M_PI * arg));
}

Eigen::VectorXd anneal_coeffs(int num_bands, long long n, const AnnealSchedule& sched) {
  Eigen::VectorXd out(num_bands);
  for (int k = 0; k < num_bands; ++k) out[k] = anneal_coeff(k, n, sched);
  return out;
}

Eigen::VectorXd pos_encode(const Vec3& x, const PosEncoding& enc,
                           const Eigen::VectorXd& coeffs) {
  Mat pts(1, 3);
  pts.row(0) = x.transpose();
  return pos_encode_batch(pts, enc, coeffs).row(0).transpose();
}

Mat pos_encode_batch(const Mat& points, const PosEncoding& enc,
                     const Eigen::VectorXd& coeffs) {
  require(points.cols() == 3, "pos_encode: points must be N x 3");
  require(coeffs.size() == enc.num_bands,
          "pos_encode: coefficient/band count mismatch");
  const auto n = points.rows();
  Mat out(n, enc.output_dim());
  int col = 0;
  if (enc.include_input) {
    out.leftCols<3>() = points;
    col = 3;
  }
  for (int k = 0; k < enc.num_bands; ++k) {
    const double freq = std::ldexp(M_PI, k);  // 2^k * pi
    const double beta = coeffs[k];
    Mat scaled = points * freq;
    out.middleCols(col, 3) = beta * scaled.array().sin().matrix();
    out.middleCols(col + 3, 3) = beta * scaled.array().cos().matrix();
    col += 6;
  }
  return out;
}

Mat pos_encode_dbatch(const Mat& points, const PosEncoding& enc,
                      const Eigen::VectorXd& coeffs, int axis) {
  require(axis >= 0 && axis < 3, "pos_encode_dbatch: axis out of range");
  require(coeffs.size() == enc.num_bands,
          "pos_encode: coefficient/band count mismatch");
  const auto n = points.rows();
  Mat out = Mat::Zero(n, enc.output_dim());
  int col = 0;
  if (enc.include_input) {
    out.col(axis).setOnes();
    col = 3;
  }
  for (int k = 0; k < enc.num_bands; ++k) {
    const double freq = std::ldexp(M_PI, k);
    const double beta = coeffs[k];
    Eigen::VectorXd scaled = points.col(axis) * freq;
    out.col(col + axis) = (beta * freq) * scaled.array().cos().matrix();
    out.col(col + 3 + axis) = (-beta * freq) * scaled.array().sin().matrix();
    col += 6;
  }
  return out;
}

namespace {

// Real spherical harmonics via the associated-Legendre recurrences, with the
// (1 - z^2)^{m/2} factor folded into the Cartesian sin/cos terms:
//   A_m + i B_m = (x + i y)^m,   ptilde_l^m(z) = P_l^m(z) / sin^m(theta).
// Condon-Shortley phase omitted: ptilde_m^m = (2m-1)!! > 0.
void sh_eval_deg4(double x, double y, double z, double* out) {
  constexpr int kDegree = 4;  // bands l = 0..3
  double A[kDegree], B[kDegree];
  A[0] = 1.0;
  B[0] = 0.0;
  for (int m = 1; m < kDegree; ++m) {
    A[m] = x * A[m - 1] - y * B[m - 1];
    B[m] = x * B[m - 1] + y * A[m - 1];
  }

  // ptilde[l][m] for 0 <= m <= l <= 3.
  double pt[kDegree][kDegree];
  for (int m = 0; m < kDegree; ++m) {
    double dfact = 1.0;  // (2m - 1)!!
    for (int i = 3; i <= 2 * m - 1; i += 2) dfact *= i;
    pt[m][m] = dfact;
    if (m + 1 < kDegree) pt[m + 1][m] = z * (2 * m + 1) * pt[m][m];
    for (int l = m + 2; l < kDegree; ++l) {
      pt[l][m] = ((2 * l - 1) * z * pt[l - 1][m] - (l + m - 1) * pt[l - 2][m]) /
                 double(l - m);
    }
  }

  int idx = 0;
  for (int l = 0; l < kDegree; ++l) {
    for (int m = -l; m <= l; ++m, ++idx) {
      const int am = std::abs(m);
      // K_l^m = sqrt((2l+1)/(4 pi) * (l-|m|)!/(l+|m|)!)
      double ratio = 1.0;
      for (int i = l - am + 1; i <= l + am; ++i) ratio *= i;
      const double K = std::sqrt((2 * l + 1) / (4.0 * M_PI) / ratio);
      if (m == 0) {
        out[idx] = K * pt[l][0];
      } else if (m > 0) {
        out[idx] = std::sqrt(2.0) * K * A[am] * pt[l][am];
      } else {
        out[idx] = std::sqrt(2.0) * K * B[am] * pt[l][am];
      }
    }
  }
}

}  // namespace

Eigen::Matrix<double, 16, 1> sh_encode(const Vec3& d) {
  require(std::abs(d.norm() - 1.0) <= 1e-6, "sh_encode: direction must be unit length");
  Eigen::Matrix<double, 16, 1> out;
  sh_eval_deg4(d.x(), d.y(), d.z(), out.data());
  return out;
}

Mat sh_encode_batch(const Mat& dirs) {
  require(dirs.cols() == 3, "sh_encode_batch: dirs must be N x 3");
  Mat out(dirs.rows(), 16);
  double buf[16];
  for (Eigen::Index i = 0; i < dirs.rows(); ++i) {
    require(std::abs(dirs.row(i).norm() - 1.0) <= 1e-6,
            "sh_encode: direction must be unit length");
    sh_eval_deg4(dirs(i, 0), dirs(i, 1), dirs(i, 2), buf);
    for (int j = 0; j < 16; ++j) out(i, j) = buf[j];
  }
  return out;
}

}  // namespace evsurf
