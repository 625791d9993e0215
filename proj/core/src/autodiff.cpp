#include "evsurf/autodiff.hpp"

#include <cmath>

namespace evsurf::ad {

int ParamStore::add(const std::string& name, Mat value) {
  require(find(name) < 0, "ParamStore: duplicate parameter name " + name);
  names_.push_back(name);
  grads_.push_back(Mat::Zero(value.rows(), value.cols()));
  adam_m_.push_back(Mat::Zero(value.rows(), value.cols()));
  adam_v_.push_back(Mat::Zero(value.rows(), value.cols()));
  values_.push_back(std::move(value));
  return static_cast<int>(values_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void ParamStore::zero_grads() {
  for (auto& g : grads_) g.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(const ParamStore& store, int param_id) {
  Node n;
  n.op = Op::kLeaf;
  n.value = store.value(param_id);
  n.param_id = param_id;
  n.requires_grad = true;
  return push(std::move(n));
}

namespace {

bool broadcast_compatible(const Mat& a, const Mat& b) {
  return (a.rows() == b.rows() && a.cols() == b.cols()) || a.size() == 1 ||
         b.size() == 1;
}

// Elementwise combine with 1x1 broadcast on either side.
template <typename F>
Mat apply_broadcast(const Mat& a, const Mat& b, F f) {
  if (a.size() == 1 && b.size() != 1) {
    return b.unaryExpr([&](double bv) { return f(a(0, 0), bv); });
  }
  if (b.size() == 1 && a.size() != 1) {
    return a.unaryExpr([&](double av) { return f(av, b(0, 0)); });
  }
  Mat out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, j) = f(a(i, j), b(i, j));
  }
  return out;
}

}  // namespace

Var Tape::binary(Op op, Var a, Var b, double (*f)(double, double)) {
  require(broadcast_compatible(node(a).value, node(b).value),
          "tape: binary op shape mismatch");
  Node n;
  n.op = op;
  n.a = a.idx;
  n.b = b.idx;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = apply_broadcast(node(a).value, node(b).value, f);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  return binary(Op::kAdd, a, b, [](double x, double y) { return x + y; });
}

Var Tape::sub(Var a, Var b) {
  return binary(Op::kSub, a, b, [](double x, double y) { return x - y; });
}

Var Tape::mul(Var a, Var b) {
  return binary(Op::kMul, a, b, [](double x, double y) { return x * y; });
}

Var Tape::div(Var a, Var b) {
  return binary(Op::kDiv, a, b, [](double x, double y) { return x / y; });
}

Var Tape::matmul(Var a, Var b) {
  require(node(a).value.cols() == node(b).value.rows(), "tape: matmul shape mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.idx;
  n.b = b.idx;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value.noalias() = node(a).value * node(b).value;
  return push(std::move(n));
}

Var Tape::add_bias(Var m, Var row) {
  require(node(row).value.rows() == 1 &&
              node(row).value.cols() == node(m).value.cols(),
          "tape: add_bias expects a 1 x k bias row");
  Node n;
  n.op = Op::kAddBias;
  n.a = m.idx;
  n.b = row.idx;
  n.requires_grad = node(m).requires_grad || node(row).requires_grad;
  n.value = node(m).value.rowwise() + node(row).value.row(0);
  return push(std::move(n));
}

#define EVSURF_UNARY(NAME, OPK, EXPR)                       \
  Var Tape::NAME(Var a) {                                   \
    Node n;                                                 \
    n.op = OPK;                                             \
    n.a = a.idx;                                            \
    n.requires_grad = node(a).requires_grad;                \
    const Mat& x = node(a).value;                           \
    n.value = (EXPR);                                       \
    return push(std::move(n));                              \
  }

EVSURF_UNARY(neg, Op::kNeg, -x)
EVSURF_UNARY(sigmoid, Op::kSigmoid,
             x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }))
EVSURF_UNARY(relu, Op::kRelu, x.cwiseMax(0.0))
EVSURF_UNARY(sin, Op::kSin, x.array().sin().matrix())
EVSURF_UNARY(cos, Op::kCos, x.array().cos().matrix())
EVSURF_UNARY(exp, Op::kExp, x.array().exp().matrix())
EVSURF_UNARY(log, Op::kLog, x.array().log().matrix())
EVSURF_UNARY(square, Op::kSquare, x.array().square().matrix())
EVSURF_UNARY(sqrt, Op::kSqrt, x.array().sqrt().matrix())

#undef EVSURF_UNARY

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a.idx;
  n.c0 = c;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value * c;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a.idx;
  n.c0 = c;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value.array() + c;
  return push(std::move(n));
}

Var Tape::softplus(Var a, double beta) {
  require(beta > 0.0, "tape: softplus beta must be positive");
  Node n;
  n.op = Op::kSoftplus;
  n.a = a.idx;
  n.c0 = beta;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value.unaryExpr([beta](double v) {
    // log(1 + exp(beta v)) / beta, stable for large |beta v|.
    double bv = beta * v;
    if (bv > 30.0) return v;
    return std::log1p(std::exp(bv)) / beta;
  });
  return push(std::move(n));
}

Var Tape::clamp_min(Var a, double c) {
  Node n;
  n.op = Op::kClampMin;
  n.a = a.idx;
  n.c0 = c;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value.cwiseMax(c);
  return push(std::move(n));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "tape: concat_cols of nothing");
  Eigen::Index rows = node(parts[0]).value.rows(), cols = 0;
  bool rg = false;
  for (Var p : parts) {
    require(node(p).value.rows() == rows, "tape: concat_cols row mismatch");
    cols += node(p).value.cols();
    rg = rg || node(p).requires_grad;
  }
  Node n;
  n.op = Op::kConcatCols;
  n.requires_grad = rg;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    n.list.push_back(p.idx);
    n.value.middleCols(at, node(p).value.cols()) = node(p).value;
    at += node(p).value.cols();
  }
  return push(std::move(n));
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "tape: concat_rows of nothing");
  Eigen::Index cols = node(parts[0]).value.cols(), rows = 0;
  bool rg = false;
  for (Var p : parts) {
    require(node(p).value.cols() == cols, "tape: concat_rows col mismatch");
    rows += node(p).value.rows();
    rg = rg || node(p).requires_grad;
  }
  Node n;
  n.op = Op::kConcatRows;
  n.requires_grad = rg;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    n.list.push_back(p.idx);
    n.value.middleRows(at, node(p).value.rows()) = node(p).value;
    at += node(p).value.rows();
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, int start, int len) {
  require(start >= 0 && len >= 0 && start + len <= node(a).value.cols(),
          "tape: slice_cols out of range");
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.idx;
  n.i0 = start;
  n.i1 = len;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value.middleCols(start, len);
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, int start, int len) {
  require(start >= 0 && len >= 0 && start + len <= node(a).value.rows(),
          "tape: slice_rows out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.idx;
  n.i0 = start;
  n.i1 = len;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value.middleRows(start, len);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.idx;
  n.requires_grad = node(a).requires_grad;
  n.value = Mat::Constant(1, 1, node(a).value.sum());
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  require(node(a).value.size() > 0, "tape: mean of empty");
  Node n;
  n.op = Op::kMean;
  n.a = a.idx;
  n.requires_grad = node(a).requires_grad;
  n.value = Mat::Constant(1, 1, node(a).value.mean());
  return push(std::move(n));
}

Var Tape::row_norm(Var a) {
  Node n;
  n.op = Op::kRowNorm;
  n.a = a.idx;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value.rowwise().norm();
  return push(std::move(n));
}

Var Tape::composite(Var alphas, Var colours, const Eigen::Vector3d& background) {
  const Mat& al = node(alphas).value;
  const Mat& co = node(colours).value;
  require(al.cols() == 1 && co.cols() == 3 && al.rows() == co.rows(),
          "tape: composite expects n x 1 alphas and n x 3 colours");
  Node n;
  n.op = Op::kComposite;
  n.a = alphas.idx;
  n.b = colours.idx;
  n.bg = background;
  n.requires_grad = node(alphas).requires_grad || node(colours).requires_grad;

  const Eigen::Index cnt = al.rows();
  n.aux.resize(cnt);  // transmittance before each sample
  Eigen::RowVector3d out = Eigen::RowVector3d::Zero();
  double trans = 1.0, wsum = 0.0;
  for (Eigen::Index i = 0; i < cnt; ++i) {
    n.aux[i] = trans;
    const double w = trans * al(i, 0);
    out += w * co.row(i);
    wsum += w;
    trans *= (1.0 - al(i, 0));
  }
  out += (1.0 - wsum) * background.transpose();
  n.value = out;
  return push(std::move(n));
}

const Mat& Tape::value(Var v) const { return node(v).value; }

Mat Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat& Tape::ensure_grad(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

// Reduce an elementwise gradient onto an input that may have been a 1x1
// broadcast.
void add_reduced(Mat& target, const Mat& g) {
  if (target.size() == 1 && g.size() != 1) {
    target(0, 0) += g.sum();
  } else {
    target += g;
  }
}

}  // namespace

void Tape::backprop_node(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  const Mat& g = n.grad;
  auto in_rg = [&](int j) {
    return j >= 0 && nodes_[static_cast<std::size_t>(j)].requires_grad;
  };
  auto val = [&](int j) -> const Mat& { return nodes_[static_cast<std::size_t>(j)].value; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul:
      if (in_rg(n.a)) ensure_grad(n.a).noalias() += g * val(n.b).transpose();
      if (in_rg(n.b)) ensure_grad(n.b).noalias() += val(n.a).transpose() * g;
      break;
    case Op::kAdd:
      if (in_rg(n.a)) add_reduced(ensure_grad(n.a), g);
      if (in_rg(n.b)) add_reduced(ensure_grad(n.b), g);
      break;
    case Op::kSub:
      if (in_rg(n.a)) add_reduced(ensure_grad(n.a), g);
      if (in_rg(n.b)) add_reduced(ensure_grad(n.b), -g);
      break;
    case Op::kMul: {
      if (in_rg(n.a)) {
        Mat ga = apply_broadcast(g, val(n.b), [](double x, double y) { return x * y; });
        add_reduced(ensure_grad(n.a), ga);
      }
      if (in_rg(n.b)) {
        Mat gb = apply_broadcast(g, val(n.a), [](double x, double y) { return x * y; });
        add_reduced(ensure_grad(n.b), gb);
      }
      break;
    }
    case Op::kDiv: {
      if (in_rg(n.a)) {
        Mat ga = apply_broadcast(g, val(n.b), [](double x, double y) { return x / y; });
        add_reduced(ensure_grad(n.a), ga);
      }
      if (in_rg(n.b)) {
        // d(a/b)/db = -a / b^2 = -value / b
        Mat t = apply_broadcast(n.value, val(n.b), [](double v, double y) { return -v / y; });
        Mat gb = apply_broadcast(g, t, [](double x, double y) { return x * y; });
        add_reduced(ensure_grad(n.b), gb);
      }
      break;
    }
    case Op::kAddBias:
      if (in_rg(n.a)) ensure_grad(n.a) += g;
      if (in_rg(n.b)) ensure_grad(n.b) += g.colwise().sum();
      break;
    case Op::kScale:
      if (in_rg(n.a)) ensure_grad(n.a) += g * n.c0;
      break;
    case Op::kAddConst:
      if (in_rg(n.a)) ensure_grad(n.a) += g;
      break;
    case Op::kNeg:
      if (in_rg(n.a)) ensure_grad(n.a) -= g;
      break;
    case Op::kSoftplus:
      if (in_rg(n.a)) {
        const double beta = n.c0;
        ensure_grad(n.a) += g.cwiseProduct(val(n.a).unaryExpr(
            [beta](double v) { return 1.0 / (1.0 + std::exp(-beta * v)); }));
      }
      break;
    case Op::kSigmoid:
      if (in_rg(n.a)) {
        ensure_grad(n.a) += g.cwiseProduct(
            n.value.unaryExpr([](double y) { return y * (1.0 - y); }));
      }
      break;
    case Op::kRelu:
      if (in_rg(n.a)) {
        ensure_grad(n.a) += g.cwiseProduct(val(n.a).unaryExpr(
            [](double v) { return v > 0.0 ? 1.0 : 0.0; }));
      }
      break;
    case Op::kSin:
      if (in_rg(n.a)) ensure_grad(n.a) += g.cwiseProduct(val(n.a).array().cos().matrix());
      break;
    case Op::kCos:
      if (in_rg(n.a)) ensure_grad(n.a) -= g.cwiseProduct(val(n.a).array().sin().matrix());
      break;
    case Op::kExp:
      if (in_rg(n.a)) ensure_grad(n.a) += g.cwiseProduct(n.value);
      break;
    case Op::kLog:
      if (in_rg(n.a)) ensure_grad(n.a) += g.cwiseQuotient(val(n.a));
      break;
    case Op::kSquare:
      if (in_rg(n.a)) ensure_grad(n.a) += 2.0 * g.cwiseProduct(val(n.a));
      break;
    case Op::kSqrt:
      if (in_rg(n.a)) ensure_grad(n.a) += 0.5 * g.cwiseQuotient(n.value);
      break;
    case Op::kClampMin:
      if (in_rg(n.a)) {
        const double c = n.c0;
        ensure_grad(n.a) += g.cwiseProduct(val(n.a).unaryExpr(
            [c](double v) { return v > c ? 1.0 : 0.0; }));
      }
      break;
    case Op::kConcatCols: {
      Eigen::Index at = 0;
      for (int p : n.list) {
        const Eigen::Index cols = val(p).cols();
        if (in_rg(p)) ensure_grad(p) += g.middleCols(at, cols);
        at += cols;
      }
      break;
    }
    case Op::kConcatRows: {
      Eigen::Index at = 0;
      for (int p : n.list) {
        const Eigen::Index rows = val(p).rows();
        if (in_rg(p)) ensure_grad(p) += g.middleRows(at, rows);
        at += rows;
      }
      break;
    }
    case Op::kSliceCols:
      if (in_rg(n.a)) ensure_grad(n.a).middleCols(n.i0, n.i1) += g;
      break;
    case Op::kSliceRows:
      if (in_rg(n.a)) ensure_grad(n.a).middleRows(n.i0, n.i1) += g;
      break;
    case Op::kSum:
      if (in_rg(n.a)) ensure_grad(n.a).array() += g(0, 0);
      break;
    case Op::kMean:
      if (in_rg(n.a)) ensure_grad(n.a).array() += g(0, 0) / double(val(n.a).size());
      break;
    case Op::kRowNorm:
      if (in_rg(n.a)) {
        Mat& ga = ensure_grad(n.a);
        const Mat& x = val(n.a);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          const double nv = std::max(n.value(r, 0), 1e-30);
          ga.row(r) += (g(r, 0) / nv) * x.row(r);
        }
      }
      break;
    case Op::kComposite: {
      const Mat& al = val(n.a);
      const Mat& co = val(n.b);
      const Eigen::Index cnt = al.rows();
      const Eigen::RowVector3d gout = g.row(0);
      if (in_rg(n.b)) {
        Mat& gc = ensure_grad(n.b);
        for (Eigen::Index i = 0; i < cnt; ++i) {
          gc.row(i) += (n.aux[i] * al(i, 0)) * gout;
        }
      }
      if (in_rg(n.a)) {
        Mat& gal = ensure_grad(n.a);
        // e_i = (c_i - bg) . gout ; dL/dalpha_m = T_m e_m
        //   - sum_{i>m} alpha_i e_i prod_{j<i, j != m} (1 - alpha_j)
        Eigen::VectorXd e(cnt);
        for (Eigen::Index i = 0; i < cnt; ++i) {
          e[i] = (co.row(i) - n.bg.transpose()).dot(gout);
        }
        for (Eigen::Index m = 0; m < cnt; ++m) {
          double acc = n.aux[m] * e[m];
          double skip_prod = n.aux[m];  // prod_{j<i, j != m} for i = m + 1
          for (Eigen::Index i = m + 1; i < cnt; ++i) {
            acc -= al(i, 0) * skip_prod * e[i];
            skip_prod *= (1.0 - al(i, 0));
          }
          gal(m, 0) += acc;
        }
      }
      break;
    }
  }
}

void Tape::backward(Var root) {
  require(root.valid() && root.idx < node_count(), "tape: invalid backward root");
  require(node(root).value.size() == 1, "tape: backward root must be scalar");
  require(node(root).requires_grad,
          "tape: root does not depend on any parameter");
  ensure_grad(root.idx)(0, 0) += 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    backprop_node(i);
  }
}

void Tape::accumulate_param_grads(ParamStore& store) const {
  for (const Node& n : nodes_) {
    if (n.param_id >= 0 && n.grad.size() != 0) {
      store.grad(n.param_id) += n.grad;
    }
  }
}

}  // namespace evsurf::ad
