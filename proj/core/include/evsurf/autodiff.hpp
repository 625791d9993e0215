#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "evsurf/types.hpp"

namespace evsurf::ad {

using Mat = Eigen::MatrixXd;

/// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Named parameter tensors with gradient and Adam moment buffers.
class ParamStore {
 public:
  int add(const std::string& name, Mat value);
  int size() const { return static_cast<int>(values_.size()); }

  Mat& value(int id) { return values_[id]; }
  const Mat& value(int id) const { return values_[id]; }
  Mat& grad(int id) { return grads_[id]; }
  const Mat& grad(int id) const { return grads_[id]; }
  Mat& adam_m(int id) { return adam_m_[id]; }
  Mat& adam_v(int id) { return adam_v_[id]; }
  const Mat& adam_m(int id) const { return adam_m_[id]; }
  const Mat& adam_v(int id) const { return adam_v_[id]; }
  const std::string& name(int id) const { return names_[id]; }
  int find(const std::string& name) const;  // -1 if absent

  void zero_grads();
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
  std::vector<Mat> adam_m_;
  std::vector<Mat> adam_v_;
};

// Reverse-mode tape over dense matrices. Ops append nodes; backward() walks
// the tape once in reverse. Graphs are rebuilt per training step.
class Tape {
 public:
  Var constant(Mat v);
  Var scalar(double v);
  /// Leaf bound to a ParamStore slot; gradients flow to it.
  Var param(const ParamStore& store, int param_id);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);   // same shape, or either side 1x1
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var add_bias(Var m, Var row);  // m: n x k, row: 1 x k
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var neg(Var a);

  Var softplus(Var a, double beta);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var clamp_min(Var a, double c);

  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, int start, int len);
  Var slice_rows(Var a, int start, int len);

  Var sum(Var a);   // 1x1
  Var mean(Var a);  // 1x1
  Var row_norm(Var a);  // n x 1, L2 of each row

  /// Front-to-back compositing of one ray:
  ///   w_i = alpha_i prod_{j<i}(1 - alpha_j),
  ///   out = sum_i w_i c_i + (1 - sum_i w_i) bg.
  /// alphas: n x 1, colours: n x 3, returns 1 x 3.
  Var composite(Var alphas, Var colours, const Eigen::Vector3d& background);

  const Mat& value(Var v) const;
  /// Gradient of the last backward() root w.r.t. v (zero if unreached).
  Mat grad(Var v) const;

  /// Reverse pass from a scalar (1x1) root.
  void backward(Var root);

  /// Add accumulated leaf gradients into the store. Parameters the root does
  /// not depend on receive zero (grads are additive; call store.zero_grads()
  /// first for absolute values).
  void accumulate_param_grads(ParamStore& store) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    kLeaf, kMatMul, kAdd, kSub, kMul, kDiv, kAddBias, kScale, kAddConst,
    kNeg, kSoftplus, kSigmoid, kRelu, kSin, kCos, kExp, kLog, kSquare,
    kSqrt, kClampMin, kConcatCols, kConcatRows, kSliceCols, kSliceRows,
    kSum, kMean, kRowNorm, kComposite,
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    std::vector<int> list;
    double c0 = 0.0;
    int i0 = 0, i1 = 0;
    int param_id = -1;
    bool requires_grad = false;
    Mat value;
    Mat grad;
    Eigen::Vector3d bg = Eigen::Vector3d::Zero();
    Eigen::VectorXd aux;  // composite: transmittance cache
  };

  Var push(Node n);
  Var binary(Op op, Var a, Var b, double (*f)(double, double));
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.idx)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)]; }
  Mat& ensure_grad(int i);
  void backprop_node(int i);

  std::vector<Node> nodes_;
};

/// Lazily binds ParamStore slots into a tape, once per slot.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store)
      : tape_(&tape), store_(&store), vars_(store.size()) {}

  Var operator()(int param_id) {
    Var& v = vars_.at(static_cast<std::size_t>(param_id));
    if (!v.valid()) v = tape_->param(*store_, param_id);
    return v;
  }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::vector<Var> vars_;
};

}  // namespace evsurf::ad
