// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lslab/rng.hpp"

namespace lslab {

// Storage node behind a Tensor handle. Values are row-major doubles; the
// gradient buffer is allocated lazily and zero-initialized.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value handle over a shared node. Tensors are immutable after construction
// except through the optimizer update and mask re-application, both of which
// operate on the raw buffers between tape steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  // Zero-allocates on first access so untouched leaves read as zero gradient.
  std::span<double> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  double item() const;
  double at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * node_->shape[1] + c]; }

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;
};

// Records primitive operations in execution order (hence topological) and
// replays their backward closures in reverse. One tape per training run.
class Tape {
 public:
  // Elementwise / structural primitives. Every op validates shapes and, when
  // check_finite is on, rejects non-finite outputs.
  Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
  Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor add_row(const Tensor& m, const Tensor& row);  // broadcast row vector
  Tensor mul(const Tensor& a, const Tensor& b);        // Hadamard
  Tensor scale(const Tensor& a, double c);
  Tensor scale_by(const Tensor& a, const Tensor& s);   // s: 1-element tensor
  Tensor select(const Tensor& v, int index);           // 1-element slice of 1-d
  Tensor relu(const Tensor& a);
  Tensor softmax(const Tensor& v);                     // 1-d, max-stabilized
  // Row softmax with an optional additive (non-differentiated) mask.
  Tensor softmax_rows(const Tensor& m, const Tensor* add_mask = nullptr);
  Tensor layer_norm_rows(const Tensor& m, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5);
  Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
  Tensor slice_rows(const Tensor& m, int r0, int n);
  Tensor slice_cols(const Tensor& m, int c0, int n);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  // Mean negative log-likelihood over non-pad positions (zero if all pads).
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                       int pad_id);

  // Seeds d(loss)/d(loss) = 1 and replays the tape once in reverse. loss must
  // be a scalar produced by this tape.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return ops_.size(); }

  bool check_finite = true;

 private:
  struct Op {
    std::function<void()> backward;
  };
  std::vector<Op> ops_;

  void record(std::function<void()> fn) { ops_.push_back({std::move(fn)}); }
  Tensor make_output(std::vector<int> shape, bool requires_grad);
  void guard_finite(const Tensor& t, const char* op);
};

// Max relative error between analytic gradients (via Tape::backward) and
// central finite differences of f over all parameter coordinates.
// f must be a deterministic function of params evaluated on the given tape.
using TensorFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;
double finite_difference_check(const TensorFn& f, std::vector<Tensor> params,
                               double eps);

}  // namespace lslab
