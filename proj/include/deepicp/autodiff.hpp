#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepicp/rng.hpp"

namespace deepicp::ad {

using Shape = std::vector<int>;

int shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> values;
};

class Tape;

// Shaped numeric array. Copies are shallow (shared buffer). A tensor is
// either a constant (node() < 0) or the output of a recorded tape node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : data_(std::make_shared<TensorData>(
            TensorData{shape, std::vector<double>(shape_size(shape), 0.0)})) {}
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  int size() const { return static_cast<int>(data_->values.size()); }
  int dim(int i) const { return data_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(data_->shape.size()); }

  double* data() { return data_->values.data(); }
  const double* data() const { return data_->values.data(); }
  std::vector<double>& values() { return data_->values; }
  const std::vector<double>& values() const { return data_->values; }
  double operator[](int i) const { return data_->values[static_cast<std::size_t>(i)]; }

  // Scalar convenience accessor; throws unless size() == 1.
  double value() const;

  bool all_finite() const;

  const std::shared_ptr<TensorData>& storage() const { return data_; }

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool on_tape() const { return tape_ != nullptr && node_ >= 0; }

 private:
  friend class Tape;
  std::shared_ptr<TensorData> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Reverse-mode gradient tape. Nodes are recorded in forward (topological)
// order; backward() traverses them exactly once in reverse. A tape can be
// traversed only once unless reset.
class Tape {
 public:
  // Called with the node's output gradient; accumulates into parent grads.
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  // Wrap a constant tensor as a differentiable leaf (fresh node, shared buffer).
  Tensor leaf(const Tensor& constant);

  // Register an op output. `parents` may contain -1 entries for constant
  // inputs (ignored during traversal).
  Tensor record(Tensor value, std::vector<int> parents, BackwardFn backward);

  // Gradient buffer of a node; allocated zero-filled on first access.
  std::vector<double>& grad(int node);
  bool has_grad(int node) const;

  // Accumulate gradients of `loss` (scalar) into every reachable node.
  // Repeated backward without reset() throws.
  void backward(const Tensor& loss);

  void reset();

  std::size_t num_nodes() const { return nodes_.size(); }

  // Name -> leaf node bookkeeping for parameter gradient collection.
  void note_param(const std::string& name, int node) { param_nodes_.emplace_back(name, node); }
  const std::vector<std::pair<std::string, int>>& param_nodes() const { return param_nodes_; }

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn backward;
    std::shared_ptr<TensorData> value;  // keeps activations alive for backward
    std::vector<double> grad;
    bool grad_alloc = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> param_nodes_;
  bool backward_run_ = false;
};

// Named learnable tensors plus per-parameter gradient accumulators.
// Iteration order is lexicographic by name everywhere (std::map), which keeps
// optimizer updates and checkpoints deterministic.
class ParameterStore {
 public:
  struct Entry {
    Tensor tensor;
    bool trainable = true;
  };

  // Create-if-absent. Init is uniform in +-sqrt(6 / (fan_in + fan_out)).
  Tensor create(const std::string& name, const Shape& shape, int fan_in, int fan_out,
                Rng& rng);
  Tensor create_zeros(const std::string& name, const Shape& shape);
  Tensor create_const(const std::string& name, const Shape& shape, double fill,
                      bool trainable);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  Entry& entry(const std::string& name);

  // Fetch a parameter for a forward pass: recorded as a tape leaf when a tape
  // is given, as a plain constant otherwise.
  Tensor use(Tape* tape, const std::string& name);

  std::vector<double>& grad(const std::string& name);
  void zero_grads();

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::vector<double>> grads_;
};

// Run reverse-mode traversal from `loss` and add parameter gradients into the
// store's accumulators. `loss` must be scalar.
void backward(Tape& tape, const Tensor& loss, ParameterStore& store);

// When enabled, every recorded op output is checked for non-finite values
// (throws std::runtime_error naming the op). Meant for tests; off by default.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// ---- operator set (closed and minimal; shapes validated eagerly) ----------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor abs_val(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
// a / s where s is a scalar tensor (participates in the graph).
Tensor div_by_scalar(const Tensor& a, const Tensor& s);

Tensor matmul(const Tensor& a, const Tensor& b);       // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                     // [m,n] -> [n,m]
Tensor reshape(const Tensor& a, Shape shape);          // same element count
Tensor concat_cols(const Tensor& a, const Tensor& b);  // [m,ca] + [m,cb]
Tensor concat_rows(const std::vector<Tensor>& parts);  // same column count
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor repeat_rows(const Tensor& row, int n);          // [1,c] -> [n,c]
Tensor add_rowvec(const Tensor& a, const Tensor& v);   // [m,c] + [c] or [1,c]
Tensor sub_rowvec(const Tensor& a, const Tensor& v);
Tensor scale_rows(const Tensor& a, const Tensor& s);   // row i scaled by s[i]
Tensor slice_rows(const Tensor& a, int begin, int count);

Tensor sum_all(const Tensor& a);   // -> scalar
Tensor mean_all(const Tensor& a);  // -> scalar
Tensor sum_cols(const Tensor& a);  // [m,c] -> [c] (sum over rows)
// Per-channel sum over each block of `block` consecutive rows:
// [b*block, c] -> [b, c].
Tensor sum_blocks(const Tensor& a, int block);

Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor softmax(const Tensor& a);  // trailing axis; rows handled independently

// Per-channel max over each block of `block` consecutive rows:
// [b*block, c] -> [b, c]. Gradient routes to the first argmax row.
Tensor max_pool_blocks(const Tensor& a, int block);

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b);

enum class BnMode { kTrain, kInfer };

// Per-channel normalization over the row axis (eps 1e-5). In train mode the
// batch statistics are used and, when `running_*` buffers are given and the
// result is recorded on a tape, the running stats are updated in place with
// momentum 0.9. Requires n >= 2 rows in train mode.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnMode mode, std::vector<double>* running_mean,
                  std::vector<double>* running_var, bool update_running);

// Inverted dropout; identity unless `train`. The mask is drawn from `rng`.
Tensor dropout(const Tensor& x, double keep_prob, bool train, Rng& rng);

// volume [D,H,W,Cin] * kernels [Cout,3,3,3,Cin] + bias [Cout], stride 1,
// zero same-padding -> [D,H,W,Cout].
Tensor conv3d(const Tensor& volume, const Tensor& kernels, const Tensor& bias);
// seq [L,Cin] * kernels [Cout,3,Cin] + bias [Cout] -> [L,Cout].
Tensor conv1d(const Tensor& seq, const Tensor& kernels, const Tensor& bias);

struct Svd3 {
  Tensor u;  // [3,3]
  Tensor s;  // [3], descending, non-negative
  Tensor v;  // [3,3]
};

// Differentiable SVD of a 3x3 matrix, M = U diag(S) V^T. The backward pass
// uses the antisymmetric-coefficient formula with denominators
// s_j^2 - s_i^2 safeguarded by sign(d) / max(|d|, 1e-8).
Svd3 svd3(const Tensor& m);

// ---- checkpoint file -------------------------------------------------------

// Versioned binary: magic "DICP", u32 version, then per entry (u32 name
// length, name bytes, u32 rank, u32 extents..., f64 little-endian values),
// in name order. Includes non-trainable buffers.
void save_checkpoint(const ParameterStore& store, const std::string& path);
void load_checkpoint(ParameterStore& store, const std::string& path);

}  // namespace deepicp::ad
