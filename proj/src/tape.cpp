#include <cmath>

#include "deepicp/autodiff.hpp"

namespace deepicp::ad {

int shape_size(const Shape& shape) {
  int n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<int>(values.size())) {
    throw std::invalid_argument("tensor value count does not match shape " +
                                shape_str(shape));
  }
  data_ = std::make_shared<TensorData>(TensorData{std::move(shape), std::move(values)});
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("value(): tensor is not scalar, shape " +
                                shape_str(shape()));
  }
  return data_->values[0];
}

bool Tensor::all_finite() const {
  for (double v : data_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tape::leaf(const Tensor& constant) {
  if (!constant.defined()) throw std::invalid_argument("leaf: undefined tensor");
  Tensor out;
  out.data_ = constant.storage();
  out.tape_ = this;
  Node node;
  node.value = out.data_;
  nodes_.push_back(std::move(node));
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  return out;
}

Tensor Tape::record(Tensor value, std::vector<int> parents, BackwardFn backward) {
  value.tape_ = this;
  Node node;
  node.parents = std::move(parents);
  node.backward = std::move(backward);
  node.value = value.storage();
  nodes_.push_back(std::move(node));
  value.node_ = static_cast<int>(nodes_.size()) - 1;
  return value;
}

std::vector<double>& Tape::grad(int node) {
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (!n.grad_alloc) {
    n.grad.assign(n.value->values.size(), 0.0);
    n.grad_alloc = true;
  }
  return n.grad;
}

bool Tape::has_grad(int node) const {
  return nodes_[static_cast<std::size_t>(node)].grad_alloc;
}

void Tape::backward(const Tensor& loss) {
  if (backward_run_) {
    throw std::logic_error("backward: tape already traversed; reset() first");
  }
  if (loss.tape() != this || loss.node() < 0) {
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  backward_run_ = true;
  grad(loss.node())[0] += 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.grad_alloc) continue;  // not on any path to the loss
    if (node.backward) node.backward(*this, node.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  param_nodes_.clear();
  backward_run_ = false;
}

void backward(Tape& tape, const Tensor& loss, ParameterStore& store) {
  tape.backward(loss);
  for (const auto& [name, node] : tape.param_nodes()) {
    if (!tape.has_grad(node)) continue;
    const std::vector<double>& g = tape.grad(node);
    std::vector<double>& acc = store.grad(name);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  }
}

Tensor ParameterStore::create(const std::string& name, const Shape& shape, int fan_in,
                              int fan_out, Rng& rng) {
  auto it = entries_.find(name);
  if (it != entries_.end()) return it->second.tensor;
  Tensor t(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  entries_[name] = Entry{t, true};
  grads_[name].assign(static_cast<std::size_t>(t.size()), 0.0);
  return t;
}

Tensor ParameterStore::create_zeros(const std::string& name, const Shape& shape) {
  return create_const(name, shape, 0.0, true);
}

Tensor ParameterStore::create_const(const std::string& name, const Shape& shape,
                                    double fill, bool trainable) {
  auto it = entries_.find(name);
  if (it != entries_.end()) return it->second.tensor;
  Tensor t(shape);
  for (double& v : t.values()) v = fill;
  entries_[name] = Entry{t, trainable};
  if (trainable) grads_[name].assign(static_cast<std::size_t>(t.size()), 0.0);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("parameter store: no entry named '" + name + "'");
  }
  return it->second.tensor;
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("parameter store: no entry named '" + name + "'");
  }
  return it->second;
}

Tensor ParameterStore::use(Tape* tape, const std::string& name) {
  const Entry& e = entries_.at(name);
  if (tape == nullptr || !e.trainable) return e.tensor;
  Tensor leaf = tape->leaf(e.tensor);
  tape->note_param(name, leaf.node());
  return leaf;
}

std::vector<double>& ParameterStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    throw std::out_of_range("parameter store: no gradient slot for '" + name + "'");
  }
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& [name, g] : grads_) std::fill(g.begin(), g.end(), 0.0);
}

}  // namespace deepicp::ad
