// Reverse-mode autodiff tensor. Define-by-run: every op builds a node that
// remembers its inputs and how to push gradients back through itself.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace lab {

class Tensor;

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated lazily; empty means "all zero"
  bool requires_grad = false;
  std::string name;                     // parameter name, empty for intermediates
  std::vector<Tensor> inputs;           // parents in the graph
  std::function<void(Node&)> backward;  // pulls this->grad into inputs' grads

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<real> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real v, bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);
  static Tensor rand_uniform(Shape shape, Rng& rng, real lo, real hi, bool requires_grad = false);
  // truncated normal (|z| <= 2 sigma), the weight-init distribution
  static Tensor rand_trunc_normal(Shape shape, Rng& rng, real stddev, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  Node* node() const { return n_.get(); }
  const Shape& shape() const { return n_->shape; }
  std::int64_t numel() const { return n_->numel(); }
  std::vector<real>& value() const { return n_->value; }
  std::vector<real>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  const std::string& name() const { return n_->name; }
  void set_name(std::string s) { n_->name = std::move(s); }

  real item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return n_->value[0];
  }

  // value copy with no graph attachment
  Tensor detach() const;

  void zero_grad() const { n_->grad.assign(n_->value.size(), real(0)); }

 private:
  std::shared_ptr<Node> n_;
};

// Reverse sweep from a scalar loss. Accumulates into .grad of every node
// reachable from `loss` (call zero_grad on parameters between steps).
void backward(const Tensor& loss);

void zero_grads(const std::vector<Tensor>& params);

}  // namespace lab
