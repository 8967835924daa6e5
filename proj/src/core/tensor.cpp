#include "tensor.hpp"

#include <unordered_set>

namespace lab {

Tensor Tensor::from(Shape shape, std::vector<real> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  if (lab::numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  for (int d : shape)
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(lab::numel(shape)), real(0));
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, real x, bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(lab::numel(shape)), x);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(real x, bool requires_grad) { return full({1}, x, requires_grad); }

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, real lo, real hi, bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(lab::numel(shape)));
  for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::rand_trunc_normal(Shape shape, Rng& rng, real stddev, bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(lab::numel(shape)));
  for (auto& x : v) x = static_cast<real>(rng.truncated_normal(stddev));
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = n_->shape;
  n->value = n_->value;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward on undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));

  // post-order DFS, iterative to survive deep graphs
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.n->inputs.size()) {
      Node* c = f.n->inputs[f.next_child++].node();
      if (seen.insert(c).second) stack.push_back({c, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
}

void zero_grads(const std::vector<Tensor>& params) {
  for (const auto& p : params) p.zero_grad();
}

}  // namespace lab
