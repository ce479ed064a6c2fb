#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mopd/core.hpp"

namespace mopd::nn {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using BoolArr = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// A trainable tensor. Gradients are accumulated here by the training loop
// after each tape's backward pass; tapes themselves never mutate params.
template <class S>
struct Param {
  std::string name;
  MatX<S> value;
  MatX<S> grad;

  Param(std::string n, MatX<S> v) : name(std::move(n)), value(std::move(v)) {
    grad = MatX<S>::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <class S>
struct ParamStore {
  std::vector<std::shared_ptr<Param<S>>> params;

  std::shared_ptr<Param<S>> add(const std::string& name, MatX<S> value) {
    for (auto& p : params)
      if (p->name == name) throw Error(Err::invalid_input, "duplicate param name: " + name);
    params.push_back(std::make_shared<Param<S>>(name, std::move(value)));
    return params.back();
  }
  std::shared_ptr<Param<S>> find(const std::string& name) const {
    for (auto& p : params)
      if (p->name == name) return p;
    return nullptr;
  }
  void zero_grad() {
    for (auto& p : params) p->zero_grad();
  }
  size_t total_size() const {
    size_t n = 0;
    for (auto& p : params) n += size_t(p->size());
    return n;
  }
};

template <class S>
class Tape;

template <class S>
struct Node {
  MatX<S> value;
  MatX<S> grad;  // empty until touched during backward
  bool needs_grad = false;
  Param<S>* param = nullptr;
  std::function<void(Node<S>&)> backward;

  void ensure_grad() {
    if (grad.size() == 0) grad = MatX<S>::Zero(value.rows(), value.cols());
  }
};

// Value-semantic handle into a tape. Cheap to copy.
template <class S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, Node<S>* node) : tape_(tape), node_(node) {}

  const MatX<S>& value() const { return node_->value; }
  const MatX<S>& grad() const { return node_->grad; }
  Node<S>* node() const { return node_; }
  Tape<S>* tape() const { return tape_; }
  bool needs_grad() const { return node_ && node_->needs_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  Tape<S>* tape_ = nullptr;
  Node<S>* node_ = nullptr;
};

// Records one forward pass; backward replays it in reverse. One tape per
// sample; a tape is single-threaded but independent tapes may run on
// concurrent workers.
template <class S>
class Tape {
 public:
  Var<S> constant(MatX<S> v) {
    Node<S>* n = new_node();
    n->value = std::move(v);
    n->needs_grad = false;
    return {this, n};
  }

  Var<S> leaf(MatX<S> v) {
    Node<S>* n = new_node();
    n->value = std::move(v);
    n->needs_grad = true;
    return {this, n};
  }

  Var<S> param(Param<S>& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return {this, it->second};
    Node<S>* n = new_node();
    n->value = p.value;
    n->needs_grad = true;
    n->param = &p;
    param_nodes_.push_back(n);
    param_cache_.emplace(&p, n);
    return {this, n};
  }

  Var<S> make(MatX<S> value, bool needs_grad, std::function<void(Node<S>&)> backward) {
    Node<S>* n = new_node();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    if (needs_grad) n->backward = std::move(backward);
    return {this, n};
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(const Var<S>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
      throw Error(Err::invalid_input, "backward expects a scalar loss");
    loss.node()->ensure_grad();
    loss.node()->grad(0, 0) = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<S>& n = **it;
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(n);
    }
  }

  // Parameter leaves touched by this tape, in creation order.
  const std::vector<Node<S>*>& param_nodes() const { return param_nodes_; }

  // Adds this tape's parameter gradients into the owning Params.
  void accumulate_param_grads() {
    for (Node<S>* n : param_nodes_)
      if (n->grad.size() != 0) n->param->grad += n->grad;
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  Node<S>* new_node() {
    nodes_.push_back(std::make_unique<Node<S>>());
    return nodes_.back().get();
  }

  std::deque<std::unique_ptr<Node<S>>> nodes_;
  std::vector<Node<S>*> param_nodes_;
  std::unordered_map<Param<S>*, Node<S>*> param_cache_;
};

// Seeded parameter initializers.
template <class S>
MatX<S> randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  MatX<S> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = S(d(rng));
  return m;
}

template <class S>
MatX<S> xavier_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double fan_in,
                       double fan_out) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> d(-limit, limit);
  MatX<S> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = S(d(rng));
  return m;
}

}  // namespace mopd::nn
