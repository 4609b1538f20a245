#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "conformer/tensor.hpp"

namespace conformer::num {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool defined() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
};

// Define-by-run reverse-mode tape (Wengert list). Confined to one thread;
// distinct tapes may run on distinct threads concurrently.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor(),
                          recording_ && requires_grad, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Record a computed value. `backward` receives the tape and the node id of
  // the recorded value; it reads grad(self) and accumulates into parents via
  // grad_buffer(). Only attached when some parent needs gradients.
  Var record(Tensor value, std::initializer_list<Var> parents,
             std::function<void(Tape&, int)> backward) {
    bool needs = false;
    if (recording_) {
      for (const Var& p : parents) {
        if (p.tape != this)
          throw std::invalid_argument("tape: op mixes vars from another tape");
        if (nodes_[static_cast<size_t>(p.id)].needs) needs = true;
      }
    }
    nodes_.push_back(Node{std::move(value), Tensor(), needs,
                          needs ? std::move(backward) : nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

  // Gradient of a node, or nullptr when none was accumulated.
  const Tensor* grad(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.grad.defined() ? &n.grad : nullptr;
  }

  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs; }

  // Lazily allocated zero-initialized gradient buffer for a node.
  Tensor& grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
  }

  Tensor& grad_buffer(Var v) { return grad_buffer(v.id); }

  // Reverse sweep from a scalar loss. Creation order is a valid topological
  // order for a define-by-run tape, so we just walk it backwards.
  void backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: foreign var");
    Node& ln = nodes_[static_cast<size_t>(loss.id)];
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    if (!recording_)
      throw std::logic_error("backward: tape was created non-recording");
    grad_buffer(loss.id).mutable_data()[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back && n.grad.defined()) n.back(*this, i);
    }
  }

  // Drop all nodes (and thus every intermediate value reference).
  void clear() { nodes_.clear(); }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs;
    std::function<void(Tape&, int)> back;
  };
  // deque: recording new nodes must not invalidate value references held
  // by composite ops that are still mid-construction
  std::deque<Node> nodes_;
  bool recording_;
};

inline const Tensor& Var::val() const { return tape->val(*this); }

}  // namespace conformer::num
