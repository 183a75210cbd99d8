#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "core/common.hpp"

namespace voxpipe::nn {

// Dense tensor layout is [N, C, D, H, W] with D=z, H=y, W=x and x
// fastest in memory. Lower-rank tensors drop leading axes.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) : d_(dims) {}
  explicit Shape(std::vector<int64_t> dims) : d_(std::move(dims)) {}

  int ndim() const { return static_cast<int>(d_.size()); }
  int64_t dim(int i) const {
    int n = ndim();
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw ShapeError("shape axis out of range");
    return d_[static_cast<size_t>(i)];
  }
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : d_) n *= d;
    return n;
  }
  bool operator==(const Shape& o) const { return d_ == o.d_; }
  bool operator!=(const Shape& o) const { return d_ != o.d_; }
  std::string str() const {
    std::string s = "[";
    for (size_t i = 0; i < d_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(d_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<int64_t> d_;
};

template <typename T>
class TensorT;

// A producer node holds its inputs (keeping the upstream graph alive)
// and scatters the output gradient into them.
template <typename T>
struct NodeT {
  virtual ~NodeT() = default;
  virtual void backward(const TensorT<T>& out) = 0;
  std::vector<TensorT<T>> inputs;
  const char* name = "node";
};

// Default-initializing allocator: resize() leaves trivial elements
// uninitialized, so buffers that are fully overwritten skip a memset.
template <typename T>
struct UninitAlloc : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = UninitAlloc<U>;
  };
  template <typename U>
  void construct(U* p) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

template <typename T>
using Buffer = std::vector<T, UninitAlloc<T>>;

template <typename T>
struct TensorImplT {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until touched
  bool requires_grad = false;
  std::shared_ptr<NodeT<T>> producer;
};

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(const Shape& s, bool requires_grad = false) {
    return filled(s, T(0), requires_grad);
  }
  static TensorT filled(const Shape& s, T value, bool requires_grad = false) {
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->shape = s;
    t.impl_->data.assign(static_cast<size_t>(s.numel()), value);
    t.impl_->requires_grad = requires_grad;
    return t;
  }
  // Contents are indeterminate; only for outputs every element of which
  // is written before being read.
  static TensorT uninit(const Shape& s, bool requires_grad = false) {
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->shape = s;
    t.impl_->data.resize(static_cast<size_t>(s.numel()));
    t.impl_->requires_grad = requires_grad;
    return t;
  }
  static TensorT from_vector(const Shape& s, std::vector<T> v, bool requires_grad = false) {
    if (static_cast<int64_t>(v.size()) != s.numel()) {
      throw ShapeError("data size does not match shape " + s.str());
    }
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->shape = s;
    t.impl_->data.assign(v.begin(), v.end());
    t.impl_->requires_grad = requires_grad;
    return t;
  }
  static TensorT scalar(T value, bool requires_grad = false) {
    return filled(Shape{1}, value, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t numel() const { return impl_->shape.numel(); }

  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }
  Buffer<T>& vec() { return impl_->data; }
  const Buffer<T>& vec() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool grad_allocated() const { return !impl_->grad.empty(); }
  T* grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad.data();
  }
  const T* grad_data() const { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  std::shared_ptr<NodeT<T>> producer() const { return impl_->producer; }
  void set_producer(std::shared_ptr<NodeT<T>> n) { impl_->producer = std::move(n); }

  // Same values, no history. Data is copied so the two tensors evolve
  // independently.
  TensorT detach() const {
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
    return impl_->data[0];
  }

  TensorImplT<T>* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImplT<T>> impl_;
};

// Reverse-mode sweep from a scalar loss. Node order is a deterministic
// DFS post-order, so gradient accumulation order never varies run to run.
template <typename T>
void backward(const TensorT<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward expects a defined scalar loss");
  }
  std::vector<TensorT<T>> order;
  std::unordered_set<const TensorImplT<T>*> done;
  std::unordered_set<const TensorImplT<T>*> on_stack;

  struct Frame {
    TensorT<T> t;
    size_t next_input = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({loss});
  on_stack.insert(loss.impl());
  while (!stack.empty()) {
    Frame& f = stack.back();
    auto node = f.t.producer();
    if (!node || f.next_input >= node->inputs.size()) {
      done.insert(f.t.impl());
      on_stack.erase(f.t.impl());
      if (node) order.push_back(f.t);
      stack.pop_back();
      continue;
    }
    TensorT<T> in = node->inputs[f.next_input++];
    if (done.count(in.impl())) continue;
    if (on_stack.count(in.impl())) throw VoxError("autodiff graph has a cycle");
    if (in.producer()) {
      on_stack.insert(in.impl());
      stack.push_back({in});
    } else {
      done.insert(in.impl());
    }
  }

  TensorT<T> seed = loss;
  seed.grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!it->grad_allocated()) continue;  // no downstream contribution
    it->producer()->backward(*it);
  }
}

using Tensor = TensorT<float>;

}  // namespace voxpipe::nn
