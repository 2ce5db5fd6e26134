#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sfa {

// Global numeric mode. Storage is always double so switching modes never
// reallocates; in f32 mode every stored value is kept on the binary32 grid,
// which is what the checkpoint format serializes. f64 mode exists for
// verification work such as gradient checks.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

double quantize(double v);
void quantize_buffer(std::span<double> vals);

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;    // empty until backward reaches this node
  bool requires_grad = false;
  uint64_t graph_id = 0;       // tape generation of the producing op, 0 for leaves
};

}  // namespace detail

long long shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Value-semantic handle to a shared node. Copying a Tensor aliases the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int ndim() const;
  int dim(int i) const;
  long long size() const;
  int rows() const;  // valid for 2-d tensors
  int cols() const;

  std::span<const double> data() const;
  // Mutable access to leaf storage (parameter init and optimizer updates).
  // Never call on a tensor participating in a live graph.
  std::span<double> raw_data();
  double item() const;
  double at2(int r, int c) const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  // Fresh leaf with the same shape and copied values, no grad state.
  Tensor detached_copy() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_output(std::vector<int> shape, std::vector<double> value,
                               bool any_input_requires_grad);
};

// ---- tape -----------------------------------------------------------------

bool grad_enabled();

// Disables graph recording for its lifetime (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Creates an op output. It requires grad (and may be recorded) only when some
// input requires grad and recording is enabled.
Tensor make_op_output(std::vector<int> shape, std::vector<double> value,
                      bool any_input_requires_grad);

// Appends a backward closure for `out` to the live tape. The closure reads
// out's grad and accumulates into the op's inputs. No-op when `out` does not
// require grad.
void record(const Tensor& out, std::function<void()> backward_fn);

// Reverse sweep over the tape in exact reverse creation order, seeding the
// scalar loss with gradient 1. Returns the number of closures executed.
// Consumes the graph; calling it twice on the same graph throws.
size_t backward(const Tensor& loss);

size_t tape_size();
void clear_tape();

// Accumulates `delta` into n's grad (allocating zeros on first touch).
// Skips nodes that do not require grad.
void accumulate_grad(const std::shared_ptr<detail::Node>& n,
                     std::span<const double> delta);

}  // namespace sfa
