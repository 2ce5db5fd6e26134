#include "sfa/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <utility>

namespace sfa {

namespace {

Precision g_precision = Precision::f32;
bool g_grad_enabled = true;

struct TapeEntry {
  std::shared_ptr<detail::Node> out;
  std::function<void()> fn;
};

struct Tape {
  std::vector<TapeEntry> entries;
  uint64_t generation = 1;
};

Tape& tape() {
  static Tape t;
  return t;
}

}  // namespace

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

double quantize(double v) {
  return g_precision == Precision::f32 ? double(float(v)) : v;
}

void quantize_buffer(std::span<double> vals) {
  if (g_precision != Precision::f32) return;
  for (double& v : vals) v = double(float(v));
}

long long shape_size(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

static void check_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
  for (int d : shape)
    if (d <= 0) throw std::invalid_argument("tensor shape must be positive, got " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<detail::Node>();
  n->value.assign(size_t(shape_size(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  double q = quantize(v);
  for (double& x : t.node_->value) x = q;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values,
                         bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != (long long)values.size())
    throw std::invalid_argument("from_data: shape " + shape_str(shape) + " expects " +
                                std::to_string(shape_size(shape)) + " values, got " +
                                std::to_string(values.size()));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  quantize_buffer(n->value);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

const std::vector<int>& Tensor::shape() const {
  if (!node_) throw std::logic_error("shape() on undefined tensor");
  return node_->shape;
}

int Tensor::ndim() const { return int(shape().size()); }

int Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0 || i >= int(s.size()))
    throw std::out_of_range("dim index " + std::to_string(i) + " for shape " + shape_str(s));
  return s[size_t(i)];
}

long long Tensor::size() const { return shape_size(shape()); }

int Tensor::rows() const {
  if (ndim() != 2) throw std::logic_error("rows() needs a 2-d tensor, got " + shape_str(shape()));
  return shape()[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw std::logic_error("cols() needs a 2-d tensor, got " + shape_str(shape()));
  return shape()[1];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw std::logic_error("data() on undefined tensor");
  return node_->value;
}

std::span<double> Tensor::raw_data() {
  if (!node_) throw std::logic_error("raw_data() on undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() needs a single-element tensor, got " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at2(int r, int c) const {
  if (ndim() != 2) throw std::logic_error("at2() needs a 2-d tensor");
  return node_->value[size_t(r) * size_t(cols()) + size_t(c)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  if (!node_) throw std::logic_error("set_requires_grad() on undefined tensor");
  node_->requires_grad = rg;
  if (!rg) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("grad() on tensor without gradient");
  return node_->grad;
}

void Tensor::clear_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detached_copy() const {
  if (!node_) throw std::logic_error("detached_copy() on undefined tensor");
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_op_output(std::vector<int> shape, std::vector<double> value,
                      bool any_input_requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != (long long)value.size())
    throw std::logic_error("op output size mismatch for shape " + shape_str(shape));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = any_input_requires_grad && g_grad_enabled;
  quantize_buffer(n->value);
  return Tensor(std::move(n));
}

void record(const Tensor& out, std::function<void()> backward_fn) {
  if (!out.requires_grad()) return;
  auto& t = tape();
  out.node()->graph_id = t.generation;
  t.entries.push_back({out.node(), std::move(backward_fn)});
}

size_t backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a single value, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return 0;  // graph of frozen/constant inputs only

  auto& t = tape();
  auto loss_node = loss.node();
  if (loss_node->graph_id != 0 && loss_node->graph_id != t.generation)
    throw std::logic_error("backward: graph already consumed");

  loss_node->grad.assign(1, 1.0);
  size_t executed = 0;
  for (auto it = t.entries.rbegin(); it != t.entries.rend(); ++it) {
    if (it->out->grad.empty()) continue;  // not reachable from the loss
    it->fn();
    ++executed;
  }
  t.entries.clear();
  ++t.generation;
  return executed;
}

size_t tape_size() { return tape().entries.size(); }

void clear_tape() {
  auto& t = tape();
  t.entries.clear();
  ++t.generation;
}

void accumulate_grad(const std::shared_ptr<detail::Node>& n, std::span<const double> delta) {
  if (!n->requires_grad) return;
  if (delta.size() != n->value.size())
    throw std::logic_error("gradient size mismatch: " + std::to_string(delta.size()) +
                           " vs " + std::to_string(n->value.size()));
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  for (size_t i = 0; i < delta.size(); ++i) n->grad[i] += delta[i];
  quantize_buffer(n->grad);
}

}  // namespace sfa
