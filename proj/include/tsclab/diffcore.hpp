#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsclab/rng.hpp"

namespace tsclab {

namespace detail {
struct TensorNode;
}

// Dense 2-D double tensor with reverse-mode gradient accumulation. Copying a
// Tensor copies a handle to shared storage; ops record the graph needed for
// backward() unless a NoGradGuard is active.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value, bool requires_grad = false);
  static Tensor from(std::vector<double> data, int rows, int cols,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(int rows, int cols, double lo, double hi, Rng& rng,
                        bool requires_grad = true);

  int rows() const;
  int cols() const;
  int size() const;
  bool defined() const { return node_ != nullptr; }

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // in-place parameter updates
  double operator()(int r, int c) const;
  double item() const;  // value of a 1x1 tensor

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws MissingGrad when absent
  void zero_grad();

  // Populates gradients of every requires_grad ancestor; accumulates when
  // called repeatedly without zero_grad(). Throws NonScalarLoss unless 1x1.
  void backward() const;

  Tensor detached() const;  // same values, no history, no grad requirement

  detail::TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node);
  std::shared_ptr<detail::TensorNode> node_;
  friend class OpBuilder;
};

// Suspends graph recording (forward values only) for its lifetime.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b a 1xC row / 1x1 scalar
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise; either side may be 1x1
Tensor div_scalar(const Tensor& a, const Tensor& s);  // s is 1x1
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor transpose(const Tensor& a);
Tensor row(const Tensor& a, int r);
Tensor at(const Tensor& a, int r, int c);
Tensor take_per_row(const Tensor& a, const std::vector<int>& cols);  // Nx1
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // column means, 1xC
Tensor mse(const Tensor& a, const Tensor& b);
Tensor l1_norm(const Tensor& a);
Tensor l2_norm(const Tensor& a);

// Adam with bias correction; step() applies the update from accumulated
// gradients and then zeroes them. beta1=0.9, beta2=0.999, eps=1e-8.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr);

  void step();  // throws MissingGrad if any parameter lacks a gradient
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long step_count() const { return steps_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_;
  long steps_ = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::vector<int> excluded;  // flat indices near non-differentiable points
};

// Central-difference comparison against reverse-mode gradients. Elements
// whose one-sided slopes disagree (kinks) are reported, not failed. The
// relative error denominator is max(|analytic|, |numeric|, 1e-8).
GradCheckResult gradcheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                          double eps = 1e-4);

// Same check over a list of live parameters perturbed in place; f() must
// rebuild its graph from current parameter values on every call.
GradCheckResult gradcheck_params(const std::function<Tensor()>& f,
                                 std::vector<Tensor> params, double eps = 1e-4);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors,
                  const std::map<std::string, std::string>& meta = {});

struct LoadedTensors {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
};
LoadedTensors load_tensors(const std::filesystem::path& path);

}  // namespace tsclab
