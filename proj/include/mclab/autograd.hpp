#pragma once

// Minimal reverse-mode differentiation over dense float64 tensors. Feature
// maps use a [channels, depth, height, width] layout for a single sample.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace mclab::ag {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value once gradients flow
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void(Tensor&)> backward_fn;

  std::size_t numel() const { return value.size(); }
  void zero_grad();
  void ensure_grad();
};

std::size_t shape_numel(const std::vector<int>& shape);

TensorPtr constant(std::vector<int> shape, std::vector<double> values);
TensorPtr leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad);

/// Valid (unpadded) 3D convolution. x: [Ci,D,H,W], w: [Co,Ci,k,k,k], b: [Co].
TensorPtr conv3d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
TensorPtr silu(const TensorPtr& x);
/// Non-overlapping mean pooling with window and stride `factor`.
TensorPtr avg_pool3d(const TensorPtr& x, int factor);
TensorPtr upsample_nearest3d(const TensorPtr& x, int factor);
TensorPtr crop3d(const TensorPtr& x, std::array<int, 3> offset, std::array<int, 3> size);
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double factor);

/// Mean binary cross-entropy over voxels, computed from logits.
TensorPtr bce_with_logits(const TensorPtr& logits, std::span<const double> target);
/// alpha * sensitivity term + (1 - alpha) * specificity term on sigmoid outputs.
TensorPtr sens_spec(const TensorPtr& logits, std::span<const double> target, double alpha);
/// T^2-scaled mean Bernoulli KL(teacher_T || student_T); teacher is a constant.
TensorPtr kd_kl(const TensorPtr& student_logits, std::span<const double> teacher_logits, double temperature);

inline constexpr double kSensSpecEps = 1e-6;

/// Reverse sweep from a scalar node; gradients accumulate into every tensor
/// that requires them.
void backward(const TensorPtr& loss);

}  // namespace mclab::ag
