#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mclab/autograd.hpp"
#include "mclab/volume.hpp"

namespace mclab {

/// Shape of the two-pathway patch network.
///
/// The normal pathway is a stack of valid k^3 convolutions taking the
/// input_size^3 patch down to output_size^3. The context pathway mean-pools a
/// centred region by context_factor, applies its own valid convolutions and is
/// upsampled back so it lands exactly on the output grid. Both are
/// concatenated and fused by two 1x1x1 layers into one tumour logit per voxel.
struct NetworkDescriptor {
  int input_size = 19;
  int output_size = 9;
  int kernel = 3;
  std::vector<int> normal_widths{4, 4, 6, 6, 8};
  int context_factor = 3;
  std::vector<int> context_widths{6};
  int fusion_width = 10;

  void validate() const;
  int context_region() const;  // side of the pooled input region
  int margin() const { return (input_size - output_size) / 2; }
  std::string canonical() const;
  std::array<std::uint8_t, 32> digest() const;  // SHA-256 of canonical()

  /// A few-hundred-parameter variant (9^3 in, 3^3 out) for finite-difference checks.
  static NetworkDescriptor compact();

  bool operator==(const NetworkDescriptor&) const = default;
};

/// Named parameter tensors in a fixed, architecture-defined order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<ag::TensorPtr> tensors;

  std::size_t total() const;
  const ag::TensorPtr& at(std::string_view name) const;
  ParamSet clone(bool requires_grad) const;
  void zero_grad();
  std::vector<double> flatten() const;
  std::vector<double> flatten_grad() const;
  void assign(std::span<const double> flat);
  void round_to_f32();
};

ParamSet init_params(const NetworkDescriptor& desc, std::uint64_t seed);

/// Logits for the central output_size^3 region. patch shape: [1, S, S, S].
ag::TensorPtr forward(const NetworkDescriptor& desc, const ParamSet& params, const ag::TensorPtr& patch);

ag::TensorPtr bce_loss(const ag::TensorPtr& logits, std::span<const double> target);
ag::TensorPtr sens_spec_loss(const ag::TensorPtr& logits, std::span<const double> target, double alpha);
ag::TensorPtr kd_loss(const ag::TensorPtr& student_logits, std::span<const double> teacher_logits, double temperature);

/// BCE + sensitivity-specificity, unweighted sum.
ag::TensorPtr seg_loss(const ag::TensorPtr& logits, std::span<const double> target, double alpha);

struct LwfOptions {
  double lambda = 0.1;
  double alpha = 0.5;
  double temperature = 2.0;
};

/// seg(M(x, theta), y) + lambda * KD(M(x, theta), M(x, theta0)). The teacher is
/// evaluated without gradient tracking; lambda == 0 skips it entirely.
ag::TensorPtr lwf_loss(const NetworkDescriptor& desc, const ParamSet& params, const ParamSet* teacher,
                       const ag::TensorPtr& patch, std::span<const double> target, const LwfOptions& opts);

struct OptimizerState {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

OptimizerState make_optimizer(const ParamSet& params, double lr, double weight_decay);

/// Adam with bias correction and decoupled weight decay, using the gradients
/// stored on the parameter tensors.
void adam_step(ParamSet& params, OptimizerState& state);

struct Inference {
  Volume mask;
  Volume probability;
};

/// Whole-volume prediction by tiling output regions with the given stride
/// (0 = output size). Overlapping tile probabilities are averaged; voxels with
/// probability >= threshold are foreground. Outside the grid counts as zero.
Inference sliding_window_infer(const NetworkDescriptor& desc, const ParamSet& params, const Volume& image,
                               double threshold = 0.5, int stride = 0);

/// Input patch of side desc.input_size whose output region starts at `origin`.
std::vector<double> extract_patch(const Volume& image, std::array<int, 3> out_origin, int input_size, int margin);

}  // namespace mclab
