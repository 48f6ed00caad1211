#include "mclab/tinynet.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "mclab/error.hpp"

namespace mclab {

// ---------------------------------------------------------------------------
// Descriptor

int NetworkDescriptor::context_region() const {
  const int coarse_out = output_size / context_factor;
  return (coarse_out + static_cast<int>(context_widths.size()) * (kernel - 1)) * context_factor;
}

void NetworkDescriptor::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ShapeMismatch, "network descriptor: " + what); };
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be odd and positive");
  if (normal_widths.empty()) fail("normal pathway needs at least one layer");
  if (input_size != output_size + static_cast<int>(normal_widths.size()) * (kernel - 1)) {
    fail("input_size must equal output_size + layers * (kernel - 1)");
  }
  if (context_factor < 1 || output_size % context_factor != 0) fail("output_size must be divisible by context_factor");
  const int region = context_region();
  if (region > input_size || (input_size - region) % 2 != 0) fail("context region does not fit centred in the input");
  if (fusion_width < 1) fail("fusion_width must be positive");
  for (int w : normal_widths)
    if (w < 1) fail("widths must be positive");
  for (int w : context_widths)
    if (w < 1) fail("widths must be positive");
}

std::string NetworkDescriptor::canonical() const {
  std::ostringstream os;
  os << "mclab-tinynet-v1;in=" << input_size << ";out=" << output_size << ";k=" << kernel << ";normal=";
  for (std::size_t i = 0; i < normal_widths.size(); ++i) os << (i ? "," : "") << normal_widths[i];
  os << ";ctx_factor=" << context_factor << ";ctx=";
  for (std::size_t i = 0; i < context_widths.size(); ++i) os << (i ? "," : "") << context_widths[i];
  os << ";fuse=" << fusion_width << ";act=silu";
  return os.str();
}

std::array<std::uint8_t, 32> NetworkDescriptor::digest() const {
  const std::string s = canonical();
  std::array<std::uint8_t, 32> out{};
  SHA256(reinterpret_cast<const unsigned char*>(s.data()), s.size(), out.data());
  return out;
}

NetworkDescriptor NetworkDescriptor::compact() {
  NetworkDescriptor d;
  d.input_size = 9;
  d.output_size = 3;
  d.normal_widths = {3, 3, 3};
  d.context_widths = {2};
  d.fusion_width = 4;
  return d;
}

// ---------------------------------------------------------------------------
// Parameters

std::size_t ParamSet::total() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t->numel();
  return n;
}

const ag::TensorPtr& ParamSet::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw Error(ErrorCode::ShapeMismatch, "no parameter named " + std::string(name));
}

ParamSet ParamSet::clone(bool requires_grad) const {
  ParamSet p;
  p.names = names;
  for (const auto& t : tensors) p.tensors.push_back(ag::leaf(t->shape, t->value, requires_grad));
  return p;
}

void ParamSet::zero_grad() {
  for (auto& t : tensors) t->zero_grad();
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  out.reserve(total());
  for (const auto& t : tensors) out.insert(out.end(), t->value.begin(), t->value.end());
  return out;
}

std::vector<double> ParamSet::flatten_grad() const {
  std::vector<double> out;
  out.reserve(total());
  for (const auto& t : tensors) {
    if (t->grad.size() == t->value.size()) {
      out.insert(out.end(), t->grad.begin(), t->grad.end());
    } else {
      out.insert(out.end(), t->numel(), 0.0);
    }
  }
  return out;
}

void ParamSet::assign(std::span<const double> flat) {
  if (flat.size() != total()) throw Error(ErrorCode::ShapeMismatch, "parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& t : tensors)
    for (auto& v : t->value) v = flat[k++];
}

void ParamSet::round_to_f32() {
  for (auto& t : tensors)
    for (auto& v : t->value) v = static_cast<double>(static_cast<float>(v));
}

ParamSet init_params(const NetworkDescriptor& desc, std::uint64_t seed) {
  desc.validate();
  std::mt19937_64 rng(seed);
  ParamSet p;
  const int k = desc.kernel;
  auto add_conv = [&](const std::string& name, int cin, int cout, int ksize) {
    const std::size_t fan_in = static_cast<std::size_t>(cin) * ksize * ksize * ksize;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(static_cast<std::size_t>(cout) * fan_in);
    for (auto& v : w) v = normal(rng);
    p.names.push_back(name + ".weight");
    p.tensors.push_back(ag::leaf({cout, cin, ksize, ksize, ksize}, std::move(w), true));
    p.names.push_back(name + ".bias");
    p.tensors.push_back(ag::leaf({cout}, std::vector<double>(cout, 0.0), true));
  };
  int cin = 1;
  for (std::size_t i = 0; i < desc.normal_widths.size(); ++i) {
    add_conv("normal." + std::to_string(i), cin, desc.normal_widths[i], k);
    cin = desc.normal_widths[i];
  }
  int ccin = 1;
  for (std::size_t i = 0; i < desc.context_widths.size(); ++i) {
    add_conv("context." + std::to_string(i), ccin, desc.context_widths[i], k);
    ccin = desc.context_widths[i];
  }
  add_conv("fuse", desc.normal_widths.back() + desc.context_widths.back(), desc.fusion_width, 1);
  add_conv("head", desc.fusion_width, 1, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Forward and losses

ag::TensorPtr forward(const NetworkDescriptor& desc, const ParamSet& params, const ag::TensorPtr& patch) {
  const int s = desc.input_size;
  if (patch->shape != std::vector<int>{1, s, s, s}) {
    throw Error(ErrorCode::ShapeMismatch, "forward: patch must be [1," + std::to_string(s) + "^3]");
  }
  std::size_t idx = 0;
  auto next = [&]() -> const ag::TensorPtr& { return params.tensors.at(idx++); };

  ag::TensorPtr h = patch;
  for (std::size_t i = 0; i < desc.normal_widths.size(); ++i) {
    const auto& w = next();
    const auto& b = next();
    h = ag::silu(ag::conv3d(h, w, b));
  }

  const int region = desc.context_region();
  const int off = (s - region) / 2;
  ag::TensorPtr c = ag::avg_pool3d(ag::crop3d(patch, {off, off, off}, {region, region, region}), desc.context_factor);
  for (std::size_t i = 0; i < desc.context_widths.size(); ++i) {
    const auto& w = next();
    const auto& b = next();
    c = ag::silu(ag::conv3d(c, w, b));
  }
  c = ag::upsample_nearest3d(c, desc.context_factor);

  ag::TensorPtr f = ag::concat_channels(h, c);
  {
    const auto& w = next();
    const auto& b = next();
    f = ag::silu(ag::conv3d(f, w, b));
  }
  const auto& w = next();
  const auto& b = next();
  return ag::conv3d(f, w, b);
}

ag::TensorPtr bce_loss(const ag::TensorPtr& logits, std::span<const double> target) {
  return ag::bce_with_logits(logits, target);
}

ag::TensorPtr sens_spec_loss(const ag::TensorPtr& logits, std::span<const double> target, double alpha) {
  return ag::sens_spec(logits, target, alpha);
}

ag::TensorPtr kd_loss(const ag::TensorPtr& student_logits, std::span<const double> teacher_logits, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::Config, "kd temperature must be positive");
  return ag::kd_kl(student_logits, teacher_logits, temperature);
}

ag::TensorPtr seg_loss(const ag::TensorPtr& logits, std::span<const double> target, double alpha) {
  return ag::add(bce_loss(logits, target), sens_spec_loss(logits, target, alpha));
}

ag::TensorPtr lwf_loss(const NetworkDescriptor& desc, const ParamSet& params, const ParamSet* teacher,
                       const ag::TensorPtr& patch, std::span<const double> target, const LwfOptions& opts) {
  auto logits = forward(desc, params, patch);
  auto loss = seg_loss(logits, target, opts.alpha);
  if (opts.lambda == 0.0 || teacher == nullptr) return loss;
  const ParamSet frozen = teacher->clone(false);
  const auto teacher_logits = forward(desc, frozen, patch);
  return ag::add(loss, ag::scale(kd_loss(logits, teacher_logits->value, opts.temperature), opts.lambda));
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState make_optimizer(const ParamSet& params, double lr, double weight_decay) {
  OptimizerState s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  for (const auto& t : params.tensors) {
    s.m.emplace_back(t->numel(), 0.0);
    s.v.emplace_back(t->numel(), 0.0);
  }
  return s;
}

void adam_step(ParamSet& params, OptimizerState& s) {
  if (s.m.size() != params.tensors.size() || s.v.size() != params.tensors.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameter set");
  }
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& t = *params.tensors[i];
    auto& m = s.m[i];
    auto& v = s.v[i];
    if (m.size() != t.numel() || v.size() != t.numel()) throw Error(ErrorCode::ShapeMismatch, "optimizer moment shape");
    const bool has_grad = t.grad.size() == t.numel();
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double g = has_grad ? t.grad[j] : 0.0;
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g;
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      t.value[j] -= s.lr * s.weight_decay * t.value[j];
      t.value[j] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Inference

std::vector<double> extract_patch(const Volume& image, std::array<int, 3> origin, int input_size, int margin) {
  std::vector<double> patch(static_cast<std::size_t>(input_size) * input_size * input_size, 0.0);
  const int x0 = origin[0] - margin, y0 = origin[1] - margin, z0 = origin[2] - margin;
  const auto vals = image.values();
  std::size_t k = 0;
  for (int z = 0; z < input_size; ++z)
    for (int y = 0; y < input_size; ++y)
      for (int x = 0; x < input_size; ++x, ++k) {
        const int gx = x0 + x, gy = y0 + y, gz = z0 + z;
        if (image.contains(gx, gy, gz)) patch[k] = vals[image.index(gx, gy, gz)];
      }
  return patch;
}

namespace {

std::vector<int> tile_starts(int dim, int out, int stride) {
  std::vector<int> starts;
  if (dim <= out) return {0};
  for (int s = 0;; s += stride) {
    if (s + out >= dim) {
      starts.push_back(dim - out);
      break;
    }
    starts.push_back(s);
  }
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  return starts;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Inference sliding_window_infer(const NetworkDescriptor& desc, const ParamSet& params, const Volume& image,
                               double threshold, int stride) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::Config, "threshold must be in (0, 1)");
  const int out = desc.output_size;
  if (stride <= 0) stride = out;
  const Dims d = image.dims();
  const ParamSet frozen = params.clone(false);
  const int s = desc.input_size;

  std::vector<double> sum(d.count(), 0.0);
  std::vector<std::uint32_t> hits(d.count(), 0);
  std::vector<double> zero_tile;  // logits of an all-zero input, computed once

  for (int oz : tile_starts(d.z, out, stride))
    for (int oy : tile_starts(d.y, out, stride))
      for (int ox : tile_starts(d.x, out, stride)) {
        auto patch = extract_patch(image, {ox, oy, oz}, s, desc.margin());
        const bool blank = std::all_of(patch.begin(), patch.end(), [](double v) { return v == 0.0; });
        std::vector<double> logits;
        if (blank && !zero_tile.empty()) {
          logits = zero_tile;
        } else {
          logits = forward(desc, frozen, ag::constant({1, s, s, s}, std::move(patch)))->value;
          if (blank) zero_tile = logits;
        }
        std::size_t k = 0;
        for (int z = 0; z < out; ++z)
          for (int y = 0; y < out; ++y)
            for (int x = 0; x < out; ++x, ++k) {
              const int gx = ox + x, gy = oy + y, gz = oz + z;
              if (!image.contains(gx, gy, gz)) continue;
              const std::size_t i = image.index(gx, gy, gz);
              sum[i] += sigmoid(logits[k]);
              ++hits[i];
            }
      }

  std::vector<float> prob(d.count());
  std::vector<std::uint8_t> mask(d.count());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = sum[i] / hits[i];
    prob[i] = static_cast<float>(p);
    mask[i] = p >= threshold ? 1 : 0;
  }
  return {Volume::mask(d, image.spacing(), std::move(mask)), Volume::intensity(d, image.spacing(), std::move(prob))};
}

}  // namespace mclab
