#include "mclab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "mclab/error.hpp"

namespace mclab::ag {

void Tensor::zero_grad() { grad.assign(value.size(), 0.0); }

void Tensor::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

namespace {

TensorPtr make_node(std::vector<int> shape, std::vector<TensorPtr> parents) {
  auto t = std::make_shared<Tensor>();
  t->value.assign(shape_numel(shape), 0.0);
  t->shape = std::move(shape);
  t->requires_grad = std::any_of(parents.begin(), parents.end(), [](const TensorPtr& p) { return p->requires_grad; });
  if (t->requires_grad) t->parents = std::move(parents);
  return t;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void require_rank4(const TensorPtr& x, const char* op) {
  require(x->shape.size() == 4, std::string(op) + ": expected [C,D,H,W]");
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

}  // namespace

TensorPtr constant(std::vector<int> shape, std::vector<double> values) { return leaf(std::move(shape), std::move(values), false); }

TensorPtr leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  require(shape_numel(shape) == values.size(), "leaf: value count does not match shape");
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr conv3d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  require_rank4(x, "conv3d");
  require(w->shape.size() == 5, "conv3d: weight must be [Co,Ci,k,k,k]");
  const int ci_n = x->shape[0], D = x->shape[1], H = x->shape[2], W = x->shape[3];
  const int co_n = w->shape[0], k = w->shape[2];
  require(w->shape[1] == ci_n && w->shape[3] == k && w->shape[4] == k, "conv3d: weight/input channel mismatch");
  require(b->numel() == static_cast<std::size_t>(co_n), "conv3d: bias size");
  const int Do = D - k + 1, Ho = H - k + 1, Wo = W - k + 1;
  require(Do > 0 && Ho > 0 && Wo > 0, "conv3d: kernel larger than input");

  auto out = make_node({co_n, Do, Ho, Wo}, {x, w, b});
  const std::size_t in_vol = static_cast<std::size_t>(D) * H * W;
  const std::size_t out_vol = static_cast<std::size_t>(Do) * Ho * Wo;
  const std::size_t k3 = static_cast<std::size_t>(k) * k * k;
  // Accumulate on the input's strides so each kernel tap is one contiguous
  // multiply-add; valid positions are gathered afterwards.
  const std::size_t len = (static_cast<std::size_t>(Do - 1) * H + (Ho - 1)) * W + Wo;
  std::vector<std::size_t> offsets(k3);
  for (int kz = 0, t = 0; kz < k; ++kz)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++t) offsets[t] = (static_cast<std::size_t>(kz) * H + ky) * W + kx;

  std::vector<double> acc(len);
  const double* xv = x->value.data();
  const double* wv = w->value.data();
  for (int co = 0; co < co_n; ++co) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double* __restrict a = acc.data();
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* xin = xv + ci * in_vol;
      const double* wk = wv + (static_cast<std::size_t>(co) * ci_n + ci) * k3;
      for (std::size_t t = 0; t < k3; ++t) {
        const double wt = wk[t];
        const double* __restrict src = xin + offsets[t];
        for (std::size_t p = 0; p < len; ++p) a[p] += wt * src[p];
      }
    }
    double* o = out->value.data() + co * out_vol;
    const double bias = b->value[co];
    for (int z = 0; z < Do; ++z)
      for (int y = 0; y < Ho; ++y) {
        const double* row = a + (static_cast<std::size_t>(z) * H + y) * W;
        for (int xx = 0; xx < Wo; ++xx) *o++ = row[xx] + bias;
      }
  }

  if (out->requires_grad) {
    out->backward_fn = [=, offsets = std::move(offsets)](Tensor& self) {
      Tensor& xt = *self.parents[0];
      Tensor& wt = *self.parents[1];
      Tensor& bt = *self.parents[2];
      if (xt.requires_grad) xt.ensure_grad();
      if (wt.requires_grad) wt.ensure_grad();
      if (bt.requires_grad) bt.ensure_grad();
      std::vector<double> gfull(len);
      for (int co = 0; co < co_n; ++co) {
        std::fill(gfull.begin(), gfull.end(), 0.0);
        const double* go = self.grad.data() + co * out_vol;
        double gsum = 0.0;
        for (int z = 0; z < Do; ++z)
          for (int y = 0; y < Ho; ++y) {
            double* row = gfull.data() + (static_cast<std::size_t>(z) * H + y) * W;
            for (int xx = 0; xx < Wo; ++xx) {
              row[xx] = *go;
              gsum += *go++;
            }
          }
        if (bt.requires_grad) bt.grad[co] += gsum;
        const double* __restrict g = gfull.data();
        for (int ci = 0; ci < ci_n; ++ci) {
          const std::size_t wbase = (static_cast<std::size_t>(co) * ci_n + ci) * k3;
          for (std::size_t t = 0; t < k3; ++t) {
            if (wt.requires_grad) {
              const double* __restrict src = xt.value.data() + ci * in_vol + offsets[t];
              // Four partial sums keep the reduction vectorisable.
              double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
              std::size_t p = 0;
              for (; p + 4 <= len; p += 4) {
                d0 += g[p] * src[p];
                d1 += g[p + 1] * src[p + 1];
                d2 += g[p + 2] * src[p + 2];
                d3 += g[p + 3] * src[p + 3];
              }
              for (; p < len; ++p) d0 += g[p] * src[p];
              wt.grad[wbase + t] += (d0 + d1) + (d2 + d3);
            }
            if (xt.requires_grad) {
              const double wk = wt.value[wbase + t];
              double* __restrict dst = xt.grad.data() + ci * in_vol + offsets[t];
              for (std::size_t p = 0; p < len; ++p) dst[p] += wk * g[p];
            }
          }
        }
      }
    };
  }
  return out;
}

TensorPtr silu(const TensorPtr& x) {
  auto out = make_node(x->shape, {x});
  const std::size_t n = x->numel();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = x->value[i] * sigmoid(x->value[i]);
  if (out->requires_grad) {
    out->backward_fn = [](Tensor& self) {
      Tensor& xt = *self.parents[0];
      xt.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double z = xt.value[i];
        const double s = sigmoid(z);
        xt.grad[i] += self.grad[i] * s * (1.0 + z * (1.0 - s));
      }
    };
  }
  return out;
}

TensorPtr avg_pool3d(const TensorPtr& x, int f) {
  require_rank4(x, "avg_pool3d");
  const int C = x->shape[0], D = x->shape[1], H = x->shape[2], W = x->shape[3];
  require(f > 0 && D % f == 0 && H % f == 0 && W % f == 0, "avg_pool3d: dims not divisible by factor");
  const int Do = D / f, Ho = H / f, Wo = W / f;
  auto out = make_node({C, Do, Ho, Wo}, {x});
  const double inv = 1.0 / (static_cast<double>(f) * f * f);
  auto src_index = [=](int c, int z, int y, int xx) { return ((static_cast<std::size_t>(c) * D + z) * H + y) * W + xx; };
  std::size_t o = 0;
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Do; ++z)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx, ++o) {
          double s = 0.0;
          for (int dz = 0; dz < f; ++dz)
            for (int dy = 0; dy < f; ++dy)
              for (int dx = 0; dx < f; ++dx) s += x->value[src_index(c, z * f + dz, y * f + dy, xx * f + dx)];
          out->value[o] = s * inv;
        }
  if (out->requires_grad) {
    out->backward_fn = [=](Tensor& self) {
      Tensor& xt = *self.parents[0];
      xt.ensure_grad();
      std::size_t o = 0;
      for (int c = 0; c < C; ++c)
        for (int z = 0; z < Do; ++z)
          for (int y = 0; y < Ho; ++y)
            for (int xx = 0; xx < Wo; ++xx, ++o) {
              const double g = self.grad[o] * inv;
              for (int dz = 0; dz < f; ++dz)
                for (int dy = 0; dy < f; ++dy)
                  for (int dx = 0; dx < f; ++dx) xt.grad[src_index(c, z * f + dz, y * f + dy, xx * f + dx)] += g;
            }
    };
  }
  return out;
}

TensorPtr upsample_nearest3d(const TensorPtr& x, int f) {
  require_rank4(x, "upsample_nearest3d");
  const int C = x->shape[0], D = x->shape[1], H = x->shape[2], W = x->shape[3];
  const int Do = D * f, Ho = H * f, Wo = W * f;
  auto out = make_node({C, Do, Ho, Wo}, {x});
  auto src_index = [=](int c, int z, int y, int xx) {
    return ((static_cast<std::size_t>(c) * D + z / f) * H + y / f) * W + xx / f;
  };
  std::size_t o = 0;
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Do; ++z)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) out->value[o++] = x->value[src_index(c, z, y, xx)];
  if (out->requires_grad) {
    out->backward_fn = [=](Tensor& self) {
      Tensor& xt = *self.parents[0];
      xt.ensure_grad();
      std::size_t o = 0;
      for (int c = 0; c < C; ++c)
        for (int z = 0; z < Do; ++z)
          for (int y = 0; y < Ho; ++y)
            for (int xx = 0; xx < Wo; ++xx) xt.grad[src_index(c, z, y, xx)] += self.grad[o++];
    };
  }
  return out;
}

TensorPtr crop3d(const TensorPtr& x, std::array<int, 3> off, std::array<int, 3> size) {
  require_rank4(x, "crop3d");
  const int C = x->shape[0], D = x->shape[1], H = x->shape[2], W = x->shape[3];
  require(off[0] >= 0 && off[1] >= 0 && off[2] >= 0 && off[0] + size[0] <= D && off[1] + size[1] <= H &&
              off[2] + size[2] <= W,
          "crop3d: window outside input");
  auto out = make_node({C, size[0], size[1], size[2]}, {x});
  auto src_index = [=](int c, int z, int y, int xx) {
    return ((static_cast<std::size_t>(c) * D + z + off[0]) * H + y + off[1]) * W + xx + off[2];
  };
  std::size_t o = 0;
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < size[0]; ++z)
      for (int y = 0; y < size[1]; ++y)
        for (int xx = 0; xx < size[2]; ++xx) out->value[o++] = x->value[src_index(c, z, y, xx)];
  if (out->requires_grad) {
    out->backward_fn = [=](Tensor& self) {
      Tensor& xt = *self.parents[0];
      xt.ensure_grad();
      std::size_t o = 0;
      for (int c = 0; c < C; ++c)
        for (int z = 0; z < size[0]; ++z)
          for (int y = 0; y < size[1]; ++y)
            for (int xx = 0; xx < size[2]; ++xx) xt.grad[src_index(c, z, y, xx)] += self.grad[o++];
    };
  }
  return out;
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  require(std::equal(a->shape.begin() + 1, a->shape.end(), b->shape.begin() + 1), "concat_channels: spatial dims differ");
  std::vector<int> shape = a->shape;
  shape[0] += b->shape[0];
  auto out = make_node(shape, {a, b});
  std::copy(a->value.begin(), a->value.end(), out->value.begin());
  std::copy(b->value.begin(), b->value.end(), out->value.begin() + static_cast<std::ptrdiff_t>(a->numel()));
  if (out->requires_grad) {
    out->backward_fn = [na = a->numel()](Tensor& self) {
      Tensor& at = *self.parents[0];
      Tensor& bt = *self.parents[1];
      if (at.requires_grad) {
        at.ensure_grad();
        for (std::size_t i = 0; i < na; ++i) at.grad[i] += self.grad[i];
      }
      if (bt.requires_grad) {
        bt.ensure_grad();
        for (std::size_t i = 0; i < bt.grad.size(); ++i) bt.grad[i] += self.grad[na + i];
      }
    };
  }
  return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  require(a->shape == b->shape, "add: shapes differ");
  auto out = make_node(a->shape, {a, b});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad) {
    out->backward_fn = [](Tensor& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

TensorPtr scale(const TensorPtr& a, double factor) {
  auto out = make_node(a->shape, {a});
  for (std::size_t i = 0; i < out->numel(); ++i) out->value[i] = a->value[i] * factor;
  if (out->requires_grad) {
    out->backward_fn = [factor](Tensor& self) {
      Tensor& at = *self.parents[0];
      at.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) at.grad[i] += self.grad[i] * factor;
    };
  }
  return out;
}

TensorPtr bce_with_logits(const TensorPtr& logits, std::span<const double> target) {
  require(logits->numel() == target.size(), "bce: logits and target differ in size");
  auto out = make_node({1}, {logits});
  const std::size_t n = target.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits->value[i];
    s += softplus(z) - z * target[i];
  }
  out->value[0] = s / static_cast<double>(n);
  if (out->requires_grad) {
    std::vector<double> y(target.begin(), target.end());
    out->backward_fn = [y = std::move(y)](Tensor& self) {
      Tensor& lt = *self.parents[0];
      lt.ensure_grad();
      const double g = self.grad[0] / static_cast<double>(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) lt.grad[i] += g * (sigmoid(lt.value[i]) - y[i]);
    };
  }
  return out;
}

TensorPtr sens_spec(const TensorPtr& logits, std::span<const double> target, double alpha) {
  require(logits->numel() == target.size(), "sens_spec: logits and target differ in size");
  auto out = make_node({1}, {logits});
  double pos = 0.0, neg = 0.0, sum_y = 0.0, sum_n = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double y = target[i];
    const double p = sigmoid(logits->value[i]);
    const double e2 = (y - p) * (y - p);
    pos += e2 * y;
    neg += e2 * (1.0 - y);
    sum_y += y;
    sum_n += 1.0 - y;
  }
  const double dpos = sum_y + kSensSpecEps, dneg = sum_n + kSensSpecEps;
  out->value[0] = alpha * pos / dpos + (1.0 - alpha) * neg / dneg;
  if (out->requires_grad) {
    std::vector<double> y(target.begin(), target.end());
    out->backward_fn = [y = std::move(y), alpha, dpos, dneg](Tensor& self) {
      Tensor& lt = *self.parents[0];
      lt.ensure_grad();
      const double g = self.grad[0];
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = sigmoid(lt.value[i]);
        const double w = alpha * y[i] / dpos + (1.0 - alpha) * (1.0 - y[i]) / dneg;
        lt.grad[i] += g * w * -2.0 * (y[i] - p) * p * (1.0 - p);
      }
    };
  }
  return out;
}

TensorPtr kd_kl(const TensorPtr& student, std::span<const double> teacher, double temperature) {
  require(student->numel() == teacher.size(), "kd: student and teacher differ in size");
  auto out = make_node({1}, {student});
  const double T = temperature;
  double s = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double a = teacher[i] / T, b = student->value[i] / T;
    const double kl = sigmoid(a) * (a - b) + softplus(b) - softplus(a);
    s += std::max(kl, 0.0);
  }
  out->value[0] = T * T * s / static_cast<double>(teacher.size());
  if (out->requires_grad) {
    std::vector<double> t(teacher.begin(), teacher.end());
    out->backward_fn = [t = std::move(t), T](Tensor& self) {
      Tensor& st = *self.parents[0];
      st.ensure_grad();
      const double g = self.grad[0] * T / static_cast<double>(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) st.grad[i] += g * (sigmoid(st.value[i] / T) - sigmoid(t[i] / T));
    };
  }
  return out;
}

void backward(const TensorPtr& loss) {
  if (loss->numel() != 1) throw Error(ErrorCode::GraphNotScalar, "backward needs a scalar loss");
  if (!loss->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<Tensor*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor* p = node->parents[next++].get();
      if (p->requires_grad && p->backward_fn && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Tensor* t : order) t->zero_grad();
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace mclab::ag
