#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mclab/lesion_eval.hpp"

namespace mclab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas along one line (Felzenszwalb & Huttenlocher),
// with sample positions q * w.
void edt_1d(const double* f, double* out, int n, double w, std::vector<int>& v, std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double pq = q * w;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const double pv = v[k] * w;
      s = ((f[q] + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv));
      if (s <= z[k]) {
        if (--k < 0) break;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double pq = q * w;
    while (z[j + 1] < pq) ++j;
    const double diff = w * (q - v[j]);
    out[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_distance_to(const std::vector<std::uint8_t>& features, Dims d, const Spacing& spacing) {
  const std::size_t n = d.count();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = features[i] ? 0.0 : kInf;

  std::vector<int> v;
  std::vector<double> z;
  const int len_max = std::max({d.x, d.y, d.z});
  std::vector<double> line(len_max), res(len_max);

  const std::size_t sx = 1, sy = static_cast<std::size_t>(d.x), sz = static_cast<std::size_t>(d.x) * d.y;
  auto pass = [&](int len, std::size_t stride, double w, int outer_a, std::size_t stride_a, int outer_b,
                  std::size_t stride_b) {
    for (int b = 0; b < outer_b; ++b)
      for (int a = 0; a < outer_a; ++a) {
        const std::size_t base = a * stride_a + b * stride_b;
        for (int i = 0; i < len; ++i) line[i] = g[base + i * stride];
        edt_1d(line.data(), res.data(), len, w, v, z);
        for (int i = 0; i < len; ++i) g[base + i * stride] = res[i];
      }
  };
  pass(d.x, sx, spacing[0], d.y, sy, d.z, sz);
  pass(d.y, sy, spacing[1], d.x, sx, d.z, sz);
  pass(d.z, sz, spacing[2], d.x, sx, d.y, sy);
  return g;
}

}  // namespace mclab
