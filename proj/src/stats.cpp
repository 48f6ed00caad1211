#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mclab/error.hpp"
#include "mclab/lesion_eval.hpp"

namespace mclab {

namespace {

struct Moments {
  double mean;
  double var;  // unbiased
};

Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, ss / (n - 1.0)};
}

}  // namespace

TTestResult unpaired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::TooFewSamples, "t-test needs at least two values per sample");
  const Moments ma = moments(a), mb = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = ma.var / na, sb = mb.var / nb;
  const double se2 = sa + sb;
  const double diff = ma.mean - mb.mean;
  if (se2 == 0.0) {
    if (diff == 0.0) return {0.0, 1.0, 0.0};
    return {std::copysign(std::numeric_limits<double>::infinity(), diff), 0.0, 0.0};
  }
  const double t = diff / std::sqrt(se2);
  const double df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  const boost::math::students_t_distribution<double> dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return {t, std::min(1.0, p), df};
}

}  // namespace mclab
