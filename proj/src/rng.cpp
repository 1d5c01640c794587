#include "sace/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

namespace sace::rng {

namespace {
constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
  uint64_t p = static_cast<uint64_t>(a) * b;
  hi = static_cast<uint32_t>(p >> 32);
  lo = static_cast<uint32_t>(p);
}
}  // namespace

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> c, std::array<uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t derive(uint64_t seed, Purpose purpose, std::initializer_list<uint64_t> parts) {
  uint64_t h = mix64(seed ^ 0x5ACE5ACE5ACEULL);
  h = mix64(h ^ static_cast<uint64_t>(purpose));
  for (uint64_t p : parts) h = mix64(h ^ mix64(p + 0x1234567ULL));
  return h;
}

std::array<double, 2> CounterStream::uniform2(uint64_t index, uint64_t slot) const {
  auto out = philox4x32({static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
                         static_cast<uint32_t>(slot), static_cast<uint32_t>(slot >> 32)},
                        {static_cast<uint32_t>(key_), static_cast<uint32_t>(key_ >> 32)});
  uint64_t a = (static_cast<uint64_t>(out[0]) << 32) | out[1];
  uint64_t b = (static_cast<uint64_t>(out[2]) << 32) | out[3];
  return {to_unit(a), to_unit(b)};
}

size_t Engine::below(size_t n) {
  // rejection keeps it exactly uniform
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do x = gen_();
  while (x >= limit);
  return static_cast<size_t>(x % n);
}

double Engine::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Engine::gamma(double shape) {
  if (shape < 1.0) {
    double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  // Marsaglia-Tsang
  double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Engine::trunc_normal_above(double a) {
  if (a <= 0.0) {
    for (;;) {
      double x = normal();
      if (x > a) return x;
    }
  }
  // Robert (1995) exponential proposal
  double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    double x = a - std::log(uniform()) / lambda;
    double rho = std::exp(-0.5 * (x - lambda) * (x - lambda));
    if (uniform() <= rho) return x;
  }
}

std::vector<double> Engine::dirichlet(std::span<const double> alpha) {
  std::vector<double> g(alpha.size());
  double total = 0.0;
  for (size_t i = 0; i < alpha.size(); ++i) {
    g[i] = gamma(alpha[i]);
    total += g[i];
  }
  for (double& x : g) x /= total;
  return g;
}

double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> nd;
  return boost::math::quantile(nd, u);
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_logpdf(double x, double mean, double sd) {
  double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.91893853320467274178;
}

double chisq_quantile(double p, double df) {
  boost::math::chi_squared_distribution<double> d(df);
  return boost::math::quantile(d, p);
}

int categorical(std::span<const double> p, double u) {
  double acc = 0.0;
  for (size_t i = 0; i + 1 < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  // last cell with positive mass absorbs rounding
  for (size_t i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return static_cast<int>(i);
  return 0;
}

}  // namespace sace::rng
