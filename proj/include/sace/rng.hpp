#pragma once
#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace sace::rng {

enum class Purpose : uint64_t {
  Bart = 1, Dirichlet, Sensitivity, Pseudo, Glm, Bootstrap, Dgp, Oracle, Latent
};

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key);

uint64_t mix64(uint64_t x);
uint64_t derive(uint64_t seed, Purpose purpose, std::initializer_list<uint64_t> parts);

// maps 64 random bits to the open interval (0,1)
inline double to_unit(uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// Stateless stream: the value depends only on (key, index, slot), so any
// partition of the index range replays the same numbers.
class CounterStream {
 public:
  explicit CounterStream(uint64_t key) : key_(key) {}
  std::array<double, 2> uniform2(uint64_t index, uint64_t slot) const;
  uint64_t key() const { return key_; }

 private:
  uint64_t key_;
};

// Sequential engine for the MCMC samplers. Distributions are implemented
// here rather than via <random> so draws do not depend on the standard library.
class Engine {
 public:
  explicit Engine(uint64_t seed) : gen_(mix64(seed)) {}

  uint64_t bits() { return gen_(); }
  double uniform() { return to_unit(gen_()); }
  size_t below(size_t n);
  double normal();
  double gamma(double shape);
  double chisq(double df) { return 2.0 * gamma(0.5 * df); }
  // standard normal restricted to (a, inf)
  double trunc_normal_above(double a);
  std::vector<double> dirichlet(std::span<const double> alpha);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

double normal_quantile(double u);
double normal_cdf(double x);
double normal_logpdf(double x, double mean, double sd);
double chisq_quantile(double p, double df);
int categorical(std::span<const double> p, double u);

}  // namespace sace::rng
