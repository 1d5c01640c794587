#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sace/util.hpp"

namespace sace::glm {

enum class Link { Identity, Logit };

// Feature columns kept after dropping constants and excluded columns,
// with their standardization.
struct Design {
  std::vector<int> keep;
  std::vector<double> center, scale;

  static Design build(const Matrix& X, std::span<const int> exclude);
  // intercept first, then standardized kept columns
  void row(const double* x, double* out) const;
  size_t width() const { return keep.size() + 1; }
};

struct GlmDraw {
  Link link = Link::Identity;
  Design design;
  std::vector<double> beta;               // on the standardized scale, intercept first
  double y_center = 0.0, y_scale = 1.0;   // identity link only
  double sigma = 0.0;                     // raw-scale noise sd, identity link only

  double eta(const double* x) const;
  double mean(const double* x) const { return y_center + y_scale * eta(x); }
  double prob(const double* x) const;     // clamped to [1e-12, 1 - 1e-12]
};

struct GlmConfig {
  int n_burn = 200, n_keep = 10, thin = 1;
  double prior_sd = 10.0;
  double ig_a = 0.01, ig_b = 0.01;
  uint64_t seed = 1;
};

struct GlmFit {
  std::vector<GlmDraw> draws;
  std::vector<std::string> warnings;
  double accept_rate = 1.0;
};

// normal-linear model, semi-conjugate Gibbs
GlmFit fit_linear(const Matrix& X, std::span<const double> y, const GlmConfig& cfg, std::span<const int> exclude = {});
// logistic model, independence Metropolis-Hastings with a t(6) Laplace proposal
GlmFit fit_logit(const Matrix& X, std::span<const double> b, const GlmConfig& cfg, std::span<const int> exclude = {});

// Frequentist logistic regression by IRLS; a tiny ridge keeps separated fits finite.
struct LogitFit {
  Design design;
  std::vector<double> beta;
  bool converged = false;
  int iterations = 0;
  double prob(const double* x) const;
};
LogitFit irls_logit(const Matrix& X, std::span<const double> b, std::span<const int> exclude = {}, double ridge = 1e-8,
                    int max_iter = 100);

}  // namespace sace::glm
