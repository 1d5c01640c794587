#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sace/obsmodels.hpp"
#include "sace/sensitivity.hpp"

namespace sace::gcomp {

constexpr int kNever = -1;
constexpr double kFloor = 1e-12;

// Only the two contrasted families are used: exposed first at wave t
// (evaluated at wave t) and never exposed.
struct Regime {
  int first_exposure = kNever;

  static Regime never() { return {}; }
  static Regime exposed_at(int t) { return {t}; }
  bool exposed() const { return first_exposure != kNever; }
  int z(int k) const { return exposed() && k >= first_exposure ? 1 : 0; }
};

enum class ChiVariant { A3, FirstPrinciples };
enum class GammaMode { First, All };
enum class Estimand { Sace, SurvivorContrast };

const char* to_string(ChiVariant v);
const char* to_string(GammaMode m);
const char* to_string(Estimand e);
ChiVariant parse_chi_variant(std::string_view s);
GammaMode parse_gamma_mode(std::string_view s);
Estimand parse_estimand(std::string_view s);

// c(z̄_j) = -xi_j for the exposed regime, +xi_j for never exposed
double confounding_c(const Regime& g, const SensitivityDraw& s, int wave);
// mu + shift - c * (1 - pi_reg)
double phi_value(double mu, double shift, double c, double pi_reg);
// A_k = (1-pi_R) pi_S / [(1-pi_R) pi_S + 1 - pi_S]
double survival_given_dropout(double pi_r, double pi_s);
// nu clamped to [0, 1 - pi_z1]; negated for exposure value 0
double regime_nu(double nu, double pi_z1, int z);
double dropout_factor(ChiVariant v, double pi_reg, double A, double nu_reg);
bool gamma_applies(GammaMode mode, int r_prev, int r);

struct PseudoSample {
  int last_wave = 0;
  size_t first_index = 0;
  std::vector<int> regime_z;               // z used while sampling, k = 0..last_wave
  std::vector<int> x0;
  std::vector<std::vector<double>> y;      // y[k], k < last_wave
  std::vector<std::vector<int>> w, r, s;   // k = 0..last_wave
  size_t size() const { return x0.size(); }
};

// Pseudo-individual i uses counter index first_index + i, so any block
// partition reproduces the same sample.
PseudoSample sample_pseudo(const ObservedDataModel& model, const Regime& regime, const SensitivityDraw& sens, size_t n,
                           uint64_t stream_key, GammaMode mode = GammaMode::First, size_t first_index = 0);

std::vector<double> phi(const ObservedDataModel& model, const PseudoSample& ps, const Regime& regime,
                        const SensitivityDraw& sens, int wave, GammaMode mode = GammaMode::First);
std::vector<double> chi(const ObservedDataModel& model, const PseudoSample& ps, const Regime& regime,
                        const SensitivityDraw& sens, int wave, ChiVariant variant);

struct Moments {
  double p_hat = 0.0, mu_hat = 0.0;
};
Moments mc_integrate(std::span<const double> phi, std::span<const double> chi);
Moments combine_blocks(std::span<const Moments> blocks, std::span<const size_t> sizes);

// indexed by wave; entry 0 unused
struct WaveMoments {
  double mu_z = 0.0, p_z = 0.0, mu_ref = 0.0, p_ref = 0.0;
};
struct TauParts {
  double tau = 0.0;
  std::vector<double> weights, contrasts;  // indexed by wave
};
TauParts tau_draw(std::span<const WaveMoments> waves, std::span<const double> delta);

struct WaveDraw {
  double p_z = 0, mu_z = 0, p_ref = 0, mu_ref = 0, weight = 0, contrast = 0;
};
struct DrawResult {
  int chain = 0, draw = 0;
  double tau = 0.0;
  std::vector<WaveDraw> waves;  // indexed by wave; entry 0 unused
  SensitivityDraw sens;
};

struct SaceResult {
  std::string method = "BSP-GC";
  int n_waves = 0;
  std::vector<DrawResult> draws;
  std::vector<std::string> warnings;
  std::vector<uint64_t> chain_seeds;
  std::string config_text;
  SensitivityBounds bounds;

  std::vector<double> taus() const;
};

struct GcompOptions {
  size_t n_pseudo = 25000;
  int n_blocks = 25;
  ChiVariant chi = ChiVariant::FirstPrinciples;
  GammaMode gamma = GammaMode::First;
  Estimand estimand = Estimand::Sace;
  uint64_t seed = 1;
  int workers = 0;
};

// Running sums over a block of pseudo-individuals, indexed by wave.
struct BlockSums {
  size_t n = 0;
  std::vector<double> chi_z, phichi_z, chi_ref, phichi_ref;
  std::vector<double> alive, alive_mu_z, alive_mu_ref, surv_prod;
  void add(const BlockSums& o);
};

BlockSums evaluate_block(const ObservedDataModel& model, const SensitivityDraw& sens, const GcompOptions& opt,
                         uint64_t stream_key, size_t first, size_t count);
DrawResult assemble_draw(const BlockSums& total, const SensitivityDraw& sens, Estimand estimand);

uint64_t chain_seed(uint64_t master, int chain);
uint64_t pseudo_key(uint64_t chain_seed, int m);

SaceResult estimate_from_stack(const PosteriorStack& stack, const SensitivitySource& sens, const GcompOptions& opt);

}  // namespace sace::gcomp
