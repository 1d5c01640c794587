#include "sace/glm.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "sace/error.hpp"
#include "sace/rng.hpp"

namespace sace::glm {

namespace {

constexpr double kClamp = 1e-12;

double sigmoid(double e) { return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); }

// log(1 + exp(e)) without overflow
double softplus(double e) { return e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)); }

Eigen::MatrixXd design_matrix(const Design& d, const Matrix& X) {
  Eigen::MatrixXd D(static_cast<Eigen::Index>(X.rows), static_cast<Eigen::Index>(d.width()));
  std::vector<double> buf(d.width());
  for (size_t i = 0; i < X.rows; ++i) {
    d.row(X.row(i), buf.data());
    for (size_t j = 0; j < buf.size(); ++j) D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[j];
  }
  return D;
}

Eigen::VectorXd std_normal(rng::Engine& eng, Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = eng.normal();
  return z;
}

void check_input(const Matrix& X, size_t n) {
  if (X.rows == 0) fail(ErrorKind::InvalidArgument, "empty training set");
  if (X.rows != n) fail(ErrorKind::InvalidArgument, "response length differs from design rows");
}

void check_schedule(const GlmConfig& c) {
  if (c.n_burn < 0 || c.n_keep < 1 || c.thin < 1) fail(ErrorKind::InvalidArgument, "bad glm schedule");
  if (!(c.prior_sd > 0)) fail(ErrorKind::InvalidArgument, "glm prior sd must be > 0");
}

struct LogitPosterior {
  const Eigen::MatrixXd& D;
  const Eigen::VectorXd& b;
  double prec;

  double logpost(const Eigen::VectorXd& beta) const {
    Eigen::VectorXd e = D * beta;
    double s = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) s += b(i) * e(i) - softplus(e(i));
    return s - 0.5 * prec * beta.squaredNorm();
  }
};

// Newton iterations for the (penalized) logistic mode; returns the negative Hessian.
Eigen::MatrixXd newton_mode(const Eigen::MatrixXd& D, const Eigen::VectorXd& b, double prec, Eigen::VectorXd& beta,
                            int max_iter, bool& converged, int& iters) {
  auto p = D.cols();
  Eigen::MatrixXd H(p, p);
  converged = false;
  for (iters = 0; iters < max_iter; ++iters) {
    Eigen::VectorXd e = D * beta;
    Eigen::VectorXd mu(e.size()), wt(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      mu(i) = sigmoid(e(i));
      wt(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    Eigen::VectorXd g = D.transpose() * (b - mu) - prec * beta;
    H = D.transpose() * wt.asDiagonal() * D;
    H.diagonal().array() += prec;
    Eigen::VectorXd step = H.ldlt().solve(g);
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) {
      converged = true;
      ++iters;
      break;
    }
  }
  Eigen::VectorXd e = D * beta;
  Eigen::VectorXd wt(e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    double m = sigmoid(e(i));
    wt(i) = std::max(m * (1.0 - m), 1e-12);
  }
  H = D.transpose() * wt.asDiagonal() * D;
  H.diagonal().array() += prec;
  return H;
}

bool is_separated(const Eigen::MatrixXd& D, const Eigen::VectorXd& b) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(D.cols());
  bool conv;
  int it;
  newton_mode(D, b, 1e-10, beta, 60, conv, it);
  return !conv || beta.lpNorm<Eigen::Infinity>() > 25.0;
}

}  // namespace

Design Design::build(const Matrix& X, std::span<const int> exclude) {
  Design d;
  for (size_t j = 0; j < X.cols; ++j) {
    if (std::find(exclude.begin(), exclude.end(), static_cast<int>(j)) != exclude.end()) continue;
    double m = 0;
    for (size_t i = 0; i < X.rows; ++i) m += X(i, j);
    m /= static_cast<double>(std::max<size_t>(1, X.rows));
    double v = 0;
    for (size_t i = 0; i < X.rows; ++i) v += (X(i, j) - m) * (X(i, j) - m);
    double sd = X.rows > 1 ? std::sqrt(v / static_cast<double>(X.rows - 1)) : 0.0;
    if (!(sd > 1e-12)) continue;
    d.keep.push_back(static_cast<int>(j));
    d.center.push_back(m);
    d.scale.push_back(sd);
  }
  return d;
}

void Design::row(const double* x, double* out) const {
  out[0] = 1.0;
  for (size_t j = 0; j < keep.size(); ++j) out[j + 1] = (x[keep[j]] - center[j]) / scale[j];
}

double GlmDraw::eta(const double* x) const {
  double e = beta[0];
  for (size_t j = 0; j < design.keep.size(); ++j)
    e += beta[j + 1] * (x[design.keep[j]] - design.center[j]) / design.scale[j];
  return e;
}

double GlmDraw::prob(const double* x) const { return std::clamp(sigmoid(eta(x)), kClamp, 1.0 - kClamp); }

GlmFit fit_linear(const Matrix& X, std::span<const double> y, const GlmConfig& cfg, std::span<const int> exclude) {
  check_input(X, y.size());
  check_schedule(cfg);
  Design des = Design::build(X, exclude);
  Eigen::MatrixXd D = design_matrix(des, X);
  auto n = static_cast<double>(y.size());
  double ym = 0;
  for (double v : y) ym += v;
  ym /= n;
  double yv = 0;
  for (double v : y) yv += (v - ym) * (v - ym);
  double ys = y.size() > 1 ? std::sqrt(yv / (n - 1)) : 0.0;
  if (!(ys > 1e-12)) ys = 1.0;
  Eigen::VectorXd yt(static_cast<Eigen::Index>(y.size()));
  for (size_t i = 0; i < y.size(); ++i) yt(static_cast<Eigen::Index>(i)) = (y[i] - ym) / ys;

  auto p = D.cols();
  Eigen::MatrixXd DtD = D.transpose() * D;
  Eigen::VectorXd Dty = D.transpose() * yt;
  double prec = 1.0 / (cfg.prior_sd * cfg.prior_sd);
  rng::Engine eng(cfg.seed);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double s2 = 1.0;
  GlmFit out;
  int total = cfg.n_burn + cfg.n_keep * cfg.thin;
  for (int it = 0; it < total; ++it) {
    Eigen::MatrixXd Q = DtD / s2;
    Q.diagonal().array() += prec;
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    Eigen::VectorXd m = llt.solve(Dty / s2);
    // beta = m + U^{-1} z with Q = U^T U
    beta = m + llt.matrixU().solve(std_normal(eng, p));
    double rss = (yt - D * beta).squaredNorm();
    s2 = (cfg.ig_b + rss / 2.0) / eng.gamma(cfg.ig_a + n / 2.0);
    s2 = std::max(s2, 1e-16);
    if (it >= cfg.n_burn && (it - cfg.n_burn) % cfg.thin == cfg.thin - 1) {
      GlmDraw d;
      d.link = Link::Identity;
      d.design = des;
      d.beta.assign(beta.data(), beta.data() + p);
      d.y_center = ym;
      d.y_scale = ys;
      d.sigma = ys * std::sqrt(s2);
      out.draws.push_back(std::move(d));
    }
  }
  return out;
}

GlmFit fit_logit(const Matrix& X, std::span<const double> b, const GlmConfig& cfg, std::span<const int> exclude) {
  check_input(X, b.size());
  check_schedule(cfg);
  for (double v : b)
    if (v != 0.0 && v != 1.0) fail(ErrorKind::InvalidArgument, "logit response must be 0/1");
  Design des = Design::build(X, exclude);
  Eigen::MatrixXd D = design_matrix(des, X);
  Eigen::VectorXd bv(static_cast<Eigen::Index>(b.size()));
  for (size_t i = 0; i < b.size(); ++i) bv(static_cast<Eigen::Index>(i)) = b[i];
  double prec = 1.0 / (cfg.prior_sd * cfg.prior_sd);
  auto p = D.cols();

  GlmFit out;
  if (is_separated(D, bv)) out.warnings.push_back("separation detected; using the prior-regularized fit");

  Eigen::VectorXd mode = Eigen::VectorXd::Zero(p);
  bool conv;
  int iters;
  Eigen::MatrixXd H = newton_mode(D, bv, prec, mode, 200, conv, iters);
  if (!conv) out.warnings.push_back("posterior mode search did not converge");
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  LogitPosterior post{D, bv, prec};

  constexpr double df = 6.0;
  rng::Engine eng(cfg.seed);
  auto log_q = [&](const Eigen::VectorXd& beta) {
    Eigen::VectorXd dlt = llt.matrixU() * (beta - mode);  // Mahalanobis under H
    return -0.5 * (df + static_cast<double>(p)) * std::log1p(dlt.squaredNorm() / df);
  };
  auto propose = [&]() {
    Eigen::VectorXd z = std_normal(eng, p);
    double scale = std::sqrt(df / eng.chisq(df));
    return Eigen::VectorXd(mode + scale * llt.matrixU().solve(z));
  };
  Eigen::VectorXd cur = mode;
  double lp_cur = post.logpost(cur), lq_cur = log_q(cur);
  size_t accepted = 0;
  int total = cfg.n_burn + cfg.n_keep * cfg.thin;
  for (int it = 0; it < total; ++it) {
    Eigen::VectorXd prop = propose();
    double lp = post.logpost(prop), lq = log_q(prop);
    double log_r = lp - lp_cur + lq_cur - lq;
    if (std::log(eng.uniform()) < log_r) {
      cur = prop;
      lp_cur = lp;
      lq_cur = lq;
      ++accepted;
    }
    if (it >= cfg.n_burn && (it - cfg.n_burn) % cfg.thin == cfg.thin - 1) {
      GlmDraw d;
      d.link = Link::Logit;
      d.design = des;
      d.beta.assign(cur.data(), cur.data() + p);
      out.draws.push_back(std::move(d));
    }
  }
  out.accept_rate = total > 0 ? static_cast<double>(accepted) / total : 0.0;
  return out;
}

double LogitFit::prob(const double* x) const {
  double e = beta[0];
  for (size_t j = 0; j < design.keep.size(); ++j) e += beta[j + 1] * (x[design.keep[j]] - design.center[j]) / design.scale[j];
  return std::clamp(sigmoid(e), kClamp, 1.0 - kClamp);
}

LogitFit irls_logit(const Matrix& X, std::span<const double> b, std::span<const int> exclude, double ridge, int max_iter) {
  check_input(X, b.size());
  LogitFit f;
  f.design = Design::build(X, exclude);
  Eigen::MatrixXd D = design_matrix(f.design, X);
  Eigen::VectorXd bv(static_cast<Eigen::Index>(b.size()));
  for (size_t i = 0; i < b.size(); ++i) bv(static_cast<Eigen::Index>(i)) = b[i];
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(D.cols());
  newton_mode(D, bv, ridge, beta, max_iter, f.converged, f.iterations);
  f.beta.assign(beta.data(), beta.data() + beta.size());
  return f;
}

}  // namespace sace::glm
