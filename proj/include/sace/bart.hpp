#pragma once
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sace/util.hpp"

namespace sace::bart {

enum class Link { Continuous, Probit };

struct BartConfig {
  int n_trees = 50;
  double alpha = 0.95, beta = 2.0;
  double k = 2.0;  // leaf-prior shrinkage
  double nu = 3.0, q = 0.9;
  int n_burn = 1000, n_keep = 10, thin = 1;
  uint64_t seed = 1;
  double p_grow = 0.28, p_prune = 0.28, p_change = 0.44;
  bool prior_only = false;  // likelihood switched off

  void validate() const;
};

double split_prior_prob(int depth, double alpha, double beta);

// Leaf iff feature < 0. Rule: go left when x[feature] <= cut.
struct Node {
  int feature = -1;
  double cut = 0.0;
  double value = 0.0;
  int left = -1, right = -1;
};

// nodes in preorder, root at 0
struct Tree {
  std::vector<Node> nodes;

  const Node& leaf_for(const double* x) const {
    const Node* n = &nodes[0];
    while (n->feature >= 0) n = &nodes[static_cast<size_t>(x[n->feature] <= n->cut ? n->left : n->right)];
    return *n;
  }
  double eval(const double* x) const { return leaf_for(x).value; }
  int n_leaves() const;
  int depth() const;
};

struct ForestDraw {
  Link link = Link::Continuous;
  int n_features = 0;
  double offset = 0.0, scale = 1.0;  // y = offset + scale * tree sum
  double sigma = 0.0;                // raw-scale noise sd, continuous only
  std::vector<Tree> trees;

  double tree_sum(const double* x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.eval(x);
    return s;
  }
  double mean_unchecked(const double* x) const { return offset + scale * tree_sum(x); }
  double prob_unchecked(const double* x) const;
};

double predict_mean(const ForestDraw& draw, std::span<const double> x);
double predict_prob(const ForestDraw& draw, std::span<const double> x);
constexpr double kProbClamp = 1e-12;

struct FitResult {
  std::vector<ForestDraw> draws;
  std::vector<std::string> warnings;
  double accept_rate = 0.0;
};

FitResult fit_continuous(const Matrix& X, std::span<const double> y, const BartConfig& cfg);
FitResult fit_probit(const Matrix& X, std::span<const double> b, const BartConfig& cfg);

void write_forest(std::ostream& out, const ForestDraw& draw);
ForestDraw read_forest(std::istream& in);

}  // namespace sace::bart
