#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gptight/numerics.hpp"

namespace gptight {

/// k(a, b) = psi^{-1} exp(-lambda^2 / 2 ||a - b||^2).
///
/// psi is the reciprocal signal variance and lambda the reciprocal lengthscale.
struct SeKernel {
  double psi = 1.0;
  double lambda = 1.0;

  double operator()(const Vector& a, const Vector& b) const;
  void validate() const;
};

/// Gaussian priors on log(psi) and log(lambda). A std of +infinity gives a
/// flat (improper) prior on that coordinate.
struct HyperPrior {
  double log_psi_mean = -1.0;
  double log_psi_std = 1.0;
  double log_lambda_mean = 0.0;
  double log_lambda_std = 1.0;

  double log_density(double log_psi, double log_lambda) const;
};

/// Binomially aggregated Bernoulli observations, one entry per distinct input.
struct ClassificationDataset {
  std::vector<Vector> inputs;
  std::vector<long> trials;
  std::vector<long> successes;

  size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  long total_trials() const;

  /// Adds counts to the entry whose input equals `input` exactly, or appends one.
  void add(const Vector& input, long n, long k);
  /// Throws ValidationError on k > n, n < 1, or repeated inputs.
  void validate() const;
};

struct LabeledSample {
  Vector input;
  int label = 0;
};

/// Groups labels by exact input equality, keeping first-appearance order.
ClassificationDataset aggregate(std::span<const LabeledSample> raw);

/// Probit link s(z) = (1 + erf(z)) / 2.
double sigmoid(double z);
/// log s(z), accurate far into the lower tail.
double log_sigmoid(double z);
/// d/dz log s(z).
double dlog_sigmoid(double z);

DenseMatrix gram(const SeKernel& kernel, std::span<const Vector> inputs);

/// Binomial log-likelihood without the binomial coefficient, and its first
/// two derivatives with respect to the latent value f.
struct BinomialTerms {
  double value;
  double d1;
  double d2;
};
BinomialTerms binomial_log_likelihood(long n, long k, double f);

/// log p(y | f) - 0.5 f^T K^{-1} f for the latent vector f.
double log_posterior(const ClassificationDataset& data, const DenseMatrix& k_inverse, const Vector& f);
Vector log_posterior_gradient(const ClassificationDataset& data, const DenseMatrix& k_inverse, const Vector& f);
DenseMatrix log_posterior_hessian(const ClassificationDataset& data, const DenseMatrix& k_inverse,
                                  const Vector& f);

/// Laplace approximation of the latent posterior at its mode.
struct LaplaceFit {
  std::vector<Vector> inputs;
  std::vector<long> trials;
  std::vector<long> successes;
  SeKernel kernel;
  Vector mode;           // f-hat
  Vector w;              // negative log-likelihood curvature at the mode
  Vector likelihood_grad;  // d log p(y|f) / df at the mode
  DenseMatrix b_factor;  // lower Cholesky factor of I + W^1/2 K W^1/2
  double log_marginal_likelihood = 0.0;
  double gradient_norm = 0.0;  // ||grad log posterior||_inf at the mode
  int newton_steps = 0;
};

struct LaplaceOptions {
  int max_newton_steps = 100;
  double gradient_tolerance = 1e-8;
};

/// Newton's method with backtracking on the log posterior. Stops once the
/// gradient is below gradient_tolerance, or below 1e-10 of the likelihood
/// gradient scale when counts are large. Throws NonConvergenceError after
/// max_newton_steps.
LaplaceFit laplace_fit(const ClassificationDataset& data, const SeKernel& kernel,
                       const LaplaceOptions& options = {});

struct Prediction {
  double latent_mean;
  double latent_var;
  double probability;
};

/// Probability uses the closed form E[s(f)] = s(mean / sqrt(1 + 2 var)).
Prediction predict(const LaplaceFit& fit, const Vector& input);

struct HyperGrid {
  int points_per_axis = 21;
  double half_width = 4.0;  // in log units around the prior means
};

/// Grid MAP of Laplace log evidence + log prior. Ties go to larger lambda,
/// then larger psi. Throws AllRejectedError if every candidate fails to fit.
SeKernel map_hyperparameters(const ClassificationDataset& data, const HyperPrior& prior,
                             const HyperGrid& grid = {});

/// Text snapshot: header, kernel, dataset triples, mode. Decimal text throughout.
void write_snapshot(std::ostream& out, const LaplaceFit& fit);
/// Reads a snapshot and refits the Laplace approximation from its contents.
LaplaceFit read_snapshot(std::istream& in);

}  // namespace gptight
