#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "gptight/gp_classify.hpp"
#include "gptight/numerics.hpp"
#include "gptight/plant.hpp"
#include "gptight/rng.hpp"
#include "gptight/smpc.hpp"

namespace gptight {

/// Search space Gamma = {D g~ : g~ in [lo, hi]}, discretised on a regular grid.
///
/// The GP is conditioned on reduced coordinates g~, not on D g~.
class GammaSpace {
 public:
  GammaSpace(DenseMatrix embedding, Vector lower, Vector upper, std::vector<int> resolution);

  /// The common one-dimensional space {g~ * 1 : g~ in [lo, hi]}.
  static GammaSpace scalar(Eigen::Index full_dim, double lo, double hi, int resolution);

  Eigen::Index reduced_dim() const { return lower_.size(); }
  Eigen::Index full_dim() const { return embedding_.rows(); }
  const DenseMatrix& embedding() const { return embedding_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const std::vector<int>& resolution() const { return resolution_; }

  TighteningVector embed(const Vector& reduced) const { return {embedding_ * reduced}; }
  /// Nearest grid point, per coordinate.
  Vector snap(const Vector& reduced) const;
  /// Every grid point sorted by ascending a^T D g~, ties lexicographic in g~.
  std::vector<Vector> ordered_grid(const Vector& weights) const;

 private:
  double coordinate(Eigen::Index dim, int index) const;

  DenseMatrix embedding_;
  Vector lower_;
  Vector upper_;
  std::vector<int> resolution_;
};

/// T_wait(x) from the waiting-time bound with V(x) = 1 + x^T P x / 2.
struct TwaitFromBound {
  double vartheta = 1.0;
  double varphi = 0.5;
  DenseMatrix p;
};

struct TightenerConfig {
  double delta = 0.1;
  Vector weights;  // a, length d_gamma; empty means all ones
  std::variant<long, TwaitFromBound> t_wait = 500L;
  long t_col = 5000;
  long c_rand = 100;
  long t_final = 150;
  Vector gamma0;      // reduced coordinates
  int refit_every = 1;  // hyperparameter MAP every k-th update
  HyperPrior prior;
  HyperGrid hyper_grid;
  long step_log_stride = 0;  // 0 disables the per-step training log

  void validate(const GammaSpace& space) const;
  Vector effective_weights(const GammaSpace& space) const;
};

struct UpdateRecord {
  long index = 0;        // i
  long time = 0;         // t_i
  Vector state;          // x_{t_i}
  Vector gamma_tilde;    // gamma_i chosen at this update
  bool feasible = false;  // select_gamma found a point
  bool random = false;    // gamma_i was drawn uniformly
  double psi = 0.0;
  double lambda = 0.0;
  size_t dataset_size = 0;
  long t_wait = 0;        // waiting time used for the next block
  long labels_collected = 0;  // labels contributed by the block that ended here
};

struct StepRecord {
  long time = 0;
  Vector state;
  Vector input;
  int label = 0;
  double stage_cost = 0.0;
};

struct RunTrace {
  Vector gamma0;
  long initial_t_wait = 0;
  std::vector<UpdateRecord> updates;
  std::vector<StepRecord> steps;  // thinned by step_log_stride
  std::vector<Vector> visited;    // distinct reduced gammas in visiting order
  Vector final_gamma;
  double final_probability = 0.0;  // H-hat at final_gamma
  bool final_infeasible = false;
  std::optional<LaplaceFit> final_model;
  long total_steps = 0;
};

/// First grid point (ascending a^T D g~) with predicted probability >= 1 - delta.
std::optional<Vector> select_gamma(const LaplaceFit& model, const GammaSpace& space, const TightenerConfig& cfg);

/// Uniform draw on the reduced box, snapped to the grid.
Vector random_gamma(const GammaSpace& space, RngStream& rng);

/// Online constraint-tightening loop. Each block waits T_wait steps, collects
/// T_col labels at a fixed gamma, refits the GP and picks the next gamma; a
/// uniform draw replaces the optimisation every c_rand updates and whenever it
/// is infeasible. After t_final updates the final gamma is the cheapest visited
/// gamma whose predicted probability clears 1 - delta.
RunTrace run(const LinearPlant& plant, const OcpSpec& spec, const GammaSpace& space, const TightenerConfig& cfg,
             RngStream rng, const Vector& x0);

struct ClosedLoopResult {
  double satisfaction_rate = 0.0;
  double average_cost = 0.0;
  std::vector<StepRecord> steps;  // only the counted steps, when requested
};

/// Closed loop from x0 under a fixed tightening. The first burn_in steps are
/// discarded; each counted step records l(x_t, u_t) and the label of x_t.
ClosedLoopResult evaluate_closed_loop(const LinearPlant& plant, const MpcController& controller,
                                      const TighteningVector& gamma, long horizon, long burn_in, RngStream rng,
                                      const Vector& x0, bool keep_steps = false);

double estimate_H(const LinearPlant& plant, const OcpSpec& spec, const TighteningVector& gamma, long horizon,
                  long burn_in, RngStream rng, const Vector& x0);

}  // namespace gptight
