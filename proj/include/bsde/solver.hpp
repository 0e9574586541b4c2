#pragma once

#include <span>
#include <vector>

#include "bsde/problem.hpp"

namespace bsde {

struct SolveDiagnostics {
  int outer_iterations = 0;
  int inner_iterations = 0;
  int fixed_point_iterations = 0;
  int intervals = 1;
  /// Weighted squared Z-stage residuals in iteration order, and the
  /// successive ratios recorded while the denominator sits above the
  /// rounding floor.  The two-stage scheme guarantees ratios <= 1/2.
  std::vector<double> inner_residuals;
  std::vector<double> inner_residual_ratios;
  std::vector<double> outer_residuals;
  double defect = 0.0;
};

struct BsdeSolution {
  AdaptedProcess y;
  PredictableProcess z;
  SolveDiagnostics diagnostics;
};

/// Max over outcomes and steps of the pathwise violation of
/// Y_{k-1} = Y_k + F(k, Y_{k-1}, Z_k) dmu_k - sum_i Z^i_k dM^i_k.
double pathwise_defect(const BsdeProblem& problem, const BsdeSolution& solution,
                       int terminal_step = -1);

/// Exact backward recursion: Z_k is the representation of the martingale
/// increment of Y_k, and Y_{k-1} solves the implicit per-cell equation
/// y = E[Y_k | cell] + F(k, cell, y, Z_k) dmu_k by fixed-point iteration
/// (a contraction under the quadratic firm bound).  Requires a purely atomic
/// clock.  `terminal_override`, when nonempty, replaces the problem terminal
/// at `terminal_step` (defaults to the horizon).
BsdeSolution solve_backward_oracle(const BsdeProblem& problem, double tol = 1e-12,
                                   int max_inner = 10000, int terminal_step = -1,
                                   std::span<const double> terminal_override = {});

/// Two-stage Picard scheme: the outer iteration freezes Y and solves the
/// resulting z-only driver by inner Picard iteration, each inner step being
/// an exact driver-known solve (conditional expectations plus martingale
/// representation).  Signed clocks are absolutized and clocks failing the
/// linear firm bound are rescaled internally; both transforms leave (Y, Z)
/// unchanged.  Requires a purely atomic clock and the quadratic firm bound.
BsdeSolution solve_picard(const BsdeProblem& problem, double tol = 1e-10,
                          int max_outer = 200000, int max_inner = 10000);

enum class WeightStage { Z, Y };

/// The weight measures upsilon, rho, pi from the contraction construction:
///   upsilon = int [(x^-1 - dmu)(1+w) c_t + x] dmu
///   rho     = int [1 - (x^-1 - dmu)(1+w) c] (1 - d upsilon)^-1 dmu
///   pi      = int [(x^-1 - dmu)(1+w^-1)] (1 - d upsilon)^-1 dmu
/// Z stage: w = 1, x^-1 = 1/(4c) + dmu.  Y stage: w = 3/eps and
/// x = c(1+w)/(1 + c(1+w) dmu); this multiplier (rather than c(1+2/eps))
/// makes rho vanish identically instead of going negative while keeping the
/// contraction factor below 1 - eps^2/4.  Both stages guarantee d upsilon < 1
/// and rho nondecreasing, checked and reported via MarginViolated.
struct ContractionWeights {
  WeightStage stage = WeightStage::Z;
  StieltjesFunction upsilon, rho, pi;
};

ContractionWeights contraction_weights(const StieltjesFunction& clock, double c,
                                       std::span<const double> c_t, WeightStage stage,
                                       double eps);

/// Clock rescaling nu = int lambda^-1 dmu with
/// lambda_t = (eps + 2(1+eps^-1) c dmu_t) / (2(1+eps^-1) c), driver lambda F.
/// Forces d nu < 1 and the linear firm bound c_bar_t d nu_t <= 1 - 3 eps^2/4.
/// Also returns an interval splitting of the steps with per-interval nu-mass
/// at most 1 - eta.  Requires a nonnegative purely atomic clock with
/// quadratic firm margin eps.
struct RescaleResult {
  BsdeProblem problem;
  std::vector<double> lambda;   // per step
  std::vector<int> splitting;   // step boundaries 0 = b_0 < ... < b_B = n
  double eta = 0.0;
};
RescaleResult rescale_clock(const BsdeProblem& problem, double eps);

/// Signed-clock removal: mu_bar = E[<M^1>] + t + |mu| (atomized on the grid),
/// lambda = dmu/dmu_bar with |lambda| <= 1, driver lambda F.  Solution
/// invariant, and c_t lambda^2 (dmu_bar)^2 = c_t (dmu)^2.
struct AbsolutizeResult {
  BsdeProblem problem;
  std::vector<double> lambda;  // per step
};
AbsolutizeResult absolutize_clock(const BsdeProblem& problem);

/// Checks, at every grid point t, the integrated stability estimate
///   E||dY_t||^2 E(ups~_t) + int_{]t,T]} E||dZ||^2_M E(ups~_-) drho
///     <= E||dQ||^2 E(ups~_T) + int_{]t,T]} E||d2f||^2 E(ups~_-) dpi
/// for two solved problems on the same space, with weights built from the
/// first problem's declared constants.
struct AprioriReport {
  bool holds = true;
  int first_violation_step = -1;
  double max_violation = 0.0;
};
AprioriReport verify_a_priori_bound(const BsdeProblem& p, const BsdeSolution& sol,
                                    const BsdeProblem& p_bar, const BsdeSolution& sol_bar,
                                    const ContractionWeights& weights, double tol = 1e-9);

}  // namespace bsde
