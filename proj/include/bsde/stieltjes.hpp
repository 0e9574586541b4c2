#pragma once

#include <span>
#include <vector>

#include "bsde/grid.hpp"

namespace bsde {

/// Grid paths are cadlag step functions: constant on [t_k, t_{k+1}[ with the
/// value stored at index k.  Index range 0..n.
using GridPath = std::vector<double>;

struct JumpBounds {
  bool above_minus_one = false;  // require a_k > -1 + guard
  bool below_one = false;        // require a_k <  1 - guard
  bool nonnegative = false;      // require c_k >= 0 and a_k >= 0
};

/// Deterministic cadlag function of finite variation on a time grid.
///
/// Step k carries a signed mass c_k spread atomlessly over ]t_{k-1}, t_k[ and
/// a signed atom a_k sitting exactly at t_k.  nu_0 = 0 and there is no atom
/// at t_0, so nu_{t_k} = sum_{j<=k} (c_j + a_j).
class StieltjesFunction {
 public:
  static constexpr double kJumpGuard = 1e-9;

  StieltjesFunction(TimeGrid grid, std::vector<double> cont, std::vector<double> atoms,
                    JumpBounds bounds = {});

  static StieltjesFunction zero(const TimeGrid& grid);
  static StieltjesFunction purely_atomic(const TimeGrid& grid, std::vector<double> atoms,
                                         JumpBounds bounds = {});

  const TimeGrid& grid() const { return grid_; }
  int steps() const { return grid_.steps(); }

  double cont_mass(int k) const;  // c_k, k in 1..n
  double atom(int k) const;       // a_k, k in 1..n
  double step_mass(int k) const { return cont_mass(k) + atom(k); }

  double value(int k) const;       // nu_{t_k}, k in 0..n
  double left_value(int k) const;  // nu_{t_k -}

  /// nu(]t_from, t_to]).
  double mass(int from, int to) const;

  double total_variation() const;
  bool is_nonnegative() const;
  bool is_purely_atomic() const;
  double max_atom() const;
  double min_atom() const;

  /// Componentwise absolute value |nu| (Jordan decomposition per step).
  StieltjesFunction absolute() const;
  StieltjesFunction scaled(double factor) const;
  /// Moves each step's interval mass onto the atom at the step's right
  /// endpoint; the result is purely atomic with the same step masses.
  StieltjesFunction atomized() const;

  bool operator==(const StieltjesFunction&) const = default;

 private:
  TimeGrid grid_;
  std::vector<double> cont_;
  std::vector<double> atoms_;
};

/// Stieltjes exponential at t_k: exp(sum_{j<=k} c_j) * prod_{j<=k} (1 + a_j).
/// No precondition; atoms <= -1 give zero or negative values.
double exponential(const StieltjesFunction& nu, int k);

/// Stieltjes exponential at t_k -, i.e. with step k's interval mass accrued
/// but without its atom.
double exponential_left(const StieltjesFunction& nu, int k);

/// Left-jump-inversion: interval masses unchanged, atoms a -> a/(1+a).
/// Satisfies exponential(nu)^-1 = exponential(-nu_bar).
StieltjesFunction left_jump_inversion(const StieltjesFunction& nu);

/// Right-jump-inversion: interval masses unchanged, atoms a -> a/(1-a).
/// Satisfies exponential(-nu) = exponential(nu_tilde)^-1.
StieltjesFunction right_jump_inversion(const StieltjesFunction& nu);

/// Integral of the left limits of a grid path against nu over ]t_from, t_to]:
/// sum_{m=from+1..to} g_{t_{m-1}} (c_m + a_m).
double integrate(std::span<const double> g, const StieltjesFunction& nu, int from, int to);

/// Solution of u_t = u_s + int_{]s,t]} u_{r-} dnu_r, i.e. the exponential
/// flow u_k = u_{k-1} e^{c_k} (1 + a_k).  Returned path has size to-from+1
/// with u[0] = u_start.  Interval mass acts as a continuous flow inside the
/// step, so against `integrate` semantics the identity is exact only for
/// purely atomic nu; the flow-form step identity
/// u_{t_k} - u_{t_{k-1}} = u_{t_{k-1}}(e^{c_k}-1) + u_{t_k-} a_k is always exact.
GridPath solve_linear_sde(double u_start, const StieltjesFunction& nu, int from, int to);

/// Backward Gronwall bound at step t for paths satisfying
///   u_j <= alpha_j + int_{]t_j,T]} u_s dnu_s    for all j
/// (atoms weight u at the atom, interval mass weights the value on the open
/// interval).  Returns alpha_t + E(-nu_t) int_{]t,T]} E(nu~_{s-}) alpha_s dnu~_s;
/// the left-limit weight makes the constant-alpha case collapse exactly to
/// alpha E(nu~_T)/E(nu~_t).  Requires nu nonnegative with atoms < 1.
double backward_gronwall_bound(std::span<const double> alpha, const StieltjesFunction& nu,
                               int t);

/// Forward Gronwall bound at step t for paths satisfying
///   u_j <= alpha_j + int_{]0,t_j]} u_{s-} dnu_s   for all j.
/// Returns alpha_t + E(nu_t) int_{]0,t]} E(-nu_bar_{s-}) alpha_s dnu_bar_s;
/// constant-alpha case collapses to alpha E(nu_t).  Requires nu nonnegative.
double forward_gronwall_bound(std::span<const double> alpha, const StieltjesFunction& nu,
                              int t);

struct IntegratingFactorReport {
  bool hypothesis_holds = true;
  bool conclusion_holds = true;
  int first_violation_step = -1;  // step of the first failed check
  double max_violation = 0.0;
  bool pass() const { return hypothesis_holds && conclusion_holds; }
};

/// Per-step check of the integrating-factor inequality: if
///   du >= -u_- dnu + dupsilon
/// (u, upsilon jump only at grid points, so interval mass of nu requires
/// u_{k-1} c_k >= 0 and the atom part requires
/// u_k - u_{k-1} >= -u_{k-1} a_k + (upsilon_k - upsilon_{k-1})), then
///   Delta(u E(nu~))_k >= (1-a_k)^-1 E(nu~_{t_k -}) (upsilon_k - upsilon_{k-1}).
/// A failed hypothesis is reported, not an error of the inequality.
IntegratingFactorReport verify_integrating_factor(std::span<const double> u,
                                                  std::span<const double> upsilon,
                                                  const StieltjesFunction& nu,
                                                  double tol = 1e-12);

}  // namespace bsde
