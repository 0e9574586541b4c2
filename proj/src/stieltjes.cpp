#include "bsde/stieltjes.hpp"

#include <algorithm>
#include <cmath>

namespace bsde {

namespace {

void check_path_size(std::span<const double> p, int n, const char* what) {
  if (static_cast<int>(p.size()) != n + 1)
    throw Error(std::string(what) + ": grid path must have n+1 entries");
}

}  // namespace

StieltjesFunction::StieltjesFunction(TimeGrid grid, std::vector<double> cont,
                                     std::vector<double> atoms, JumpBounds bounds)
    : grid_(std::move(grid)), cont_(std::move(cont)), atoms_(std::move(atoms)) {
  const int n = grid_.steps();
  if (static_cast<int>(cont_.size()) != n || static_cast<int>(atoms_.size()) != n)
    throw Error("Stieltjes function needs one interval mass and one atom per step");
  for (int k = 0; k < n; ++k) {
    if (!std::isfinite(cont_[k]) || !std::isfinite(atoms_[k]))
      throw Error("Stieltjes masses must be finite");
    if (bounds.nonnegative && (cont_[k] < 0.0 || atoms_[k] < 0.0))
      throw Error("Stieltjes function declared nonnegative has negative mass at step " +
                  std::to_string(k + 1));
    if (bounds.above_minus_one && !(atoms_[k] > -1.0 + kJumpGuard))
      throw JumpAtOrBelowMinusOne("atom at step " + std::to_string(k + 1) +
                                  " violates jumps_above(-1)");
    if (bounds.below_one && !(atoms_[k] < 1.0 - kJumpGuard))
      throw JumpAtOrAboveOne("atom at step " + std::to_string(k + 1) +
                             " violates jumps_below(1)");
  }
}

StieltjesFunction StieltjesFunction::zero(const TimeGrid& grid) {
  const auto n = static_cast<std::size_t>(grid.steps());
  return StieltjesFunction(grid, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
}

StieltjesFunction StieltjesFunction::purely_atomic(const TimeGrid& grid,
                                                   std::vector<double> atoms,
                                                   JumpBounds bounds) {
  const auto n = static_cast<std::size_t>(grid.steps());
  return StieltjesFunction(grid, std::vector<double>(n, 0.0), std::move(atoms), bounds);
}

double StieltjesFunction::cont_mass(int k) const {
  if (k < 1 || k > steps()) throw IndexOutOfRange("step " + std::to_string(k));
  return cont_[static_cast<std::size_t>(k - 1)];
}

double StieltjesFunction::atom(int k) const {
  if (k < 1 || k > steps()) throw IndexOutOfRange("step " + std::to_string(k));
  return atoms_[static_cast<std::size_t>(k - 1)];
}

double StieltjesFunction::value(int k) const {
  if (k < 0 || k > steps()) throw IndexOutOfRange("step " + std::to_string(k));
  double v = 0.0;
  for (int j = 1; j <= k; ++j) v += step_mass(j);
  return v;
}

double StieltjesFunction::left_value(int k) const {
  if (k == 0) return 0.0;
  return value(k) - atom(k);
}

double StieltjesFunction::mass(int from, int to) const {
  if (from < 0 || to > steps() || from > to) throw IndexOutOfRange("mass range");
  double v = 0.0;
  for (int j = from + 1; j <= to; ++j) v += step_mass(j);
  return v;
}

double StieltjesFunction::total_variation() const {
  double v = 0.0;
  for (int k = 1; k <= steps(); ++k) v += std::abs(cont_mass(k)) + std::abs(atom(k));
  return v;
}

bool StieltjesFunction::is_nonnegative() const {
  for (int k = 1; k <= steps(); ++k)
    if (cont_mass(k) < 0.0 || atom(k) < 0.0) return false;
  return true;
}

bool StieltjesFunction::is_purely_atomic() const {
  for (int k = 1; k <= steps(); ++k)
    if (cont_mass(k) != 0.0) return false;
  return true;
}

double StieltjesFunction::max_atom() const {
  double m = 0.0;
  for (int k = 1; k <= steps(); ++k) m = std::max(m, atom(k));
  return m;
}

double StieltjesFunction::min_atom() const {
  double m = 0.0;
  for (int k = 1; k <= steps(); ++k) m = std::min(m, atom(k));
  return m;
}

StieltjesFunction StieltjesFunction::absolute() const {
  std::vector<double> c(cont_.size()), a(atoms_.size());
  for (std::size_t i = 0; i < cont_.size(); ++i) {
    c[i] = std::abs(cont_[i]);
    a[i] = std::abs(atoms_[i]);
  }
  return StieltjesFunction(grid_, std::move(c), std::move(a));
}

StieltjesFunction StieltjesFunction::scaled(double factor) const {
  std::vector<double> c(cont_.size()), a(atoms_.size());
  for (std::size_t i = 0; i < cont_.size(); ++i) {
    c[i] = factor * cont_[i];
    a[i] = factor * atoms_[i];
  }
  return StieltjesFunction(grid_, std::move(c), std::move(a));
}

StieltjesFunction StieltjesFunction::atomized() const {
  std::vector<double> c(cont_.size(), 0.0), a(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) a[i] = cont_[i] + atoms_[i];
  return StieltjesFunction(grid_, std::move(c), std::move(a));
}

double exponential(const StieltjesFunction& nu, int k) {
  if (k < 0 || k > nu.steps()) throw IndexOutOfRange("step " + std::to_string(k));
  double csum = 0.0;
  double prod = 1.0;
  for (int j = 1; j <= k; ++j) {
    csum += nu.cont_mass(j);
    prod *= 1.0 + nu.atom(j);
  }
  return std::exp(csum) * prod;
}

double exponential_left(const StieltjesFunction& nu, int k) {
  if (k < 0 || k > nu.steps()) throw IndexOutOfRange("step " + std::to_string(k));
  if (k == 0) return 1.0;
  double csum = 0.0;
  double prod = 1.0;
  for (int j = 1; j < k; ++j) {
    csum += nu.cont_mass(j);
    prod *= 1.0 + nu.atom(j);
  }
  csum += nu.cont_mass(k);
  return std::exp(csum) * prod;
}

StieltjesFunction left_jump_inversion(const StieltjesFunction& nu) {
  const int n = nu.steps();
  std::vector<double> c(static_cast<std::size_t>(n)), a(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double ak = nu.atom(k);
    if (!(ak > -1.0))
      throw JumpAtOrBelowMinusOne("left-jump-inversion needs atoms > -1, step " +
                                  std::to_string(k));
    c[static_cast<std::size_t>(k - 1)] = nu.cont_mass(k);
    a[static_cast<std::size_t>(k - 1)] = ak / (1.0 + ak);
  }
  return StieltjesFunction(nu.grid(), std::move(c), std::move(a));
}

StieltjesFunction right_jump_inversion(const StieltjesFunction& nu) {
  const int n = nu.steps();
  std::vector<double> c(static_cast<std::size_t>(n)), a(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double ak = nu.atom(k);
    if (!(ak < 1.0))
      throw JumpAtOrAboveOne("right-jump-inversion needs atoms < 1, step " +
                             std::to_string(k));
    c[static_cast<std::size_t>(k - 1)] = nu.cont_mass(k);
    a[static_cast<std::size_t>(k - 1)] = ak / (1.0 - ak);
  }
  return StieltjesFunction(nu.grid(), std::move(c), std::move(a));
}

double integrate(std::span<const double> g, const StieltjesFunction& nu, int from, int to) {
  if (from < 0 || to > nu.steps() || from > to) throw IndexOutOfRange("integrate range");
  check_path_size(g, nu.steps(), "integrate");
  double v = 0.0;
  for (int m = from + 1; m <= to; ++m)
    v += g[static_cast<std::size_t>(m - 1)] * nu.step_mass(m);
  return v;
}

GridPath solve_linear_sde(double u_start, const StieltjesFunction& nu, int from, int to) {
  if (from < 0 || to > nu.steps() || from > to) throw IndexOutOfRange("solve_linear_sde range");
  GridPath u(static_cast<std::size_t>(to - from + 1));
  u[0] = u_start;
  for (int k = from + 1; k <= to; ++k) {
    const std::size_t i = static_cast<std::size_t>(k - from);
    u[i] = u[i - 1] * std::exp(nu.cont_mass(k)) * (1.0 + nu.atom(k));
  }
  return u;
}

double backward_gronwall_bound(std::span<const double> alpha, const StieltjesFunction& nu,
                               int t) {
  const int n = nu.steps();
  check_path_size(alpha, n, "backward_gronwall_bound");
  if (t < 0 || t > n) throw IndexOutOfRange("step " + std::to_string(t));
  if (!nu.is_nonnegative()) throw Error("backward Gronwall bound needs a nonnegative measure");
  const StieltjesFunction tilde = right_jump_inversion(nu);

  // Running E(nu~) built left-to-right so that E_k = E_k^- (1 + a~_k) exactly.
  double e_prev = 1.0;  // E(nu~_{t_j}) for j = current step - 1
  for (int j = 1; j <= t; ++j)
    e_prev *= std::exp(tilde.cont_mass(j)) * (1.0 + tilde.atom(j));
  const double e_t = e_prev;

  double acc = 0.0;
  for (int k = t + 1; k <= n; ++k) {
    const double e_left = e_prev * std::exp(tilde.cont_mass(k));
    acc += alpha[static_cast<std::size_t>(k - 1)] * (e_left - e_prev);
    acc += alpha[static_cast<std::size_t>(k)] * e_left * tilde.atom(k);
    e_prev = e_left * (1.0 + tilde.atom(k));
  }
  return alpha[static_cast<std::size_t>(t)] + acc / e_t;
}

double forward_gronwall_bound(std::span<const double> alpha, const StieltjesFunction& nu,
                              int t) {
  const int n = nu.steps();
  check_path_size(alpha, n, "forward_gronwall_bound");
  if (t < 0 || t > n) throw IndexOutOfRange("step " + std::to_string(t));
  if (!nu.is_nonnegative()) throw Error("forward Gronwall bound needs a nonnegative measure");
  const StieltjesFunction bar = left_jump_inversion(nu);

  // Running G = E(-nu_bar) built left-to-right; G_k = G_k^- (1 - a_bar_k).
  double g_prev = 1.0;
  double acc = 0.0;
  for (int k = 1; k <= t; ++k) {
    const double g_left = g_prev * std::exp(-bar.cont_mass(k));
    acc += alpha[static_cast<std::size_t>(k - 1)] * (g_prev - g_left);
    acc += alpha[static_cast<std::size_t>(k)] * g_left * bar.atom(k);
    g_prev = g_left * (1.0 - bar.atom(k));
  }
  double e_t = 1.0;
  for (int j = 1; j <= t; ++j) e_t *= std::exp(nu.cont_mass(j)) * (1.0 + nu.atom(j));
  return alpha[static_cast<std::size_t>(t)] + e_t * acc;
}

IntegratingFactorReport verify_integrating_factor(std::span<const double> u,
                                                  std::span<const double> upsilon,
                                                  const StieltjesFunction& nu, double tol) {
  const int n = nu.steps();
  check_path_size(u, n, "verify_integrating_factor");
  check_path_size(upsilon, n, "verify_integrating_factor");
  if (!nu.is_nonnegative()) throw Error("integrating factor check needs a nonnegative measure");
  const StieltjesFunction tilde = right_jump_inversion(nu);

  IntegratingFactorReport report;
  double e_prev = 1.0;
  for (int k = 1; k <= n; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    const double a = nu.atom(k);
    const double c = nu.cont_mass(k);
    const double du = u[i] - u[i - 1];
    const double dups = upsilon[i] - upsilon[i - 1];

    const double hyp_interval = (c != 0.0) ? u[i - 1] * c : 0.0;
    const double hyp_atom = du + u[i - 1] * a - dups;
    if (hyp_interval < -tol || hyp_atom < -tol) {
      report.hypothesis_holds = false;
      report.first_violation_step = k;
      report.max_violation = std::max(-hyp_interval, -hyp_atom);
      return report;
    }

    const double e_left = e_prev * std::exp(tilde.cont_mass(k));
    const double e_cur = e_left * (1.0 + tilde.atom(k));
    const double lhs = u[i] * e_cur - u[i - 1] * e_prev;
    const double rhs = dups * e_left / (1.0 - a);
    if (lhs < rhs - tol * std::max(1.0, std::abs(rhs))) {
      report.conclusion_holds = false;
      if (report.first_violation_step < 0) report.first_violation_step = k;
      report.max_violation = std::max(report.max_violation, rhs - lhs);
    }
    e_prev = e_cur;
  }
  return report;
}

}  // namespace bsde
