#include "bsde/problem.hpp"

#include <cmath>
#include <random>

#include "bsde/errors.hpp"

namespace bsde {

namespace {

StieltjesFunction build_seminorm_clock(const FiniteFilteredSpace& space,
                                       const MartingaleBasis& basis,
                                       const StieltjesFunction& clock) {
  if (clock.is_nonnegative()) return clock;
  // Total-variation reference E[<M^1>] + t + |mu|, atomized on the grid.
  const int n = space.steps();
  std::vector<double> atoms(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k)
    atoms[static_cast<std::size_t>(k - 1)] = basis.expected_qv1_step(space, k) +
                                             space.grid().dt(k) +
                                             std::abs(clock.cont_mass(k)) +
                                             std::abs(clock.atom(k));
  return StieltjesFunction::purely_atomic(space.grid(), std::move(atoms),
                                          JumpBounds{.nonnegative = true});
}

}  // namespace

BsdeProblem::BsdeProblem(std::shared_ptr<const FiniteFilteredSpace> space_,
                         std::shared_ptr<const MartingaleBasis> basis_,
                         StieltjesFunction clock_, DriverPtr driver_,
                         std::vector<double> terminal_)
    : space(std::move(space_)),
      basis(std::move(basis_)),
      clock(std::move(clock_)),
      driver(std::move(driver_)),
      terminal(std::move(terminal_)),
      seminorm_clock_(build_seminorm_clock(*space, *basis, clock)) {
  if (clock.grid() != space->grid()) throw SpaceMismatch("clock grid differs from space grid");
  if (static_cast<int>(terminal.size()) != space->n_outcomes() * driver->dim())
    throw Error("terminal value has wrong size");
  if (static_cast<int>(driver->lip_y_all().size()) != space->steps())
    throw Error("driver lip_y must have one entry per step");
}

StandardReport check_standard(const BsdeProblem& problem, StandardReport::Mode mode,
                              int audit_samples, std::uint64_t seed) {
  const auto& space = *problem.space;
  const auto& driver = *problem.driver;
  const int n = space.steps();
  const int K = driver.dim();

  StandardReport report;
  report.mode = mode;

  // (a) E int ||F(.,0,0)||^2 d|mu| -- always finite here; reported.
  std::vector<double> zero_y(static_cast<std::size_t>(K), 0.0);
  std::vector<double> zero_z(
      static_cast<std::size_t>(K) * static_cast<std::size_t>(problem.basis->d), 0.0);
  std::vector<double> out(static_cast<std::size_t>(K));
  for (int k = 1; k <= n; ++k) {
    const double mass = std::abs(problem.clock.cont_mass(k)) + std::abs(problem.clock.atom(k));
    if (mass == 0.0) continue;
    const auto& parents = space.cells(k - 1);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto psi = problem.densities(k, static_cast<int>(p));
      DriverNode node{k, static_cast<int>(p), problem.basis->d, psi};
      driver.eval(node, zero_y, zero_z, out);
      double sq = 0.0;
      for (double v : out) sq += v * v;
      report.f00_l2 += space.cell_prob(k - 1, static_cast<int>(p)) * sq * mass;
    }
  }

  // (b) firm Lipschitz bound against the clock's atoms.
  double worst = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double a = problem.clock.atom(k);
    const double ct = driver.lip_y(k);
    worst = std::max(worst, mode == StandardReport::Mode::Linear ? ct * a : ct * a * a);
  }
  report.firm_margin = 1.0 - worst;
  report.firm_ok = worst < 1.0;
  report.horizon_ok = problem.clock.is_nonnegative() && problem.clock.value(n) <= 1.0 + 1e-12;

  // (c) mu >> <M^1>: wherever the quadratic variation carries mass the clock
  // must carry an atom.
  report.support_ok = true;
  for (int k = 1; k <= n && report.support_ok; ++k) {
    if (problem.clock.atom(k) != 0.0) continue;
    const auto& parents = space.cells(k - 1);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto& nd = problem.basis->node(k, static_cast<int>(p));
      for (double qv : nd.qv)
        if (qv > 0.0) report.support_ok = false;
    }
  }

  // (d) randomized audit of the declared constants.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> step_dist(1, n);
  const int d = problem.basis->d;
  std::vector<double> y1(static_cast<std::size_t>(K)), y2(static_cast<std::size_t>(K));
  std::vector<double> z1(static_cast<std::size_t>(K) * static_cast<std::size_t>(d));
  std::vector<double> z2(z1.size());
  std::vector<double> f1(static_cast<std::size_t>(K)), f2(static_cast<std::size_t>(K));
  for (int s = 0; s < audit_samples; ++s) {
    const int k = step_dist(rng);
    const int n_parents = static_cast<int>(space.cells(k - 1).size());
    std::uniform_int_distribution<int> cell_dist(0, n_parents - 1);
    const int p = cell_dist(rng);
    const auto psi = problem.densities(k, p);
    for (auto& v : y1) v = unif(rng);
    for (auto& v : y2) v = unif(rng);
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < d; ++i) {
        const double active = (i < static_cast<int>(psi.size()) && psi[static_cast<std::size_t>(i)] > 0.0)
                                  ? 1.0
                                  : 0.0;
        z1[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) +
           static_cast<std::size_t>(i)] = active * unif(rng);
        z2[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) +
           static_cast<std::size_t>(i)] = active * unif(rng);
      }
    DriverNode node{k, p, d, psi};
    driver.eval(node, y1, z1, f1);
    driver.eval(node, y2, z2, f2);
    double df = 0.0, dy = 0.0;
    for (int j = 0; j < K; ++j) {
      const double v = f1[static_cast<std::size_t>(j)] - f2[static_cast<std::size_t>(j)];
      df += v * v;
      const double u = y1[static_cast<std::size_t>(j)] - y2[static_cast<std::size_t>(j)];
      dy += u * u;
    }
    std::vector<double> dz(z1.size());
    for (std::size_t i = 0; i < z1.size(); ++i) dz[i] = z1[i] - z2[i];
    const double dzm = m_seminorm_sq(dz, K, psi);
    const double denom = driver.lip_y(k) * dy + driver.lip_z() * dzm;
    if (denom > 0.0)
      report.worst_audit_ratio = std::max(report.worst_audit_ratio, df / denom);
    else if (df > 1e-24)
      report.worst_audit_ratio = std::numeric_limits<double>::infinity();
    ++report.audit_samples;
  }
  return report;
}

}  // namespace bsde
