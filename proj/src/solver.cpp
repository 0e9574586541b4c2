#include "bsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsde/errors.hpp"

namespace bsde {

namespace {

void require_atomic(const StieltjesFunction& clock) {
  if (!clock.is_purely_atomic())
    throw NotStandard("solving clocks must be purely atomic on the grid; atomize first");
}

struct NodeData {
  int step;
  int parent;
  const std::vector<int>* kids;
  const std::vector<double>* cond;
  std::vector<double> psi;
};

// E[X | cell] for one component layout n_outcomes*K, restricted to a cell.
void cell_mean(const FiniteFilteredSpace& space, std::span<const double> x, int K, int k,
               int cell, std::span<double> out) {
  const auto& members = space.cells(k)[static_cast<std::size_t>(cell)];
  const double pc = space.cell_prob(k, cell);
  for (int j = 0; j < K; ++j) {
    double acc = 0.0;
    for (int omega : members)
      acc += space.prob()[static_cast<std::size_t>(omega)] *
             x[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
               static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(j)] = acc / pc;
  }
}

// Martingale-increment projection of the step-k values `xk` (per outcome,
// K components) onto the basis vectors of one node; writes the K x d block.
void project_node(const FiniteFilteredSpace& space, const MartingaleBasis& basis, int k,
                  int parent, std::span<const double> xk, std::span<const double> mean,
                  int K, std::span<double> zblock) {
  std::fill(zblock.begin(), zblock.end(), 0.0);
  const auto& nd = basis.node(k, parent);
  if (nd.vectors.empty()) return;
  const auto& kids = space.children(k, parent);
  const auto& q = space.child_cond_prob(k, parent);
  const int d = static_cast<int>(zblock.size()) / K;
  for (std::size_t i = 0; i < nd.vectors.size(); ++i) {
    if (!(nd.qv[i] > 0.0)) continue;
    for (int j = 0; j < K; ++j) {
      double num = 0.0;
      for (std::size_t s = 0; s < kids.size(); ++s) {
        const int child_rep = space.cells(k)[static_cast<std::size_t>(kids[s])][0];
        const double dn = xk[static_cast<std::size_t>(child_rep) * static_cast<std::size_t>(K) +
                             static_cast<std::size_t>(j)] -
                          mean[static_cast<std::size_t>(j)];
        num += q[s] * dn * nd.vectors[i][s];
      }
      zblock[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + i] = num / nd.qv[i];
    }
  }
}

}  // namespace

double pathwise_defect(const BsdeProblem& problem, const BsdeSolution& solution,
                       int terminal_step) {
  const auto& space = *problem.space;
  const auto& basis = *problem.basis;
  const int K = problem.K();
  const int m = terminal_step < 0 ? space.steps() : terminal_step;
  std::vector<double> f(static_cast<std::size_t>(K));
  double worst = 0.0;
  for (int k = 1; k <= m; ++k) {
    const double dmu = problem.clock.atom(k) + problem.clock.cont_mass(k);
    const auto& parents = space.cells(k - 1);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto psi = problem.densities(k, static_cast<int>(p));
      DriverNode node{k, static_cast<int>(p), basis.d, psi};
      const int rep = parents[p][0];
      problem.driver->eval(node, solution.y.at(k - 1, rep), solution.z.at(k, rep), f);
      for (int omega : parents[p]) {
        for (int j = 0; j < K; ++j) {
          double integral = 0.0;
          for (int i = 0; i < basis.d; ++i) {
            const double dm = basis.increment(space, k, omega, i);
            if (dm != 0.0)
              integral += solution.z.at(k, omega)[static_cast<std::size_t>(j) *
                                                      static_cast<std::size_t>(basis.d) +
                                                  static_cast<std::size_t>(i)] *
                          dm;
          }
          const double r = solution.y.at(k - 1, omega)[static_cast<std::size_t>(j)] -
                           solution.y.at(k, omega)[static_cast<std::size_t>(j)] -
                           f[static_cast<std::size_t>(j)] * dmu + integral;
          worst = std::max(worst, std::abs(r));
        }
      }
    }
  }
  return worst;
}

BsdeSolution solve_backward_oracle(const BsdeProblem& problem, double tol, int max_inner,
                                   int terminal_step, std::span<const double> terminal_override) {
  const auto& space = *problem.space;
  const auto& basis = *problem.basis;
  const int K = problem.K();
  const int n = space.steps();
  const int m = terminal_step < 0 ? n : terminal_step;
  require_atomic(problem.clock);
  const auto standard = check_standard(problem, StandardReport::Mode::Quadratic, 0);
  if (!standard.standard())
    throw NotStandard("quadratic firm bound or clock support violated");

  BsdeSolution sol;
  sol.y = make_adapted(space, K);
  sol.z = make_predictable(space, K, basis.d);

  std::span<const double> terminal =
      terminal_override.empty() ? std::span<const double>(problem.terminal) : terminal_override;
  if (static_cast<int>(terminal.size()) != space.n_outcomes() * K)
    throw Error("terminal value has wrong size");
  std::copy(terminal.begin(), terminal.end(),
            sol.y.values[static_cast<std::size_t>(m)].begin());

  std::vector<double> mean(static_cast<std::size_t>(K));
  std::vector<double> y(static_cast<std::size_t>(K)), ynext(static_cast<std::size_t>(K));
  std::vector<double> f(static_cast<std::size_t>(K));
  std::vector<double> zblock(static_cast<std::size_t>(K) * static_cast<std::size_t>(basis.d));

  for (int k = m; k >= 1; --k) {
    const double dmu = problem.clock.atom(k);
    const auto& parents = space.cells(k - 1);
    const std::span<const double> yk(sol.y.values[static_cast<std::size_t>(k)]);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      cell_mean(space, yk, K, k - 1, static_cast<int>(p), mean);
      project_node(space, basis, k, static_cast<int>(p), yk, mean, K, zblock);
      const auto psi = problem.densities(k, static_cast<int>(p));
      DriverNode node{k, static_cast<int>(p), basis.d, psi};

      if (dmu == 0.0) {
        y = mean;
      } else if (!problem.driver->depends_on_y()) {
        problem.driver->eval(node, mean, zblock, f);
        for (int j = 0; j < K; ++j)
          y[static_cast<std::size_t>(j)] =
              mean[static_cast<std::size_t>(j)] + f[static_cast<std::size_t>(j)] * dmu;
      } else {
        y = mean;
        bool converged = false;
        for (int it = 0; it < max_inner; ++it) {
          problem.driver->eval(node, y, zblock, f);
          double delta = 0.0;
          for (int j = 0; j < K; ++j) {
            ynext[static_cast<std::size_t>(j)] =
                mean[static_cast<std::size_t>(j)] + f[static_cast<std::size_t>(j)] * dmu;
            delta = std::max(delta, std::abs(ynext[static_cast<std::size_t>(j)] -
                                             y[static_cast<std::size_t>(j)]));
          }
          y.swap(ynext);
          ++sol.diagnostics.fixed_point_iterations;
          if (delta <= tol) {
            converged = true;
            break;
          }
        }
        if (!converged) throw NoConvergence("fixed-point", k, static_cast<int>(p));
      }

      for (int omega : parents[p]) {
        auto ydst = sol.y.at(k - 1, omega);
        std::copy(y.begin(), y.end(), ydst.begin());
        auto zdst = sol.z.at(k, omega);
        std::copy(zblock.begin(), zblock.end(), zdst.begin());
      }
    }
  }
  sol.diagnostics.defect = pathwise_defect(problem, sol, m);
  return sol;
}

namespace {

// One exact driver-known solve on the step range ]lo, hi]:
//   Y_j = E[ V + sum_{m>j} f_m dmu_m | F_j ],   Z = representation of the
// augmented martingale.  f is per (step, outcome) predictable (K values).
void solve_known_driver(const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                        const StieltjesFunction& clock, int K, int lo, int hi,
                        std::span<const double> v_terminal,
                        const std::vector<std::vector<double>>& f,
                        std::vector<std::vector<double>>& y_out,
                        std::vector<std::vector<double>>& z_out) {
  const int n_omega = space.n_outcomes();
  // Pathwise augmented terminal and running driver sums.
  std::vector<double> augmented(v_terminal.begin(), v_terminal.end());
  std::vector<std::vector<double>> partial(
      static_cast<std::size_t>(hi - lo),
      std::vector<double>(static_cast<std::size_t>(n_omega) * static_cast<std::size_t>(K)));
  for (int omega = 0; omega < n_omega; ++omega) {
    for (int j = 0; j < K; ++j) {
      double acc = 0.0;
      for (int mstep = lo + 1; mstep <= hi; ++mstep) {
        acc += f[static_cast<std::size_t>(mstep - 1)]
                [static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                 static_cast<std::size_t>(j)] *
               clock.atom(mstep);
        partial[static_cast<std::size_t>(mstep - lo - 1)]
               [static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                static_cast<std::size_t>(j)] = acc;
      }
      augmented[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                static_cast<std::size_t>(j)] += acc;
    }
  }

  // Martingale M_j = E[augmented | F_j] and its per-node projections.
  std::vector<double> m_prev = conditional_expectation(space, augmented, K, hi);
  // Y_hi = V exactly.
  std::copy(v_terminal.begin(), v_terminal.end(),
            y_out[static_cast<std::size_t>(hi)].begin());
  for (int k = hi; k >= lo + 1; --k) {
    const std::vector<double> m_here = std::move(m_prev);
    m_prev = conditional_expectation(space, m_here, K, k - 1);
    const auto& parents = space.cells(k - 1);
    std::vector<double> mean(static_cast<std::size_t>(K));
    std::vector<double> zblock(static_cast<std::size_t>(K) * static_cast<std::size_t>(basis.d));
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const int rep = parents[p][0];
      for (int j = 0; j < K; ++j)
        mean[static_cast<std::size_t>(j)] =
            m_prev[static_cast<std::size_t>(rep) * static_cast<std::size_t>(K) +
                   static_cast<std::size_t>(j)];
      project_node(space, basis, k, static_cast<int>(p), m_here, mean, K, zblock);
      for (int omega : parents[p]) {
        auto zdst = std::span<double>(z_out[static_cast<std::size_t>(k - 1)])
                        .subspan(static_cast<std::size_t>(omega) * zblock.size() /
                                     static_cast<std::size_t>(1),
                                 zblock.size());
        // z_out rows are n_omega * K * d wide.
        std::copy(zblock.begin(), zblock.end(),
                  z_out[static_cast<std::size_t>(k - 1)].begin() +
                      static_cast<std::ptrdiff_t>(static_cast<std::size_t>(omega) *
                                                  zblock.size()));
        (void)zdst;
      }
    }
    // Y_{k-1} = M_{k-1} - partial_{k-1}.
    if (k - 1 >= lo) {
      auto& dst = y_out[static_cast<std::size_t>(k - 1)];
      for (std::size_t idx = 0; idx < dst.size(); ++idx) {
        const double part =
            (k - 1 == lo) ? 0.0 : partial[static_cast<std::size_t>(k - 1 - lo - 1)][idx];
        dst[idx] = m_prev[idx] - part;
      }
    }
  }
  if (hi == lo) {
    // Degenerate range: nothing to do beyond Y_hi = V.
  }
}

struct IntervalWeights {
  std::vector<double> wz;  // per step: E(ups~_-) (1 - d ups)^-1 dmu
  std::vector<double> wy;  // per step: E(ups~_-) dmu
};

IntervalWeights stage_weights(const StieltjesFunction& clock, const Driver& driver,
                              double eps_lin) {
  const int n = clock.steps();
  IntervalWeights w;
  w.wz.assign(static_cast<std::size_t>(n) + 1, 0.0);
  w.wy.assign(static_cast<std::size_t>(n) + 1, 0.0);
  const std::vector<double> zeros(static_cast<std::size_t>(n), 0.0);
  const double c = driver.lip_z();
  if (c > 0.0) {
    const auto cw = contraction_weights(clock, c, zeros, WeightStage::Z, eps_lin);
    const auto tilde = right_jump_inversion(cw.upsilon);
    for (int k = 1; k <= n; ++k)
      w.wz[static_cast<std::size_t>(k)] = exponential_left(tilde, k) /
                                          (1.0 - cw.upsilon.atom(k)) * clock.atom(k);
  } else {
    for (int k = 1; k <= n; ++k) w.wz[static_cast<std::size_t>(k)] = clock.atom(k);
  }
  const double cy = driver.max_lip_y();
  if (cy > 0.0 && driver.depends_on_y()) {
    const auto cw = contraction_weights(clock, std::max(cy, driver.lip_z()), zeros,
                                        WeightStage::Y, eps_lin);
    const auto tilde = right_jump_inversion(cw.upsilon);
    for (int k = 1; k <= n; ++k)
      w.wy[static_cast<std::size_t>(k)] = exponential_left(tilde, k) * clock.atom(k);
  } else {
    for (int k = 1; k <= n; ++k) w.wy[static_cast<std::size_t>(k)] = clock.atom(k);
  }
  return w;
}

// Two-stage Picard iteration on the step range [lo, hi] with terminal V.
void picard_interval(const BsdeProblem& problem, int lo, int hi,
                     std::span<const double> v_terminal, const IntervalWeights& weights,
                     double tol, int max_outer, int max_inner,
                     std::vector<std::vector<double>>& y_out,
                     std::vector<std::vector<double>>& z_out, SolveDiagnostics& diag) {
  const auto& space = *problem.space;
  const auto& basis = *problem.basis;
  const auto& driver = *problem.driver;
  const int K = problem.K();
  const int n_omega = space.n_outcomes();
  const std::size_t row = static_cast<std::size_t>(n_omega) * static_cast<std::size_t>(K);
  const std::size_t zrow = row * static_cast<std::size_t>(basis.d);

  std::vector<std::vector<double>> y_cur(static_cast<std::size_t>(space.steps()) + 1),
      z_cur(static_cast<std::size_t>(space.steps()));
  for (int k = lo; k <= hi; ++k)
    y_cur[static_cast<std::size_t>(k)].assign(row, 0.0);
  for (int k = lo + 1; k <= hi; ++k)
    z_cur[static_cast<std::size_t>(k - 1)].assign(zrow, 0.0);

  // Initial approximation: the driver-free solution.
  std::vector<std::vector<double>> f(static_cast<std::size_t>(space.steps()));
  for (int k = lo + 1; k <= hi; ++k) f[static_cast<std::size_t>(k - 1)].assign(row, 0.0);
  solve_known_driver(space, basis, problem.clock, K, lo, hi, v_terminal, f, y_cur, z_cur);

  std::vector<std::vector<double>> y_frozen = y_cur;
  std::vector<std::vector<double>> y_new = y_cur, z_new = z_cur;
  std::vector<double> fval(static_cast<std::size_t>(K));

  const bool needs_outer = driver.depends_on_y();
  const bool needs_inner = driver.depends_on_z();

  for (int outer = 0;; ++outer) {
    if (outer >= max_outer) throw NoConvergence("outer", hi, -1);
    ++diag.outer_iterations;

    double prev_residual = -1.0;
    double residual_floor = 0.0;
    for (int inner = 0;; ++inner) {
      if (inner >= max_inner) throw NoConvergence("inner", hi, -1);
      ++diag.inner_iterations;

      // Predictable driver values from (y_frozen, z_cur).
      for (int k = lo + 1; k <= hi; ++k) {
        const auto& parents = space.cells(k - 1);
        auto& fk = f[static_cast<std::size_t>(k - 1)];
        for (std::size_t p = 0; p < parents.size(); ++p) {
          const auto psi = problem.densities(k, static_cast<int>(p));
          DriverNode node{k, static_cast<int>(p), basis.d, psi};
          const int rep = parents[p][0];
          driver.eval(node,
                      std::span<const double>(y_frozen[static_cast<std::size_t>(k - 1)])
                          .subspan(static_cast<std::size_t>(rep) * static_cast<std::size_t>(K),
                                   static_cast<std::size_t>(K)),
                      std::span<const double>(z_cur[static_cast<std::size_t>(k - 1)])
                          .subspan(static_cast<std::size_t>(rep) * static_cast<std::size_t>(K) *
                                       static_cast<std::size_t>(basis.d),
                                   static_cast<std::size_t>(K) * static_cast<std::size_t>(basis.d)),
                      fval);
          for (int omega : parents[p])
            for (int j = 0; j < K; ++j)
              fk[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                 static_cast<std::size_t>(j)] = fval[static_cast<std::size_t>(j)];
        }
      }

      solve_known_driver(space, basis, problem.clock, K, lo, hi, v_terminal, f, y_new, z_new);

      // Weighted squared residual of the Z update plus sup-norm change.
      double residual = 0.0;
      double sup_change = 0.0;
      for (int k = lo + 1; k <= hi; ++k) {
        const auto& parents = space.cells(k - 1);
        const auto& za = z_new[static_cast<std::size_t>(k - 1)];
        const auto& zb = z_cur[static_cast<std::size_t>(k - 1)];
        for (std::size_t p = 0; p < parents.size(); ++p) {
          const auto psi = problem.densities(k, static_cast<int>(p));
          const int rep = parents[p][0];
          const std::size_t base = static_cast<std::size_t>(rep) * static_cast<std::size_t>(K) *
                                   static_cast<std::size_t>(basis.d);
          double msq = 0.0;
          for (int i = 0; i < basis.d; ++i) {
            if (psi[static_cast<std::size_t>(i)] <= 0.0) continue;
            double col = 0.0;
            for (int j = 0; j < K; ++j) {
              const std::size_t idx = base + static_cast<std::size_t>(j) *
                                                 static_cast<std::size_t>(basis.d) +
                                      static_cast<std::size_t>(i);
              const double dv = za[idx] - zb[idx];
              col += dv * dv;
              sup_change = std::max(sup_change, std::abs(dv));
            }
            msq += col * psi[static_cast<std::size_t>(i)];
          }
          residual += space.cell_prob(k - 1, static_cast<int>(p)) * msq *
                      weights.wz[static_cast<std::size_t>(k)];
        }
      }
      diag.inner_residuals.push_back(residual);
      if (prev_residual > residual_floor)
        diag.inner_residual_ratios.push_back(residual / prev_residual);
      if (residual_floor == 0.0 && residual > 0.0) residual_floor = residual * 1e-24;
      prev_residual = residual;

      z_cur.swap(z_new);
      for (int k = lo; k <= hi; ++k)
        y_cur[static_cast<std::size_t>(k)] = y_new[static_cast<std::size_t>(k)];

      if (!needs_inner || sup_change <= tol) break;
    }

    // Outer (Y) residual against the frozen path.
    double outer_residual = 0.0;
    double sup_y = 0.0;
    for (int k = lo + 1; k <= hi; ++k) {
      const auto& ya = y_cur[static_cast<std::size_t>(k - 1)];
      const auto& yb = y_frozen[static_cast<std::size_t>(k - 1)];
      double ey = 0.0;
      for (int omega = 0; omega < n_omega; ++omega) {
        double sq = 0.0;
        for (int j = 0; j < K; ++j) {
          const double dv = ya[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                               static_cast<std::size_t>(j)] -
                            yb[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                               static_cast<std::size_t>(j)];
          sq += dv * dv;
          sup_y = std::max(sup_y, std::abs(dv));
        }
        ey += space.prob()[static_cast<std::size_t>(omega)] * sq;
      }
      outer_residual += ey * weights.wy[static_cast<std::size_t>(k)];
    }
    diag.outer_residuals.push_back(outer_residual);
    y_frozen = y_cur;
    if (!needs_outer || sup_y <= tol) break;
  }

  for (int k = lo; k <= hi; ++k)
    y_out[static_cast<std::size_t>(k)] = y_cur[static_cast<std::size_t>(k)];
  for (int k = lo + 1; k <= hi; ++k)
    z_out[static_cast<std::size_t>(k - 1)] = z_cur[static_cast<std::size_t>(k - 1)];
}

std::vector<int> greedy_splitting(const StieltjesFunction& clock, double cap) {
  std::vector<int> bounds{0};
  double mass = 0.0;
  for (int k = 1; k <= clock.steps(); ++k) {
    const double a = clock.atom(k);
    if (mass + a > cap && mass > 0.0) {
      bounds.push_back(k - 1);
      mass = 0.0;
    }
    mass += a;
  }
  bounds.push_back(clock.steps());
  return bounds;
}

}  // namespace

BsdeSolution solve_picard(const BsdeProblem& problem, double tol, int max_outer,
                          int max_inner) {
  require_atomic(problem.clock);

  // Normalisation pipeline: signed clocks are absolutized, clocks failing the
  // linear firm bound (or mu_T <= 1) are rescaled.  Neither changes (Y, Z).
  const BsdeProblem* work = &problem;
  std::vector<BsdeProblem> owned;
  owned.reserve(2);
  if (!problem.clock.is_nonnegative()) {
    auto abs_res = absolutize_clock(problem);
    owned.push_back(std::move(abs_res.problem));
    work = &owned.back();
  }
  const auto quad = check_standard(*work, StandardReport::Mode::Quadratic, 0);
  if (!quad.standard()) throw NotStandard("quadratic firm bound or clock support violated");

  std::vector<int> splitting;
  double eps_lin = 0.0;
  {
    const auto lin = check_standard(*work, StandardReport::Mode::Linear, 0);
    if (lin.standard() && lin.firm_margin > 0.0) {
      eps_lin = lin.firm_margin;
      const double max_atom = work->clock.max_atom();
      const double eta = std::min(0.1, (1.0 - max_atom) / 2.0);
      splitting = (max_atom < 1.0 && work->clock.value(work->clock.steps()) > 1.0 - eta)
                      ? greedy_splitting(work->clock, 1.0 - eta)
                      : std::vector<int>{0, work->clock.steps()};
    } else {
      auto res = rescale_clock(*work, std::min(quad.firm_margin, 0.999));
      splitting = std::move(res.splitting);
      owned.push_back(std::move(res.problem));
      work = &owned.back();
      eps_lin = check_standard(*work, StandardReport::Mode::Linear, 0).firm_margin;
    }
  }

  const int n = work->space->steps();
  const int K = work->K();
  BsdeSolution sol;
  sol.y = make_adapted(*work->space, K);
  sol.z = make_predictable(*work->space, K, work->basis->d);
  sol.diagnostics.intervals = static_cast<int>(splitting.size()) - 1;

  const IntervalWeights weights = stage_weights(work->clock, *work->driver, eps_lin);

  std::vector<std::vector<double>> y_out(static_cast<std::size_t>(n) + 1),
      z_out(static_cast<std::size_t>(n));
  std::vector<double> v(work->terminal.begin(), work->terminal.end());
  for (int b = static_cast<int>(splitting.size()) - 2; b >= 0; --b) {
    const int lo = splitting[static_cast<std::size_t>(b)];
    const int hi = splitting[static_cast<std::size_t>(b + 1)];
    picard_interval(*work, lo, hi, v, weights, tol, max_outer, max_inner, y_out, z_out,
                    sol.diagnostics);
    v = y_out[static_cast<std::size_t>(lo)];
  }

  for (int k = 0; k <= n; ++k)
    sol.y.values[static_cast<std::size_t>(k)] = y_out[static_cast<std::size_t>(k)];
  for (int k = 1; k <= n; ++k)
    sol.z.values[static_cast<std::size_t>(k - 1)] = z_out[static_cast<std::size_t>(k - 1)];

  sol.diagnostics.defect = pathwise_defect(problem, sol);
  return sol;
}

ContractionWeights contraction_weights(const StieltjesFunction& clock, double c,
                                       std::span<const double> c_t, WeightStage stage,
                                       double eps) {
  const int n = clock.steps();
  if (!clock.is_nonnegative())
    throw MarginViolated("contraction weights need a nonnegative clock");
  if (static_cast<int>(c_t.size()) != n)
    throw Error("contraction_weights: one c_t entry per step required");
  if (!(c > 0.0)) throw MarginViolated("contraction weights need c > 0");

  double w = 1.0;
  double x_flat = 0.0;  // x where dmu = 0
  if (stage == WeightStage::Z) {
    x_flat = 4.0 * c;
  } else {
    if (!(eps > 0.0)) throw MarginViolated("y-stage weights need a positive margin");
    for (int k = 1; k <= n; ++k)
      if (!(c_t[static_cast<std::size_t>(k - 1)] * clock.atom(k) <= 1.0 - eps))
        throw MarginViolated("y-stage margin c_t dmu <= 1 - eps violated at step " +
                             std::to_string(k));
    w = 3.0 / eps;
    x_flat = c * (1.0 + w);
  }

  std::vector<double> ups_c(static_cast<std::size_t>(n)), ups_a(static_cast<std::size_t>(n));
  std::vector<double> rho_c(static_cast<std::size_t>(n)), rho_a(static_cast<std::size_t>(n));
  std::vector<double> pi_c(static_cast<std::size_t>(n)), pi_a(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double ct = c_t[static_cast<std::size_t>(k - 1)];
    const double a = clock.atom(k);
    const double cm = clock.cont_mass(k);
    // x^-1 - dmu equals 1/x_flat by construction in both stages.
    const double gap = 1.0 / x_flat;
    const double x_atom = x_flat / (1.0 + x_flat * a);

    const double ups_rate_flat = gap * (1.0 + w) * ct + x_flat;
    const double ups_rate_atom = gap * (1.0 + w) * ct + x_atom;
    ups_c[static_cast<std::size_t>(k - 1)] = ups_rate_flat * cm;
    ups_a[static_cast<std::size_t>(k - 1)] = ups_rate_atom * a;
    const double dups = ups_a[static_cast<std::size_t>(k - 1)];
    if (!(dups < 1.0))
      throw MarginViolated("d upsilon >= 1 at step " + std::to_string(k));

    const double rho_rate = 1.0 - gap * (1.0 + w) * c;  // 1/2 in the z stage, 0 in the y stage
    if (rho_rate < 0.0)
      throw MarginViolated("rho decreasing at step " + std::to_string(k));
    rho_c[static_cast<std::size_t>(k - 1)] = rho_rate * cm;
    rho_a[static_cast<std::size_t>(k - 1)] = rho_rate / (1.0 - dups) * a;

    const double pi_rate = gap * (1.0 + 1.0 / w);
    pi_c[static_cast<std::size_t>(k - 1)] = pi_rate * cm;
    pi_a[static_cast<std::size_t>(k - 1)] = pi_rate / (1.0 - dups) * a;
  }

  ContractionWeights out{stage,
                         StieltjesFunction(clock.grid(), std::move(ups_c), std::move(ups_a)),
                         StieltjesFunction(clock.grid(), std::move(rho_c), std::move(rho_a)),
                         StieltjesFunction(clock.grid(), std::move(pi_c), std::move(pi_a))};
  return out;
}

RescaleResult rescale_clock(const BsdeProblem& problem, double eps) {
  require_atomic(problem.clock);
  if (!problem.clock.is_nonnegative())
    throw MarginViolated("rescale_clock needs a nonnegative clock; absolutize first");
  if (!(eps > 0.0 && eps < 1.0)) throw MarginViolated("rescale_clock needs 0 < eps < 1");
  const int n = problem.clock.steps();
  for (int k = 1; k <= n; ++k) {
    const double a = problem.clock.atom(k);
    if (!(problem.driver->lip_y(k) * a * a <= 1.0 - eps))
      throw MarginViolated("quadratic margin c_t dmu^2 <= 1 - eps violated at step " +
                           std::to_string(k));
  }

  // The construction takes c > 1 and c >= c_t without loss of generality.
  const double c_star = std::max({problem.driver->lip_z(), problem.driver->max_lip_y(), 1.0});
  const double slope = 2.0 * (1.0 + 1.0 / eps) * c_star;

  std::vector<double> lambda(static_cast<std::size_t>(n));
  std::vector<double> atoms(static_cast<std::size_t>(n));
  double max_datom = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double a = problem.clock.atom(k);
    lambda[static_cast<std::size_t>(k - 1)] = (eps + slope * a) / slope;
    atoms[static_cast<std::size_t>(k - 1)] = a / lambda[static_cast<std::size_t>(k - 1)];
    max_datom = std::max(max_datom, atoms[static_cast<std::size_t>(k - 1)]);
  }
  if (!(max_datom < 1.0)) throw MarginViolated("rescaled clock has an atom >= 1");

  StieltjesFunction nu = StieltjesFunction::purely_atomic(problem.clock.grid(), atoms,
                                                          JumpBounds{.nonnegative = true});
  DriverPtr scaled = make_scaled_driver(problem.driver, lambda);

  // Transformed firm bound per the construction: c_bar_t d nu_t <= 1 - 3 eps^2 / 4.
  for (int k = 1; k <= n; ++k) {
    const double bound = scaled->lip_y(k) * nu.atom(k);
    if (!(bound <= 1.0 - 0.75 * eps * eps + 1e-12))
      throw MarginViolated("rescaled firm bound failed at step " + std::to_string(k));
  }

  RescaleResult out{BsdeProblem(problem.space, problem.basis, std::move(nu), std::move(scaled),
                                problem.terminal),
                    std::move(lambda),
                    {},
                    0.0};
  out.eta = std::min(0.1, (1.0 - max_datom) / 2.0);
  out.splitting = greedy_splitting(out.problem.clock, 1.0 - out.eta);
  return out;
}

AbsolutizeResult absolutize_clock(const BsdeProblem& problem) {
  require_atomic(problem.clock);
  const auto& space = *problem.space;
  const int n = space.steps();
  std::vector<double> atoms(static_cast<std::size_t>(n)), lambda(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const double a = problem.clock.atom(k);
    atoms[static_cast<std::size_t>(k - 1)] = problem.basis->expected_qv1_step(space, k) +
                                             space.grid().dt(k) + std::abs(a);
    lambda[static_cast<std::size_t>(k - 1)] = a / atoms[static_cast<std::size_t>(k - 1)];
    if (std::abs(lambda[static_cast<std::size_t>(k - 1)]) > 1.0)
      throw Error("absolutize_clock: |lambda| > 1");
  }
  StieltjesFunction mu_bar = StieltjesFunction::purely_atomic(
      problem.clock.grid(), std::move(atoms), JumpBounds{.nonnegative = true});
  DriverPtr scaled = make_scaled_driver(problem.driver, lambda);
  return AbsolutizeResult{BsdeProblem(problem.space, problem.basis, std::move(mu_bar),
                                      std::move(scaled), problem.terminal),
                          std::move(lambda)};
}

AprioriReport verify_a_priori_bound(const BsdeProblem& p, const BsdeSolution& sol,
                                    const BsdeProblem& p_bar, const BsdeSolution& sol_bar,
                                    const ContractionWeights& weights, double tol) {
  const auto& space = *p.space;
  if (!space.same_shape(*p_bar.space)) throw SpaceMismatch("problems live on different spaces");
  if (!(p.clock == p_bar.clock)) throw SpaceMismatch("problems use different clocks");
  require_atomic(p.clock);
  const int n = space.steps();
  const int K = p.K();
  const auto tilde = right_jump_inversion(weights.upsilon);

  // Per-step expectations of the squared differences.
  std::vector<double> ey(static_cast<std::size_t>(n) + 1, 0.0);
  for (int k = 0; k <= n; ++k) {
    double acc = 0.0;
    for (int omega = 0; omega < space.n_outcomes(); ++omega) {
      double sq = 0.0;
      for (int j = 0; j < K; ++j) {
        const double dv = sol.y.at(k, omega)[static_cast<std::size_t>(j)] -
                          sol_bar.y.at(k, omega)[static_cast<std::size_t>(j)];
        sq += dv * dv;
      }
      acc += space.prob()[static_cast<std::size_t>(omega)] * sq;
    }
    ey[static_cast<std::size_t>(k)] = acc;
  }

  std::vector<double> ez(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> ef(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> fa(static_cast<std::size_t>(K)), fb(static_cast<std::size_t>(K));
  std::vector<double> dz(static_cast<std::size_t>(K) *
                         static_cast<std::size_t>(p.basis->d));
  for (int k = 1; k <= n; ++k) {
    double accz = 0.0, accf = 0.0;
    const auto& parents = space.cells(k - 1);
    for (std::size_t pc = 0; pc < parents.size(); ++pc) {
      const auto psi = p.densities(k, static_cast<int>(pc));
      const int rep = parents[pc][0];
      const auto za = sol.z.at(k, rep);
      const auto zb = sol_bar.z.at(k, rep);
      for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = za[i] - zb[i];
      accz += space.cell_prob(k - 1, static_cast<int>(pc)) * m_seminorm_sq(dz, K, psi);

      DriverNode node{k, static_cast<int>(pc), p.basis->d, psi};
      p.driver->eval(node, sol_bar.y.at(k - 1, rep), zb, fa);
      p_bar.driver->eval(node, sol_bar.y.at(k - 1, rep), zb, fb);
      double sq = 0.0;
      for (int j = 0; j < K; ++j) {
        const double dv = fa[static_cast<std::size_t>(j)] - fb[static_cast<std::size_t>(j)];
        sq += dv * dv;
      }
      accf += space.cell_prob(k - 1, static_cast<int>(pc)) * sq;
    }
    ez[static_cast<std::size_t>(k)] = accz;
    ef[static_cast<std::size_t>(k)] = accf;
  }

  AprioriReport report;
  const double e_terminal = exponential(tilde, n);
  for (int t = 0; t <= n; ++t) {
    double lhs = ey[static_cast<std::size_t>(t)] * exponential(tilde, t);
    double rhs = ey[static_cast<std::size_t>(n)] * e_terminal;
    for (int k = t + 1; k <= n; ++k) {
      const double el = exponential_left(tilde, k);
      lhs += ez[static_cast<std::size_t>(k)] * el * weights.rho.atom(k);
      rhs += ef[static_cast<std::size_t>(k)] * el * weights.pi.atom(k);
    }
    if (lhs > rhs + tol * std::max(1.0, std::abs(rhs))) {
      report.holds = false;
      if (report.first_violation_step < 0) report.first_violation_step = t;
      report.max_violation = std::max(report.max_violation, lhs - rhs);
    }
  }
  return report;
}

}  // namespace bsde
