#include "bsde/basis.hpp"

#include <algorithm>
#include <cmath>

#include "bsde/errors.hpp"

namespace bsde {

double MartingaleBasis::increment(const FiniteFilteredSpace& space, int k, int omega,
                                  int i) const {
  const int parent = space.cell_of(k - 1, omega);
  const Node& nd = node(k, parent);
  if (i >= static_cast<int>(nd.vectors.size())) return 0.0;
  const int slot = space.child_slot(k, space.cell_of(k, omega));
  return nd.vectors[static_cast<std::size_t>(i)][static_cast<std::size_t>(slot)];
}

double MartingaleBasis::expected_qv1_step(const FiniteFilteredSpace& space, int k) const {
  double acc = 0.0;
  const auto& parents = space.cells(k - 1);
  for (std::size_t p = 0; p < parents.size(); ++p) {
    const Node& nd = node(k, static_cast<int>(p));
    if (!nd.qv.empty())
      acc += space.cell_prob(k - 1, static_cast<int>(p)) * nd.qv[0];
  }
  return acc;
}

MartingaleBasis build_martingale_basis(const FiniteFilteredSpace& space) {
  MartingaleBasis basis;
  const int n = space.steps();
  basis.nodes.resize(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    const auto n_parents = space.cells(k - 1).size();
    basis.nodes[static_cast<std::size_t>(k - 1)].resize(n_parents);
    for (std::size_t parent = 0; parent < n_parents; ++parent) {
      const auto& q = space.child_cond_prob(k, static_cast<int>(parent));
      const int m = static_cast<int>(q.size());
      MartingaleBasis::Node& nd =
          basis.nodes[static_cast<std::size_t>(k - 1)][parent];
      if (m <= 1) continue;

      // Haar seeds: seed i is 1 on children 0..i-1 and balances on child i.
      // These are already conditionally orthogonal; the Gram-Schmidt sweep
      // removes only rounding-level components of earlier vectors.
      double lead_prob = q[0];
      for (int i = 1; i < m; ++i) {
        std::vector<double> v(static_cast<std::size_t>(m), 0.0);
        for (int c = 0; c < i; ++c) v[static_cast<std::size_t>(c)] = 1.0;
        v[static_cast<std::size_t>(i)] = -lead_prob / q[static_cast<std::size_t>(i)];
        for (const auto& prev : nd.vectors) {
          double num = 0.0, den = 0.0;
          for (int c = 0; c < m; ++c) {
            num += q[static_cast<std::size_t>(c)] * v[static_cast<std::size_t>(c)] *
                   prev[static_cast<std::size_t>(c)];
            den += q[static_cast<std::size_t>(c)] * prev[static_cast<std::size_t>(c)] *
                   prev[static_cast<std::size_t>(c)];
          }
          const double coeff = num / den;
          for (int c = 0; c < m; ++c)
            v[static_cast<std::size_t>(c)] -= coeff * prev[static_cast<std::size_t>(c)];
        }
        double qv = 0.0;
        for (int c = 0; c < m; ++c)
          qv += q[static_cast<std::size_t>(c)] * v[static_cast<std::size_t>(c)] *
                v[static_cast<std::size_t>(c)];
        nd.vectors.push_back(std::move(v));
        nd.qv.push_back(qv);
        lead_prob += q[static_cast<std::size_t>(i)];
      }
      basis.d = std::max(basis.d, m - 1);
    }
  }
  return basis;
}

PredictableProcess represent(const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                             const AdaptedProcess& n_process, double martingale_tol) {
  const int K = n_process.K;
  const int n = space.steps();
  PredictableProcess z = make_predictable(space, K, basis.d);

  for (int k = 1; k <= n; ++k) {
    const auto prev = conditional_expectation(
        space, std::span<const double>(n_process.values[static_cast<std::size_t>(k)]), K,
        k - 1);
    for (int omega = 0; omega < space.n_outcomes(); ++omega) {
      for (int j = 0; j < K; ++j) {
        const double resid =
            prev[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
                 static_cast<std::size_t>(j)] -
            n_process.at(k - 1, omega)[static_cast<std::size_t>(j)];
        if (std::abs(resid) > martingale_tol)
          throw NotAMartingale("conditional mean residual " + std::to_string(resid) +
                               " at step " + std::to_string(k));
      }
    }

    const auto& parents = space.cells(k - 1);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const MartingaleBasis::Node& nd = basis.node(k, static_cast<int>(p));
      if (nd.vectors.empty()) continue;
      const auto& kids = space.children(k, static_cast<int>(p));
      const auto& q = space.child_cond_prob(k, static_cast<int>(p));
      const int rep = parents[p][0];

      // dN per child slot and component.
      std::vector<double> dn(kids.size() * static_cast<std::size_t>(K));
      for (std::size_t s = 0; s < kids.size(); ++s) {
        const int child_rep = space.cells(k)[static_cast<std::size_t>(kids[s])][0];
        for (int j = 0; j < K; ++j)
          dn[s * static_cast<std::size_t>(K) + static_cast<std::size_t>(j)] =
              n_process.at(k, child_rep)[static_cast<std::size_t>(j)] -
              n_process.at(k - 1, rep)[static_cast<std::size_t>(j)];
      }

      std::vector<double> zblock(static_cast<std::size_t>(K) *
                                     static_cast<std::size_t>(basis.d),
                                 0.0);
      for (std::size_t i = 0; i < nd.vectors.size(); ++i) {
        if (!(nd.qv[i] > 0.0)) continue;
        for (int j = 0; j < K; ++j) {
          double num = 0.0;
          for (std::size_t s = 0; s < kids.size(); ++s)
            num += q[s] * dn[s * static_cast<std::size_t>(K) + static_cast<std::size_t>(j)] *
                   nd.vectors[i][s];
          zblock[static_cast<std::size_t>(j) * static_cast<std::size_t>(basis.d) + i] =
              num / nd.qv[i];
        }
      }
      for (int omega : parents[p]) {
        auto dst = z.at(k, omega);
        std::copy(zblock.begin(), zblock.end(), dst.begin());
      }
    }
  }
  return z;
}

StieltjesFunction reference_clock(const FiniteFilteredSpace& space,
                                  const MartingaleBasis& basis) {
  const int n = space.steps();
  double total_qv = 0.0;
  std::vector<double> step_qv(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    step_qv[static_cast<std::size_t>(k - 1)] = basis.expected_qv1_step(space, k);
    total_qv += step_qv[static_cast<std::size_t>(k - 1)];
  }
  const double denom = total_qv + space.grid().horizon();
  std::vector<double> cont(static_cast<std::size_t>(n)), atoms(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    cont[static_cast<std::size_t>(k - 1)] = space.grid().dt(k) / denom;
    atoms[static_cast<std::size_t>(k - 1)] = step_qv[static_cast<std::size_t>(k - 1)] / denom;
  }
  return StieltjesFunction(space.grid(), std::move(cont), std::move(atoms),
                           JumpBounds{.nonnegative = true});
}

std::vector<double> node_densities(const FiniteFilteredSpace& space,
                                   const MartingaleBasis& basis,
                                   const StieltjesFunction& clock, int k, int parent) {
  (void)space;
  const MartingaleBasis::Node& nd = basis.node(k, parent);
  const double dmu = clock.atom(k);
  std::vector<double> psi(static_cast<std::size_t>(basis.d), 0.0);
  for (std::size_t i = 0; i < nd.qv.size(); ++i) {
    if (nd.qv[i] > 0.0) {
      if (!(dmu != 0.0))
        throw UndefinedDensity("clock has no atom at step " + std::to_string(k) +
                               " but <M> does");
      psi[i] = nd.qv[i] / dmu;
    }
  }
  return psi;
}

double m_seminorm_sq(std::span<const double> z, int K, std::span<const double> psi) {
  const int d = static_cast<int>(psi.size());
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    if (psi[static_cast<std::size_t>(i)] == 0.0) continue;
    double col = 0.0;
    for (int j = 0; j < K; ++j) {
      const double v = z[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) +
                         static_cast<std::size_t>(i)];
      col += v * v;
    }
    acc += col * psi[static_cast<std::size_t>(i)];
  }
  return acc;
}

double h2_norm_sq(const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                  const StieltjesFunction& clock, const PredictableProcess& z) {
  if (clock.grid() != space.grid()) throw SpaceMismatch("clock grid differs from space grid");
  double acc = 0.0;
  for (int k = 1; k <= space.steps(); ++k) {
    const double dmu = clock.atom(k);
    const auto& parents = space.cells(k - 1);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto psi = node_densities(space, basis, clock, k, static_cast<int>(p));
      if (dmu == 0.0) continue;
      const int rep = parents[p][0];
      acc += space.cell_prob(k - 1, static_cast<int>(p)) *
             m_seminorm_sq(z.at(k, rep), z.K, psi) * dmu;
    }
  }
  return acc;
}

std::vector<double> stochastic_integral(const FiniteFilteredSpace& space,
                                        const MartingaleBasis& basis,
                                        const PredictableProcess& z, int from, int to) {
  const int K = z.K;
  std::vector<double> out(static_cast<std::size_t>(space.n_outcomes()) *
                              static_cast<std::size_t>(K),
                          0.0);
  for (int omega = 0; omega < space.n_outcomes(); ++omega) {
    for (int k = from + 1; k <= to; ++k) {
      const auto zb = z.at(k, omega);
      for (int i = 0; i < z.d; ++i) {
        const double dm = basis.increment(space, k, omega, i);
        if (dm == 0.0) continue;
        for (int j = 0; j < K; ++j)
          out[static_cast<std::size_t>(omega) * static_cast<std::size_t>(K) +
              static_cast<std::size_t>(j)] +=
              zb[static_cast<std::size_t>(j) * static_cast<std::size_t>(z.d) +
                 static_cast<std::size_t>(i)] *
              dm;
      }
    }
  }
  return out;
}

}  // namespace bsde
