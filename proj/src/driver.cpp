#include "bsde/driver.hpp"

#include <algorithm>
#include <cmath>

#include "bsde/errors.hpp"

namespace bsde {

double Driver::max_lip_y() const {
  double m = 0.0;
  for (double v : lip_y_) m = std::max(m, v);
  return m;
}

namespace {

class ZeroDriver final : public Driver {
 public:
  ZeroDriver(int K, int steps)
      : Driver(K, std::vector<double>(static_cast<std::size_t>(steps), 0.0), 0.0, false,
               false, true) {}
  void eval(const DriverNode&, std::span<const double>, std::span<const double>,
            std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  std::string kind() const override { return "zero"; }
};

class LinearCore : public Driver {
 public:
  LinearCore(int K, int steps, std::vector<double> a, std::vector<std::vector<double>> b,
             std::vector<double> g, std::vector<double> lip_y, double lip_z, bool cw)
      : Driver(K, std::move(lip_y), lip_z, has_mass(a), has_any_mass(b), cw),
        a_(std::move(a)), b_(std::move(b)), g_(std::move(g)) {
    if (static_cast<int>(a_.size()) != K * K) throw Error("linear driver: A must be K x K");
    for (const auto& bi : b_)
      if (static_cast<int>(bi.size()) != K * K) throw Error("linear driver: B_i must be K x K");
    if (g_.empty()) g_.assign(static_cast<std::size_t>(K), 0.0);
    if (static_cast<int>(g_.size()) != K) throw Error("linear driver: g must have K entries");
    if (static_cast<int>(lip_y_.size()) != steps)
      throw Error("linear driver: one lip_y constant per step required");
  }

  void eval_linear(const DriverNode& node, std::span<const double> y,
                   std::span<const double> z, std::span<double> out) const {
    const int K = K_;
    for (int j = 0; j < K; ++j) {
      double v = g_[static_cast<std::size_t>(j)];
      for (int l = 0; l < K; ++l)
        v += a_[static_cast<std::size_t>(j * K + l)] * y[static_cast<std::size_t>(l)];
      out[static_cast<std::size_t>(j)] = v;
    }
    const int nb = std::min(static_cast<int>(b_.size()), node.d);
    for (int i = 0; i < nb; ++i) {
      if (node.psi[static_cast<std::size_t>(i)] <= 0.0) continue;
      const auto& bi = b_[static_cast<std::size_t>(i)];
      for (int j = 0; j < K; ++j) {
        double v = 0.0;
        for (int l = 0; l < K; ++l)
          v += bi[static_cast<std::size_t>(j * K + l)] *
               z[static_cast<std::size_t>(l) * static_cast<std::size_t>(node.d) +
                 static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(j)] += v;
      }
    }
  }

  void eval(const DriverNode& node, std::span<const double> y, std::span<const double> z,
            std::span<double> out) const override {
    eval_linear(node, y, z, out);
  }
  std::string kind() const override { return "linear"; }

 protected:
  static bool has_mass(const std::vector<double>& m) {
    for (double v : m)
      if (v != 0.0) return true;
    return false;
  }
  static bool has_any_mass(const std::vector<std::vector<double>>& ms) {
    for (const auto& m : ms)
      if (has_mass(m)) return true;
    return false;
  }

  std::vector<double> a_;
  std::vector<std::vector<double>> b_;
  std::vector<double> g_;
};

class ClippedDriver final : public LinearCore {
 public:
  ClippedDriver(int K, int steps, std::vector<double> a, std::vector<std::vector<double>> b,
                std::vector<double> g, std::vector<double> lo, std::vector<double> hi,
                std::vector<double> lip_y, double lip_z)
      : LinearCore(K, steps, std::move(a), std::move(b), std::move(g), std::move(lip_y),
                   lip_z, false),
        lo_(std::move(lo)), hi_(std::move(hi)) {
    if (static_cast<int>(lo_.size()) != K || static_cast<int>(hi_.size()) != K)
      throw Error("clipped driver: lo/hi must have K entries");
    for (int j = 0; j < K; ++j)
      if (!(lo_[static_cast<std::size_t>(j)] <= hi_[static_cast<std::size_t>(j)]))
        throw Error("clipped driver: lo must not exceed hi");
  }

  void eval(const DriverNode& node, std::span<const double> y, std::span<const double> z,
            std::span<double> out) const override {
    eval_linear(node, y, z, out);
    for (int j = 0; j < K_; ++j)
      out[static_cast<std::size_t>(j)] =
          std::clamp(out[static_cast<std::size_t>(j)], lo_[static_cast<std::size_t>(j)],
                     hi_[static_cast<std::size_t>(j)]);
  }
  std::string kind() const override { return "clipped"; }

 private:
  std::vector<double> lo_, hi_;
};

class AbsZDriver final : public Driver {
 public:
  AbsZDriver(int steps, double alpha)
      : Driver(1, std::vector<double>(static_cast<std::size_t>(steps), 0.0), alpha * alpha,
               false, alpha != 0.0, true),
        alpha_(alpha) {}

  void eval(const DriverNode& node, std::span<const double>, std::span<const double> z,
            std::span<double> out) const override {
    double acc = 0.0;
    for (int i = 0; i < node.d; ++i) {
      const double psi = node.psi[static_cast<std::size_t>(i)];
      if (psi > 0.0) acc += psi * z[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
    }
    out[0] = alpha_ * std::sqrt(acc);
  }
  std::string kind() const override { return "abs_z"; }

 private:
  double alpha_;
};

class ComponentwiseDriver final : public Driver {
 public:
  explicit ComponentwiseDriver(std::vector<DriverPtr> components)
      : Driver(static_cast<int>(components.size()), combine_lip_y(components),
               combine_lip_z(components), any_y(components), any_z(components), true),
        components_(std::move(components)) {}

  void eval(const DriverNode& node, std::span<const double> y, std::span<const double> z,
            std::span<double> out) const override {
    std::vector<double> zrow(static_cast<std::size_t>(node.d));
    for (int j = 0; j < K_; ++j) {
      for (int i = 0; i < node.d; ++i)
        zrow[static_cast<std::size_t>(i)] =
            z[static_cast<std::size_t>(j) * static_cast<std::size_t>(node.d) +
              static_cast<std::size_t>(i)];
      components_[static_cast<std::size_t>(j)]->eval(
          node, y.subspan(static_cast<std::size_t>(j), 1), zrow,
          out.subspan(static_cast<std::size_t>(j), 1));
    }
  }
  std::string kind() const override { return "componentwise"; }

 private:
  static std::vector<double> combine_lip_y(const std::vector<DriverPtr>& cs) {
    if (cs.empty()) throw Error("componentwise driver needs at least one component");
    std::vector<double> ly = cs[0]->lip_y_all();
    for (const auto& c : cs) {
      if (c->dim() != 1) throw Error("componentwise driver components must be scalar");
      for (std::size_t k = 0; k < ly.size(); ++k)
        ly[k] = std::max(ly[k], c->lip_y_all()[k]);
    }
    return ly;
  }
  static double combine_lip_z(const std::vector<DriverPtr>& cs) {
    double c = 0.0;
    for (const auto& comp : cs) c = std::max(c, comp->lip_z());
    return c;
  }
  static bool any_y(const std::vector<DriverPtr>& cs) {
    for (const auto& c : cs)
      if (c->depends_on_y()) return true;
    return false;
  }
  static bool any_z(const std::vector<DriverPtr>& cs) {
    for (const auto& c : cs)
      if (c->depends_on_z()) return true;
    return false;
  }

  std::vector<DriverPtr> components_;
};

class ScaledDriver final : public Driver {
 public:
  ScaledDriver(DriverPtr base, std::vector<double> factors)
      : Driver(base->dim(), scaled_lip_y(*base, factors), scaled_lip_z(*base, factors),
               base->depends_on_y(), base->depends_on_z(), base->componentwise_in_y()),
        base_(std::move(base)), factors_(std::move(factors)) {}

  void eval(const DriverNode& node, std::span<const double> y, std::span<const double> z,
            std::span<double> out) const override {
    base_->eval(node, y, z, out);
    const double f = factors_[static_cast<std::size_t>(node.step - 1)];
    for (auto& v : out) v *= f;
  }
  std::string kind() const override { return "scaled:" + base_->kind(); }

 private:
  static std::vector<double> scaled_lip_y(const Driver& base, const std::vector<double>& f) {
    std::vector<double> ly = base.lip_y_all();
    if (f.size() != ly.size()) throw Error("scaled driver: one factor per step required");
    for (std::size_t k = 0; k < ly.size(); ++k) ly[k] *= f[k] * f[k];
    return ly;
  }
  static double scaled_lip_z(const Driver& base, const std::vector<double>& f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, v * v);
    return base.lip_z() * m;
  }

  DriverPtr base_;
  std::vector<double> factors_;
};

}  // namespace

DriverPtr make_zero_driver(int K, int steps) {
  return std::make_shared<ZeroDriver>(K, steps);
}

DriverPtr make_linear_driver(int K, int steps, std::vector<double> a_matrix,
                             std::vector<std::vector<double>> b_matrices,
                             std::vector<double> g, std::vector<double> lip_y, double lip_z) {
  return std::make_shared<LinearCore>(K, steps, std::move(a_matrix), std::move(b_matrices),
                                      std::move(g), std::move(lip_y), lip_z, K == 1);
}

DriverPtr make_abs_z_driver(int steps, double alpha) {
  return std::make_shared<AbsZDriver>(steps, alpha);
}

DriverPtr make_clipped_driver(int K, int steps, std::vector<double> a_matrix,
                              std::vector<std::vector<double>> b_matrices,
                              std::vector<double> g, std::vector<double> lo,
                              std::vector<double> hi, std::vector<double> lip_y,
                              double lip_z) {
  return std::make_shared<ClippedDriver>(K, steps, std::move(a_matrix), std::move(b_matrices),
                                         std::move(g), std::move(lo), std::move(hi),
                                         std::move(lip_y), lip_z);
}

DriverPtr make_componentwise_driver(std::vector<DriverPtr> components) {
  return std::make_shared<ComponentwiseDriver>(std::move(components));
}

DriverPtr make_scaled_driver(DriverPtr base, std::vector<double> factors) {
  return std::make_shared<ScaledDriver>(std::move(base), std::move(factors));
}

double derive_linear_lip_y(int K, std::span<const double> a_matrix, bool also_z) {
  double fro = 0.0;
  for (double v : a_matrix) fro += v * v;
  (void)K;
  return also_z ? 2.0 * fro : fro;
}

double derive_linear_lip_z(int K, const std::vector<std::vector<double>>& b_matrices,
                           const FiniteFilteredSpace& space, const MartingaleBasis& basis,
                           const StieltjesFunction& clock, bool also_y) {
  (void)K;
  std::vector<double> fro(b_matrices.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < b_matrices.size(); ++i) {
    for (double v : b_matrices[i]) fro[i] += v * v;
    any = any || fro[i] > 0.0;
  }
  if (!any) return 0.0;
  double worst = 0.0;
  for (int k = 1; k <= space.steps(); ++k) {
    const auto& parents = space.cells(k - 1);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto psi = node_densities(space, basis, clock, k, static_cast<int>(p));
      double node_c = 0.0;
      for (std::size_t i = 0; i < b_matrices.size() && i < psi.size(); ++i)
        if (psi[i] > 0.0) node_c += fro[i] / psi[i];
      worst = std::max(worst, node_c);
    }
  }
  return also_y ? 2.0 * worst : worst;
}

}  // namespace bsde
