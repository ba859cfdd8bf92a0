#include "vfpns/bl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "vfpns/errors.hpp"
#include "vfpns/limit.hpp"
#include "vfpns/quadrature.hpp"

namespace vfpns {

using Eigen::ArrayXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_instance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const MetricGraph& g) {
  if (g.nodes < 1) throw ConfigError("bl: empty node set");
  if (mu.weights.size() != g.nodes || nu.weights.size() != g.nodes)
    throw ConfigError("bl: measure size does not match the graph");
  if (!mu.weights.allFinite() || !nu.weights.allFinite())
    throw ConfigError("bl: non-finite weights");
  if (mu.weights.minCoeff() < 0 || nu.weights.minCoeff() < 0)
    throw ConfigError("bl: negative mass");
  for (const auto& e : g.edges) {
    if (e.a < 0 || e.a >= g.nodes || e.b < 0 || e.b >= g.nodes || e.a == e.b)
      throw ConfigError("bl: invalid edge");
    if (!(e.w > 0) || !std::isfinite(e.w)) throw ConfigError("bl: edge weight must be positive");
  }
}

// Min-cost transshipment with infinite arc capacities, successive shortest
// paths with potentials. Supplies must sum to zero. The final potentials are
// optimal LP duals: forward arcs never saturate, so every arc keeps a forward
// residual and pi satisfies pi[v] - pi[u] <= cost(u,v) with equality on used
// arcs.
struct Mcf {
  struct Arc {
    int to;
    double cost;
    double cap;  // residual capacity
    int rev;     // index of the reverse arc in adj[to]
  };
  std::vector<std::vector<Arc>> adj;
  std::vector<double> pi;

  explicit Mcf(int n) : adj(n) {}

  void add(int a, int b, double cost) {
    adj[a].push_back({b, cost, 1e300, static_cast<int>(adj[b].size())});
    adj[b].push_back({a, -cost, 0.0, static_cast<int>(adj[a].size()) - 1});
  }

  double solve(std::vector<double> supply) {
    const int n = static_cast<int>(adj.size());
    double scale = 1.0;
    for (double s : supply) scale = std::max(scale, std::abs(s));
    const double tol = 1e-13 * scale;

    pi.assign(n, 0.0);
    std::vector<double> dist(n);
    std::vector<int> pnode(n), parc(n);
    double cost = 0;
    long rounds = 0;
    const long round_cap = 50L * n + 1000;

    while (true) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(pnode.begin(), pnode.end(), -1);
      using Item = std::pair<double, int>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      bool have_source = false;
      for (int s = 0; s < n; ++s)
        if (supply[s] > tol) {
          dist[s] = 0;
          pq.emplace(0.0, s);
          have_source = true;
        }
      if (!have_source) break;

      while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (du > dist[u]) continue;
        for (int k = 0; k < static_cast<int>(adj[u].size()); ++k) {
          const Arc& a = adj[u][k];
          if (a.cap <= tol) continue;
          double rc = a.cost + pi[u] - pi[a.to];
          if (rc < 0) rc = 0;
          const double nd = du + rc;
          if (nd < dist[a.to]) {
            dist[a.to] = nd;
            pnode[a.to] = u;
            parc[a.to] = k;
            pq.emplace(nd, a.to);
          }
        }
      }

      int t = -1;
      for (int v = 0; v < n; ++v)
        if (supply[v] < -tol && dist[v] < kInf && (t < 0 || dist[v] < dist[t])) t = v;
      if (t < 0) throw NumericalFailure("bl: flow network is infeasible");
      for (int v = 0; v < n; ++v)
        if (dist[v] < kInf) pi[v] += std::min(dist[v], dist[t]);

      double q = -supply[t];
      int v = t;
      while (pnode[v] >= 0) {
        const Arc& a = adj[pnode[v]][parc[v]];
        q = std::min(q, a.cap);
        v = pnode[v];
      }
      q = std::min(q, supply[v]);
      supply[v] -= q;
      supply[t] += q;
      v = t;
      while (pnode[v] >= 0) {
        Arc& a = adj[pnode[v]][parc[v]];
        a.cap -= q;
        adj[v][a.rev].cap += q;
        cost += q * a.cost;
        v = pnode[v];
      }
      if (++rounds > round_cap) throw NumericalFailure("bl: flow solver failed to converge");
    }
    return cost;
  }
};

// Budget value V(l) = min over {p + div y = d} of (1-l)|p|_1 + l sum w|y|:
// transshipment on the graph plus a teleport node at cost (1-l) per unit.
// If phi_out is given it receives the optimal dual test function, recovered
// from the node potentials as phi_i = pi[teleport] - pi[i].
double budget_value_sparse(const ArrayXd& d, const MetricGraph& g, double ell,
                           ArrayXd* phi_out = nullptr) {
  const int n = g.nodes;
  Mcf net(n + 1);
  for (const auto& e : g.edges) {
    net.add(e.a, e.b, ell * e.w);
    net.add(e.b, e.a, ell * e.w);
  }
  const double c = 1.0 - ell;
  for (int i = 0; i < n; ++i) {
    net.add(i, n, c);
    net.add(n, i, c);
  }
  std::vector<double> supply(n + 1, 0.0);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    supply[i] = d(i);
    total += d(i);
  }
  supply[n] = -total;
  const double value = net.solve(std::move(supply));
  if (phi_out) {
    phi_out->resize(n);
    for (int i = 0; i < n; ++i) (*phi_out)(i) = net.pi[n] - net.pi[i];
  }
  return value;
}

double budget_value_complete(const ArrayXd& d, const std::vector<double>& dist_mat, int n,
                             double ell) {
  Mcf net(n + 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dij = dist_mat[static_cast<std::size_t>(i) * n + j];
      if (dij < kInf) net.add(i, j, ell * dij);
    }
  const double c = 1.0 - ell;
  for (int i = 0; i < n; ++i) {
    net.add(i, n, c);
    net.add(n, i, c);
  }
  std::vector<double> supply(n + 1, 0.0);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    supply[i] = d(i);
    total += d(i);
  }
  supply[n] = -total;
  return net.solve(std::move(supply));
}

// Maximizes a concave function on [0, 1] by golden section; the budget value is
// concave in the Lipschitz share, so this recovers the BL optimum.
struct GoldenMax {
  double value;
  double arg;
};

template <typename F>
GoldenMax golden_max(F&& f, int iters) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0, b = 1.0;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int k = 0; k < iters; ++k) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    }
  }
  return f1 > f2 ? GoldenMax{f1, x1} : GoldenMax{f2, x2};
}

}  // namespace

MetricGraph torus_graph(const SpatialGrid& g, int block) {
  if (block < 1 || g.n_x % block != 0) throw ConfigError("torus_graph: block must divide n_x");
  const int n = g.n_x / block;
  if (n < 2) throw ConfigError("torus_graph: need at least 2 blocks per axis");
  const double w = g.h() * block;
  MetricGraph out;
  out.nodes = n * n;
  out.edges.reserve(static_cast<std::size_t>(2) * out.nodes);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int id = i + n * j;
      if (n > 2 || i == 0) out.edges.push_back({id, (i + 1) % n + n * j, w});
      if (n > 2 || j == 0) out.edges.push_back({id, i + n * ((j + 1) % n), w});
    }
  return out;
}

MetricGraph phase_graph(const SpatialGrid& g, const VelocityGrid& vg, int block_x, int block_v) {
  if (block_x < 1 || g.n_x % block_x != 0) throw ConfigError("phase_graph: block_x must divide n_x");
  if (block_v < 1 || vg.n_v % block_v != 0) throw ConfigError("phase_graph: block_v must divide n_v");
  const int nx = g.n_x / block_x;
  const int nv = vg.n_v / block_v;
  if (nx < 2 || nv < 2) throw ConfigError("phase_graph: need at least 2 blocks per axis");
  const double wx = g.h() * block_x;
  const double wv = vg.h() * block_v;
  const int xc = nx * nx;
  MetricGraph out;
  out.nodes = xc * nv * nv;
  // spatial neighbors inside each velocity slab (torus), then velocity neighbors
  // (box, no wraparound) across slabs
  for (int vcell = 0; vcell < nv * nv; ++vcell) {
    const int off = vcell * xc;
    for (int j = 0; j < nx; ++j)
      for (int i = 0; i < nx; ++i) {
        const int id = off + i + nx * j;
        if (nx > 2 || i == 0) out.edges.push_back({id, off + (i + 1) % nx + nx * j, wx});
        if (nx > 2 || j == 0) out.edges.push_back({id, off + i + nx * ((j + 1) % nx), wx});
      }
  }
  for (int b = 0; b < nv; ++b)
    for (int a = 0; a < nv; ++a) {
      const int vcell = a + nv * b;
      for (int x = 0; x < xc; ++x) {
        const int id = vcell * xc + x;
        if (a + 1 < nv) out.edges.push_back({id, (vcell + 1) * xc + x, wv});
        if (b + 1 < nv) out.edges.push_back({id, (vcell + nv) * xc + x, wv});
      }
    }
  return out;
}

DiscreteMeasure measure_from_density(const ScalarField& rho, int block) {
  if (block < 1 || rho.grid.n_x % block != 0)
    throw ConfigError("measure_from_density: block must divide n_x");
  if (!rho.values.allFinite()) throw ConfigError("measure_from_density: non-finite density");
  const int n = rho.grid.n_x / block;
  const double area = rho.grid.cell_area();
  const double floor = -1e-6 * std::max(1e-300, rho.values.abs().maxCoeff() * area);
  DiscreteMeasure out;
  out.weights = ArrayXd::Zero(static_cast<Eigen::Index>(n) * n);
  for (int j = 0; j < rho.grid.n_x; ++j)
    for (int i = 0; i < rho.grid.n_x; ++i)
      out.weights((i / block) + n * (j / block)) += rho.values(rho.grid.index(i, j)) * area;
  if (out.weights.minCoeff() < floor)
    throw ConfigError("measure_from_density: density is negative beyond ripple tolerance");
  out.weights = out.weights.max(0.0);
  return out;
}

DiscreteMeasure measure_from_phase(const PhaseDensity& f, int block_x, int block_v) {
  if (block_x < 1 || f.xg.n_x % block_x != 0)
    throw ConfigError("measure_from_phase: block_x must divide n_x");
  if (block_v < 1 || f.vg.n_v % block_v != 0)
    throw ConfigError("measure_from_phase: block_v must divide n_v");
  if (!f.all_finite()) throw ConfigError("measure_from_phase: non-finite density");
  const int nx = f.xg.n_x / block_x;
  const int nv = f.vg.n_v / block_v;
  const int xc = nx * nx;
  const double vol = f.xg.cell_area() * f.vg.cell_area();
  DiscreteMeasure out;
  out.weights = ArrayXd::Zero(static_cast<Eigen::Index>(xc) * nv * nv);
  for (int b = 0; b < f.vg.n_v; ++b)
    for (int a = 0; a < f.vg.n_v; ++a) {
      const int vnode = (a / block_v) + nv * (b / block_v);
      const auto col = f.values.col(f.vg.index(a, b));
      for (int j = 0; j < f.xg.n_x; ++j)
        for (int i = 0; i < f.xg.n_x; ++i)
          out.weights(vnode * xc + (i / block_x) + nx * (j / block_x)) +=
              col(f.xg.index(i, j)) * vol;
    }
  const double floor = -1e-6 * std::max(1e-300, out.weights.abs().maxCoeff());
  if (out.weights.minCoeff() < floor)
    throw ConfigError("measure_from_phase: density is negative beyond ripple tolerance");
  out.weights = out.weights.max(0.0);
  return out;
}

double bl_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const MetricGraph& g) {
  validate_instance(mu, nu, g);
  const ArrayXd d = mu.weights - nu.weights;
  if (d.abs().sum() < 1e-15) return 0.0;
  return golden_max([&](double ell) { return budget_value_sparse(d, g, ell); }, 64).value;
}

double bl_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const MetricGraph& g) {
  validate_instance(mu, nu, g);
  if (g.nodes > 256) throw ConfigError("bl_oracle: limited to 256 nodes");
  const ArrayXd d = mu.weights - nu.weights;
  if (d.abs().sum() < 1e-15) return 0.0;

  // all-pairs geodesics (Floyd-Warshall), then route over the complete graph
  const int n = g.nodes;
  std::vector<double> dist(static_cast<std::size_t>(n) * n, kInf);
  for (int i = 0; i < n; ++i) dist[static_cast<std::size_t>(i) * n + i] = 0;
  for (const auto& e : g.edges) {
    auto& ab = dist[static_cast<std::size_t>(e.a) * n + e.b];
    ab = std::min(ab, e.w);
    auto& ba = dist[static_cast<std::size_t>(e.b) * n + e.a];
    ba = std::min(ba, e.w);
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const double dik = dist[static_cast<std::size_t>(i) * n + k];
      if (dik == kInf) continue;
      for (int j = 0; j < n; ++j) {
        const double v = dik + dist[static_cast<std::size_t>(k) * n + j];
        auto& ij = dist[static_cast<std::size_t>(i) * n + j];
        if (v < ij) ij = v;
      }
    }
  return golden_max([&](double ell) { return budget_value_complete(d, dist, n, ell); }, 64).value;
}

BLResult bl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const MetricGraph& g) {
  validate_instance(mu, nu, g);
  const int n = g.nodes;
  BLResult res;
  res.dual.phi = ArrayXd::Zero(n);

  // canonical order makes bl_distance(mu, nu) == bl_distance(nu, mu) bitwise
  const DiscreteMeasure* a = &mu;
  const DiscreteMeasure* b = &nu;
  for (int i = 0; i < n; ++i) {
    if (mu.weights(i) == nu.weights(i)) continue;
    if (mu.weights(i) < nu.weights(i)) std::swap(a, b);
    break;
  }
  const ArrayXd d = a->weights - b->weights;
  const double dsum = d.abs().sum();
  if (dsum < 1e-15) return res;
  const ArrayXd dn = d * (2.0 / dsum);  // normalize so the constants below are scale-free
  const double M = 4.0;                 // exact penalty: the optimum never exceeds |dn|_1 = 2

  // gauge s(phi) = |phi|_inf + max_e |dphi|/w and its active elements
  int imax = 0, emax = -1;
  double sup = 0, lip = 0;
  auto gauge = [&](const ArrayXd& phi) {
    imax = 0;
    sup = 0;
    for (int i = 0; i < n; ++i) {
      const double v = std::abs(phi(i));
      if (v > sup) {
        sup = v;
        imax = i;
      }
    }
    emax = -1;
    lip = 0;
    for (int e = 0; e < static_cast<int>(g.edges.size()); ++e) {
      const auto& ed = g.edges[e];
      const double v = std::abs(phi(ed.a) - phi(ed.b)) / ed.w;
      if (v > lip) {
        lip = v;
        emax = e;
      }
    }
    return sup + lip;
  };

  // Polyak steps with a known target: the saddle value of the budget-split flow
  // formulation, whose node potentials also warm-start the iterate. The ascent
  // still has to realize the target with a feasible test function, so the
  // reported value is a certified lower bound no matter where the target came
  // from.
  ArrayXd phi(n);
  const GoldenMax saddle =
      golden_max([&](double ell) { return budget_value_sparse(dn, g, ell); }, 64);
  const double target = std::max(saddle.value, budget_value_sparse(dn, g, saddle.arg, &phi));
  const double stop_gap = 5e-9 * std::max(1.0, target);

  ArrayXd best_phi = ArrayXd::Zero(n);
  double best = 0;
  ArrayXd grad(n);

  for (long it = 0; it < 100000; ++it) {
    if (!phi.allFinite()) phi = best_phi;
    const double s = gauge(phi);
    const double obj = (dn * phi).sum();
    const double scale = std::max(1.0, s);
    const double val = obj / scale;
    if (val > best) {
      best = val;
      best_phi = phi / scale;
    }
    if (target - best <= stop_gap) break;
    const double F = obj - M * std::max(0.0, s - 1.0);
    const double gap = std::max(target - F, 1e-16);

    // average the penalty subgradient over all near-active gauge elements
    // (threshold tied to the remaining Polyak gap) to tame the zig-zag
    grad = dn;
    if (s > 1.0) {
      const double eps = 0.25 * gap / M;
      if (sup > eps) {
        int nc = 0;
        for (int i = 0; i < n; ++i) nc += std::abs(phi(i)) >= sup - eps;
        const double uc = M / nc;
        for (int i = 0; i < n; ++i)
          if (std::abs(phi(i)) >= sup - eps) grad(i) -= uc * (phi(i) >= 0 ? 1.0 : -1.0);
      }
      if (lip > eps) {
        int ne = 0;
        for (const auto& ed : g.edges) ne += std::abs(phi(ed.a) - phi(ed.b)) / ed.w >= lip - eps;
        const double ue = M / ne;
        for (const auto& ed : g.edges) {
          if (std::abs(phi(ed.a) - phi(ed.b)) / ed.w < lip - eps) continue;
          const double sg = (phi(ed.a) >= phi(ed.b) ? 1.0 : -1.0) * ue / ed.w;
          grad(ed.a) -= sg;
          grad(ed.b) += sg;
        }
      }
    }
    const double g2 = grad.matrix().squaredNorm();
    if (g2 < 1e-30) break;
    phi += (gap / g2) * grad;
  }

  const double s = gauge(best_phi);
  if (s > 1.0) best_phi /= s;
  gauge(best_phi);
  res.value = (d * best_phi).sum();
  res.dual.phi = std::move(best_phi);
  res.dual.sup_norm_used = sup;
  res.dual.lip_const_used = lip;
  res.dual.objective = res.value;
  return res;
}

nlohmann::json bl_instance_to_json(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                   const MetricGraph& g) {
  validate_instance(mu, nu, g);
  nlohmann::json j;
  j["nodes"] = g.nodes;
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges) edges.push_back({e.a, e.b, e.w});
  j["mu"] = std::vector<double>(mu.weights.begin(), mu.weights.end());
  j["nu"] = std::vector<double>(nu.weights.begin(), nu.weights.end());
  return j;
}

void bl_instance_from_json(const nlohmann::json& j, DiscreteMeasure& mu, DiscreteMeasure& nu,
                           MetricGraph& g) {
  for (const char* key : {"nodes", "edges", "mu", "nu"})
    if (!j.contains(key)) throw ConfigError(std::string("bl instance: missing key ") + key);
  g.nodes = j.at("nodes").get<int>();
  g.edges.clear();
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 3) throw ConfigError("bl instance: bad edge entry");
    g.edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
  }
  const auto wm = j.at("mu").get<std::vector<double>>();
  const auto wn = j.at("nu").get<std::vector<double>>();
  mu.weights = Eigen::Map<const ArrayXd>(wm.data(), static_cast<Eigen::Index>(wm.size()));
  nu.weights = Eigen::Map<const ArrayXd>(wn.data(), static_cast<Eigen::Index>(wn.size()));
  validate_instance(mu, nu, g);
}

nlohmann::json bl_result_to_json(const BLResult& r) {
  nlohmann::json j;
  j["value"] = r.value;
  j["phi"] = std::vector<double>(r.dual.phi.begin(), r.dual.phi.end());
  j["sup_norm_used"] = r.dual.sup_norm_used;
  j["lip_const_used"] = r.dual.lip_const_used;
  j["objective"] = r.dual.objective;
  return j;
}

BLStabilityReport bl_stability_experiment(const ScalarField& rho_a0, const ScalarField& rho_b0,
                                          const std::function<VectorField(double)>& u_a,
                                          const std::function<VectorField(double)>& u_b, double T,
                                          double dt, long record_stride, int block) {
  if (!(rho_a0.grid == rho_b0.grid)) throw ConfigError("bl_stability: grid mismatch");
  if (!(dt > 0)) throw ConfigError("bl_stability: dt must be positive");
  if (record_stride < 1) throw ConfigError("bl_stability: record_stride must be >= 1");
  const long n = std::lround(T / dt);
  if (n < 1 || std::abs(n * dt - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("bl_stability: T must be an integer multiple of dt");

  const MetricGraph graph = torus_graph(rho_a0.grid, block);
  ScalarField a = rho_a0, b = rho_b0;
  double work = 0;  // int_0^t int |u_a - u_b|^2 rho_a
  BLStabilityReport rep;

  auto record = [&](double t) {
    const double v =
        bl_exact(measure_from_density(a, block), measure_from_density(b, block), graph);
    rep.t.push_back(t);
    rep.lhs.push_back(v * v);
    rep.rhs.push_back(rep.lhs.front() + work);
  };

  record(0.0);
  for (long k = 0; k < n; ++k) {
    const double tm = (k + 0.5) * dt;
    const VectorField ua = u_a(tm);
    const VectorField ub = u_b(tm);
    if (!(ua.grid == a.grid) || !(ub.grid == a.grid))
      throw ConfigError("bl_stability: velocity grid mismatch");
    work += dt * (((ua.x - ub.x).square() + (ua.y - ub.y).square()) * a.values).sum() *
            a.grid.cell_area();
    a = advect_step(a, ua, dt);
    b = advect_step(b, ub, dt);
    if ((k + 1) % record_stride == 0 || k + 1 == n) record((k + 1) * dt);
  }

  rep.c_fit = 0;
  rep.ratio_min = kInf;
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    if (rep.lhs[k] > 1e-14) rep.ratio_min = std::min(rep.ratio_min, rep.rhs[k] / rep.lhs[k]);
    if (rep.t[k] > 0 && rep.lhs[k] > rep.rhs[k] && rep.rhs[k] > 1e-14)
      rep.c_fit = std::max(rep.c_fit, std::log(rep.lhs[k] / rep.rhs[k]) / rep.t[k]);
  }
  return rep;
}

}  // namespace vfpns
