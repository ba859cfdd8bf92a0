#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "vfpns/fields.hpp"

// Bounded-Lipschitz distance between discrete measures,
//   d_BL(mu, nu) = sup { integral of phi d(mu - nu) : ||phi||_inf + Lip(phi) <= 1 },
// on metric spaces given as weighted graphs whose geodesics realize the metric.
// Three solvers cross-validate each other: a projected subgradient ascent
// (bl_distance, any size), an exact parametric min-cost-flow solver on the sparse
// graph (bl_exact, any size), and an exact all-pairs reference (bl_oracle, small
// instances only).

namespace vfpns {

// Undirected weighted graph; the metric between nodes is the graph geodesic.
struct MetricGraph {
  struct Edge {
    int a;
    int b;
    double w;
  };
  int nodes = 0;
  std::vector<Edge> edges;
};

// Spatial torus cells under the L1 torus metric (axis neighbors, wraparound),
// optionally block-coarsened: nodes are blocks of block x block cells.
MetricGraph torus_graph(const SpatialGrid& g, int block = 1);

// Phase-space nodes (x-cell, velocity-cell) under the additive product metric
// d_T(x, x') + |xi - xi'|_1: spatial neighbors at the torus spacing, velocity
// neighbors at the box spacing (no wraparound in velocity).
MetricGraph phase_graph(const SpatialGrid& g, const VelocityGrid& vg, int block_x = 1,
                        int block_v = 1);

// Nonnegative mass per node of a companion MetricGraph.
struct DiscreteMeasure {
  Eigen::ArrayXd weights;
};

// Cell masses rho h^2, summed over blocks when coarsened.
DiscreteMeasure measure_from_density(const ScalarField& rho, int block = 1);
// Phase-cell masses f h_x^2 h_v^2 on the matching phase_graph layout.
DiscreteMeasure measure_from_phase(const PhaseDensity& f, int block_x = 1, int block_v = 1);

struct LipschitzDual {
  Eigen::ArrayXd phi;
  double sup_norm_used = 0;
  double lip_const_used = 0;
  double objective = 0;
};

struct BLResult {
  double value = 0;
  LipschitzDual dual;
};

// Projected subgradient ascent with an exact penalty on the gauge
// ||phi||_inf + max_edges |dphi|/w and Polyak steps toward the budget-split flow
// value; the flow potentials warm-start the iterate. The returned phi is
// projected exactly into the constraint set, so the dual is feasible and the
// value is a guaranteed lower bound whatever the target was.
BLResult bl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const MetricGraph& g);

// Exact optimum: concave maximization over the Lipschitz budget (golden section)
// of a min-cost transshipment on the sparse graph with a mass-teleport node.
double bl_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const MetricGraph& g);

// Exact reference on <= 256 nodes: same parametric program, but routed over the
// complete geodesic-distance graph (all-pairs shortest paths), so it exercises an
// independent constraint representation.
double bl_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const MetricGraph& g);

// JSON regression fixtures: instance (graph + weights) and solution (phi, value).
nlohmann::json bl_instance_to_json(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                   const MetricGraph& g);
void bl_instance_from_json(const nlohmann::json& j, DiscreteMeasure& mu, DiscreteMeasure& nu,
                           MetricGraph& g);
nlohmann::json bl_result_to_json(const BLResult& r);

// Evolves two densities under their zero-diffusion continuity equations and
// tracks the squared-distance stability budget
//   lhs(t) = d_BL^2(rho_a(t), rho_b(t)),
//   rhs(t) = d_BL^2(rho_a(0), rho_b(0)) + int_0^t int |u_a - u_b|^2 rho_a dx ds.
struct BLStabilityReport {
  std::vector<double> t;
  std::vector<double> lhs;
  std::vector<double> rhs;
  double c_fit = 0;      // smallest C >= 0 with lhs <= e^{Ct} rhs at every record
  double ratio_min = 0;  // min over records with lhs > 0 of rhs/lhs
};

// u_a, u_b are sampled at midpoint times of each advection step (exact for
// time-constant fields). Distances use the torus graph coarsened by `block`.
BLStabilityReport bl_stability_experiment(const ScalarField& rho_a0, const ScalarField& rho_b0,
                                          const std::function<VectorField(double)>& u_a,
                                          const std::function<VectorField(double)>& u_b, double T,
                                          double dt, long record_stride = 1, int block = 1);

}  // namespace vfpns
