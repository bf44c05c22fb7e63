#ifndef CARNOT_MOLLIFY_HPP
#define CARNOT_MOLLIFY_HPP

#include <memory>
#include <vector>

#include "carnot/group.hpp"
#include "carnot/rng.hpp"
#include "carnot/torus.hpp"

namespace carnot {

struct SDEConfig;  // heat.hpp

// Finite atom list standing in for measures (and the measure-like part of
// dual Hoelder spaces). Atoms are stored reduced.
struct DiscreteMeasure {
    std::vector<std::pair<Point, double>> atoms;

    static DiscreteMeasure dirac(const GroupDescriptor& g, const Point& x, double w = 1.0);
    double total_mass() const;
    void reduce_atoms(const GroupDescriptor& g);
    // <mu, f>
    double pair(const ScalarField& f) const;
};

// psi_eps(x) = C eps^-Q psi(D_{1/eps} x), psi(x) = exp(1/(|x|_G^{2r!} - 1))
// inside the unit ball of the homogeneous norm, 0 outside. C normalizes the
// integral over R^n to 1 and depends only on the group.
class BumpProfile {
public:
    BumpProfile(const GroupDescriptor& g, double eps);

    double epsilon() const { return eps_; }
    double normalization() const { return C_; }
    const GroupDescriptor& group() const { return g_; }

    double eval(const Point& x) const;          // psi_eps(x)
    double eval_unit(const Point& w) const;     // C * psi(w), w in unit-ball coords

    // Fixed tensor quadrature of the unit ball: nodes w_q (in the box
    // [-1,1]^n) and weights including C*psi(w_q). Normalized weights sum to
    // exactly 1, so quadrature mollification preserves constants exactly;
    // the raw rule is kept for independent mass checks.
    struct UnitQuadrature {
        std::vector<Point> nodes;
        std::vector<double> weights;
    };
    UnitQuadrature unit_quadrature(int points_per_axis, bool normalize = true) const;

    // integral of psi_eps over R^n, recomputed by an independent rule
    double integral_check(int points_per_axis = 40) const;

private:
    GroupDescriptor g_;
    double eps_;
    double C_;
};

double bump_psi_eps(const BumpProfile& profile, const Point& x);

// Solves u o y = k o x for the unique y in [0,1)^n (k integer); this is the
// change of variables behind the lattice-sum mollifier.
Point mollifier_pullback(const GroupDescriptor& g, const Point& u, const Point& x);

// g_eps(x) = int_{[0,1)^n} sum_k psi_eps(k o x o y^-1) g(y) dy on the torus,
// computed in the substituted form int psi_eps(u) g(Y(u;x)) du so that the
// kernel mass is exact. Output sampled at out_resolution (>= input).
GridFunction mollify_torus(const GridFunction& fn, double eps,
                           const std::vector<int>& out_resolution = {},
                           int quad_points_per_axis = 8);

// Pointwise evaluation of the same operator.
double mollify_torus_at(const GridFunction& fn, double eps, const Point& x,
                        int quad_points_per_axis = 8);

// mu_eps(x) = sum_j w_j sum_k psi_eps(k o x o y_j^-1): smooth density on the
// torus via exact lattice sums.
GridFunction mollify_measure(const GroupDescriptor& g, const DiscreteMeasure& mu, double eps,
                             const std::vector<int>& resolution);

double mollify_measure_at(const GroupDescriptor& g, const DiscreteMeasure& mu, double eps,
                          const Point& x);

// Exact integral of mu_eps over the torus (per-atom substitution; equals
// total mass up to quadrature of the bump).
double mollify_measure_mass(const GroupDescriptor& g, const DiscreteMeasure& mu, double eps,
                            int quad_points_per_axis = 24);

// Atom-cloud representation of mu_eps (quadrature transport of each atom);
// feeds the exact d1 solver.
DiscreteMeasure mollify_measure_atoms(const GroupDescriptor& g, const DiscreteMeasure& mu,
                                      double eps, int quad_points_per_axis = 8);

// Standard 1-D bump exp(-1/(1-s^2)) on [-1,1], normalized; time factor of
// the heat-kernel mollifier.
double time_bump(double s);
double time_bump_normalization();

// f_eps(t,x) = int phi_eps(t-s, y^-1 o x) f(s,y) dy ds with
// phi_eps(t,x) = (1/eps) Gamma_0(eps, x) phi(t/eps): the time axis is
// convolved with the bump, the space axis with the heat semigroup at time
// eps realized by Monte Carlo (shared increments across all nodes).
SpaceTimeFunction mollify_heat(const SpaceTimeFunction& fn, double eps, const SDEConfig& cfg);

// Space-only variant acting on one slice.
GridFunction mollify_heat_slice(const GridFunction& fn, double eps, const SDEConfig& cfg);

}  // namespace carnot

#endif
