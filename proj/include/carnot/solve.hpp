#ifndef CARNOT_SOLVE_HPP
#define CARNOT_SOLVE_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "carnot/heat.hpp"
#include "carnot/mollify.hpp"
#include "carnot/torus.hpp"

namespace carnot {

// Time-indexed data are callables (t, x) -> value; they are sampled onto the
// solver grid once per step.
using TimeScalarField = std::function<double(double, const Point&)>;

struct BackwardProblem {
    std::shared_ptr<const GroupDescriptor> group;
    double T = 1.0;
    DriftField b;             // horizontal drift (n1 components)
    TimeScalarField f;        // source
    ScalarField z_T;          // terminal data
    bool b_static = false;    // data independent of t: sampled once per run
    bool f_static = false;
};

struct FPKProblem {
    std::shared_ptr<const GroupDescriptor> group;
    double T = 1.0;
    DriftField b;
    TimeScalarField upsilon;          // distributional source as density
    ScalarField rho0;                 // initial density
    std::optional<DiscreteMeasure> rho0_atoms;    // alternative: measure data
    std::optional<DiscreteMeasure> upsilon_atoms; // constant-in-time measure source
    bool b_static = false;
    bool upsilon_static = false;
};

// Precomputed gather tables for the group-translate stencil: for each node x
// and generator i, the interpolation of a grid function at x o (±delta e_i).
// Interpolation is periodic cubic Lagrange per off-grid axis (exact node
// shifts need none), so the stencil consistency is O(delta^2) while the
// transpose stays the exact adjoint of the gather matrix.
class ShiftOperator {
public:
    ShiftOperator(const GridFunction& layout, int generator, double delta, bool forward);

    // y = A x (gather) and y = A^T x (scatter)
    void apply(const Eigen::ArrayXd& in, Eigen::ArrayXd& out) const;
    void apply_transpose(const Eigen::ArrayXd& in, Eigen::ArrayXd& out) const;

    double max_weight_l1() const { return max_l1_; }

private:
    long nodes_ = 0;
    std::vector<long> idx_;
    std::vector<double> w_;
    int width_ = 0;
    double max_l1_ = 1.0;
};

// Discrete operators shared by both solvers on one grid.
class StencilPack {
public:
    StencilPack(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution);

    const GridFunction& layout() const { return layout_; }
    double delta() const { return delta_; }
    int n1() const { return n1_; }

    // sum_i (S_i^+ - 2 I + S_i^-) / delta^2
    void laplacian(const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const;
    void laplacian_transpose(const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const;
    // (S_i^+ - S_i^-) / (2 delta)
    void gradient_i(int i, const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const;
    void gradient_i_transpose(int i, const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const;

    double cfl_dt(double b_max) const;  // delta^2 / (4 n1 + 2 delta b_max)

private:
    GridFunction layout_;
    double delta_;
    int n1_;
    std::vector<ShiftOperator> fwd_, bwd_;
    mutable Eigen::ArrayXd tmp_, tmp2_;
};

struct SolveReport {
    double dt = 0.0;
    double delta = 0.0;
    int steps = 0;
    double cfl_bound = 0.0;
    double mass_drift = 0.0;        // FPK only
    double max_value = 0.0;
    std::uint64_t seed = 0;
};

// Explicit stepping of the time-reversed problem
//   dw/dt = Delta_X w - b~.D_X w + f~,  w(0) = z_T,   z(t) = w(T-t)
// with b~(s) = b(T-s), f~(s) = f(T-s). Refuses dt above the CFL bound.
SpaceTimeFunction solve_backward_fd(const BackwardProblem& prob, const std::vector<int>& resolution,
                                    double dt, SolveReport* report = nullptr,
                                    int store_every = 1);

// Explicit stepping of d rho/dt = Delta_X^T rho + sum_i G_i^T (b_i rho) + upsilon,
// the exact transpose of the backward stepper's spatial operator.
SpaceTimeFunction solve_fpk_fd(const FPKProblem& prob, const std::vector<int>& resolution,
                               double dt, SolveReport* report = nullptr, int store_every = 1);

// MC estimate of z(t,x) = E[ z_T(Z_T) + int_t^T f(s, Z_s) ds ] over paths of
// the SDE with drift -b; the independent oracle for solve_backward_fd.
McEstimate feynman_kac_oracle(const BackwardProblem& prob, double t, const Point& x,
                              const SDEConfig& cfg);

struct ParticleEnsemble {
    Eigen::MatrixXd positions;  // n x N, torus-reduced
    Eigen::VectorXd weights;    // sums to 1
    double time = 0.0;
    std::uint64_t seed = 0;

    DiscreteMeasure to_measure() const;
};

// Particle evolution of the FPK problem (upsilon must vanish); each particle
// follows the SDE with drift -b and is reduced to the torus every step.
std::vector<ParticleEnsemble> simulate_fpk_particles(const FPKProblem& prob, const SDEConfig& cfg,
                                                     int snapshots);

// |<rho(t),xi> + int_0^t <rho,f> - <rho_0,z(0)> - int_0^t <upsilon, z>|
// with z solved backward from terminal data xi at time t.
double duality_residual(const SpaceTimeFunction& rho, const FPKProblem& prob,
                        const GridFunction& xi, const TimeScalarField& f, double t, double dt);

}  // namespace carnot

#endif
