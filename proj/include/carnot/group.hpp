#ifndef CARNOT_GROUP_HPP
#define CARNOT_GROUP_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "carnot/errors.hpp"

namespace carnot {

using Point = Eigen::VectorXd;
using HorizontalVector = Eigen::VectorXd;  // length n1
using LatticeElement = Eigen::VectorXi;

// Multi-index over the generators {1,...,n1}; empty means the identity
// operator. Stored 0-based.
using MultiIndex = std::vector<int>;

struct BracketTerm {
    int i, j, m;  // [E_i, E_j] = sum_m c E_m, 0-based, i,j in layer 1
    double c;
};

// Stratified group on R^n in exponential coordinates of the first kind.
// Structure constants are given for the first-layer generators, which is
// sufficient for step <= 2; the abelian case has none.
class GroupDescriptor {
public:
    GroupDescriptor(int step, std::vector<int> layer_dims, std::vector<BracketTerm> brackets);

    static GroupDescriptor heisenberg();           // H^1: n=3, layers (2,1)
    static GroupDescriptor abelian(int n);         // R^n, step 1
    static GroupDescriptor from_json_file(const std::string& path);
    static GroupDescriptor from_json_text(const std::string& text);

    int step() const { return step_; }
    int dim() const { return n_; }
    int horizontal_dim() const { return n1_; }
    const std::vector<int>& layer_dims() const { return layer_dims_; }
    int layer_of(int coord) const { return layer_of_[coord]; }   // 1-based layer index
    double dilation_exponent(int coord) const { return static_cast<double>(layer_of_[coord]); }
    int homogeneous_dim() const { return Q_; }
    const std::vector<BracketTerm>& brackets() const { return brackets_; }
    bool abelian_group() const { return brackets_.empty(); }

    // [u, v] for u, v in R^n; only first-layer components contribute at step 2.
    Point bracket(const Point& u, const Point& v) const;

    void check_point(const Point& p) const;

    std::string to_json_text() const;

private:
    void validate() const;

    int step_;
    std::vector<int> layer_dims_;
    std::vector<BracketTerm> brackets_;
    int n_;
    int n1_;
    int Q_;
    std::vector<int> layer_of_;
};

// Group law p o q by BCH truncated at the step (exact for step <= 2).
Point compose(const GroupDescriptor& g, const Point& p, const Point& q);

// Allocation-free kernels for hot loops. compose_into tolerates out aliasing
// p or q (layer-2 entries are written first and read only layer-1 inputs).
void compose_into(const GroupDescriptor& g, const Point& p, const Point& q, Point& out);
// Writes the fundamental-domain representative of p into out (aliasing ok).
void reduce_point_into(const GroupDescriptor& g, const Point& p, Point& out);

// In exponential coordinates of the first kind the inverse is -p.
Point inverse(const GroupDescriptor& g, const Point& p);

// Anisotropic dilation D_lambda.
Point dilate(const GroupDescriptor& g, double lambda, const Point& p);

// ( sum_j |x^(j)|^(2 r! / j) )^(1/(2 r!))
double homogeneous_norm(const GroupDescriptor& g, const Point& p);

// Embeds a horizontal vector v into the group (layer 1, zeros above).
Point embed_horizontal(const GroupDescriptor& g, const HorizontalVector& v);

// Left-invariant generator fields evaluated at p: column i is X_i(p).
Eigen::MatrixXd generator_matrix(const GroupDescriptor& g, const Point& p);

// Time-tau flow of sum_i v_i X_i from p. For left-invariant fields this is
// p o (tau v embedded in layer 1), exact in these coordinates.
Point exp_horizontal(const GroupDescriptor& g, const Point& p, const HorizontalVector& v, double tau);

// Same flow by classical RK4 integration of the ODE; cross-check path.
Point exp_horizontal_rk4(const GroupDescriptor& g, const Point& p, const HorizontalVector& v,
                         double tau, int n_steps = 64);

using ScalarField = std::function<double(const Point&)>;

// Iterated Lie derivative X_I f(p) by nested central differences along the
// exact horizontal flows. |I| up to 4; the step widens as h^(1/2) per nesting
// level; h <= 0 selects the default 1e-4 * max(1, |p|_G).
double lie_derivative(const GroupDescriptor& g, const ScalarField& f, const Point& p,
                      const MultiIndex& I, double h = 0.0);

double default_fd_step(const GroupDescriptor& g, const Point& p);

struct CcResult {
    double value = 0.0;
    bool exact = true;  // false: certified upper bound only
};

// Carnot-Caratheodory distance. Exact for abelian groups and for H^1 (via the
// geodesic angle equation, bisection to 1e-10); otherwise a certified upper
// bound from optimized piecewise-horizontal paths.
CcResult cc_distance(const GroupDescriptor& g, const Point& p, const Point& q);

// All multi-indices over {0..n1-1} with length <= k (including the empty one).
std::vector<MultiIndex> multi_indices_up_to(const GroupDescriptor& g, int k);

}  // namespace carnot

#endif
