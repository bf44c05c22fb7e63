#ifndef CARNOT_TORUS_HPP
#define CARNOT_TORUS_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "carnot/group.hpp"

namespace carnot {

struct Reduced {
    Point point;        // in [0,1)^n
    LatticeElement k;   // k o point reproduces the input
};

// Unique (x0, k) with k o x0 = p, x0 in [0,1)^n, solved layer by layer.
Reduced reduce(const GroupDescriptor& g, const Point& p);

// min over lattice translates of the base CC distance, expanding the search
// window until the triangle inequality certifies the truncation.
double torus_distance(const GroupDescriptor& g, const Point& x, const Point& y);

// Periodic kernel data: either a compact support radius (in the homogeneous
// norm) or a Gaussian envelope c0 * t^(-Q/2) exp(-|u|^2/(c t)).
struct KernelSpec {
    std::function<double(const Point&)> eval;
    bool compact = false;
    double support_radius = 0.0;  // compact case
    bool gaussian = false;
    double gauss_c0 = 0.0, gauss_c = 0.0, gauss_t = 0.0;
};

// sum_k kernel(k o x o y^-1), truncated with certified error < 1e-10.
double periodize_kernel(const GroupDescriptor& g, const KernelSpec& kernel, const Point& x,
                        const Point& y);

// Enumerates the lattice elements k for which ||k o w|| <= radius can hold,
// layer by layer (exact for compact kernels).
std::vector<LatticeElement> lattice_in_ball(const GroupDescriptor& g, const Point& w,
                                            double radius);

// Periodic scalar field sampled at the nodes (j1/m1,...,jn/mn) of [0,1)^n.
// Off-grid evaluation routes through reduce and interpolates multilinearly
// with Euclidean wrap on the cube.
class GridFunction {
public:
    GridFunction(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution);
    GridFunction(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution,
                 Eigen::ArrayXd values);

    static GridFunction from_function(std::shared_ptr<const GroupDescriptor> g,
                                      std::vector<int> resolution,
                                      const ScalarField& f);

    const GroupDescriptor& group() const { return *g_; }
    std::shared_ptr<const GroupDescriptor> group_ptr() const { return g_; }
    const std::vector<int>& resolution() const { return res_; }
    long node_count() const { return static_cast<long>(values_.size()); }
    const Eigen::ArrayXd& values() const { return values_; }
    Eigen::ArrayXd& values() { return values_; }

    Point node_point(long flat) const;
    long flat_index(const std::vector<int>& idx) const;

    double operator()(const Point& x) const;  // reduce + multilinear
    double eval_in_cube(const Point& x0) const;  // x0 already in [0,1)^n

    double max_abs() const { return values_.size() ? values_.abs().maxCoeff() : 0.0; }
    double mean() const { return values_.size() ? values_.mean() : 0.0; }
    double cell_volume() const;
    double integral() const { return mean(); }  // node-rule; cell volumes are uniform

    void save(const std::string& path_base, bool csv = false) const;  // .json + .bin/.csv
    static GridFunction load(const std::string& path_base,
                             std::shared_ptr<const GroupDescriptor> g);

private:
    std::shared_ptr<const GroupDescriptor> g_;
    std::vector<int> res_;
    std::vector<long> strides_;
    Eigen::ArrayXd values_;
};

// Scalar field on [0,T] x torus: uniform time slices of GridFunctions.
struct SpaceTimeFunction {
    double t0 = 0.0;
    double t1 = 0.0;
    std::vector<GridFunction> slices;  // size nt+1, times t0 + i*(t1-t0)/nt

    int steps() const { return static_cast<int>(slices.size()) - 1; }
    double dt() const { return steps() > 0 ? (t1 - t0) / steps() : 0.0; }
    double time_of(int i) const { return t0 + i * dt(); }
    // piecewise-linear in time, clamped outside [t0, t1]
    double eval(double t, const Point& x) const;
    const GridFunction& slice_nearest(double t) const;
};

}  // namespace carnot

#endif
