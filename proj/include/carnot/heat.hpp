#ifndef CARNOT_HEAT_HPP
#define CARNOT_HEAT_HPP

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "carnot/group.hpp"
#include "carnot/rng.hpp"
#include "carnot/torus.hpp"

namespace carnot {

enum class SdeScheme {
    SplitStepGeometric,  // composes exact horizontal flows; stays on the group
    StratonovichHeun     // predictor-corrector in coordinates; cross-check
};

struct SDEConfig {
    double dt = 1e-3;
    SdeScheme scheme = SdeScheme::SplitStepGeometric;
    std::uint64_t seed = 0;
    std::uint64_t n_particles = 1;
    unsigned threads = 1;

    void check(double t0, double t1) const {
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        if (n_particles < 1) throw ConfigError("particle count must be >= 1");
        if (dt > t1 - t0) throw ConfigError("dt exceeds the integration window");
    }
};

// Time-dependent horizontal drift b(t, x) with n1 components; the SDE uses
// the sign convention dZ = -b.X dt + sqrt(2) X o dB.
using DriftField = std::function<Eigen::VectorXd(double, const Point&)>;

inline DriftField zero_drift(const GroupDescriptor& g) {
    int n1 = g.horizontal_dim();
    return [n1](double, const Point&) { return Eigen::VectorXd::Zero(n1); };
}

// One trajectory; rng supplies the Brownian increments.
Point sample_path(const GroupDescriptor& g, const DriftField& b, double t0, double t1,
                  const Point& x0, double dt, SdeScheme scheme, std::mt19937_64& rng,
                  std::vector<Point>* path_out = nullptr);

// Convenience wrapper with the config's own RNG (single path).
Point sample_path(const GroupDescriptor& g, const DriftField& b, double t0, double t1,
                  const Point& x0, const SDEConfig& cfg, std::vector<Point>* path_out = nullptr);

// Heat semigroup e^{t Delta_X} f (x): Monte Carlo over driftless paths.
McEstimate heat_apply(const GroupDescriptor& g, const ScalarField& f, double t, const Point& x,
                      const SDEConfig& cfg);

// Endpoint displacements G_p of driftless paths from the origin. Shared by
// grid-wide mollification so every node sees the same increments.
std::vector<Point> heat_displacements(const GroupDescriptor& g, double t, const SDEConfig& cfg);

struct HeatKernelEstimate {
    double t = 0.0;
    Point x;
    double value = 0.0;
    double std_error = 0.0;
    double bandwidth = 0.0;
    std::uint64_t n = 0;
    bool vanished = false;  // t <= 0: Gamma_0 vanishes, value is exact 0
};

// Kernel density estimate of Gamma_0(t, .) at x from N driftless endpoints,
// with a D_h-shaped window. Default bandwidth h = N^(-1/(Q+4)) sqrt(t).
HeatKernelEstimate estimate_kernel(const GroupDescriptor& g, double t, const Point& x,
                                   const SDEConfig& cfg, double bandwidth = 0.0);

// Endpoint dump record layout: n doubles (coords) + 1 double (weight).
void dump_endpoints(const std::string& path, const std::vector<Point>& pts, double weight);

// Reusable density estimator over a fixed endpoint cloud: first-layer hash
// bins make pointwise evaluation O(points in the window), and the mass is
// integrated by importance sampling against a moment-matched Gaussian.
class KernelDensity {
public:
    KernelDensity(const GroupDescriptor& g, std::vector<Point> endpoints, double bandwidth);

    double bandwidth() const { return h_; }
    McEstimate eval(const Point& x) const;                 // value + MC stderr
    McEstimate mass(std::uint64_t polls, std::uint64_t seed) const;

private:
    const GroupDescriptor g_;
    std::vector<Point> pts_;
    double h_;
    double inv_n_;
    std::shared_ptr<const void> window_;  // BumpProfile, type-erased to avoid a cycle
    double window_eval(const Point& u) const;
    std::unordered_map<long long, std::vector<int>> bins_;
    long long key_of(double a, double b) const;
    Eigen::VectorXd mean_, sd_;
};

}  // namespace carnot

#endif
