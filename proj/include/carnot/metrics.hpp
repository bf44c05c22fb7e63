#ifndef CARNOT_METRICS_HPP
#define CARNOT_METRICS_HPP

#include <cstdint>
#include <vector>

#include "carnot/group.hpp"
#include "carnot/mollify.hpp"
#include "carnot/torus.hpp"

namespace carnot {

struct SeminormEstimate {
    double value = 0.0;          // certified lower bound of the sup
    Point witness_x, witness_y;  // maximizing pair
    std::uint64_t pairs = 0;
};

// sup |f(x)-f(y)| / d^alpha over sampled pairs (grid neighbours, random
// pairs, local ascent), with the torus distance. A lower bound, by nature.
SeminormEstimate holder_seminorm(const GridFunction& fn, double alpha, std::uint64_t pair_budget,
                                 std::uint64_t seed = 12345);

// Same search restricted to the plain CC distance on a fundamental
// neighbourhood (for the Remark-style equality check).
SeminormEstimate holder_seminorm_cc(const GridFunction& fn, double alpha,
                                    std::uint64_t pair_budget, std::uint64_t seed = 12345);

struct HoelderReport {
    int k = 0;
    double alpha = 0.0;
    double sup_part = 0.0;                    // sum of sup norms over |I| <= k
    std::vector<double> derivative_sups;      // per multi-index
    std::vector<double> seminorms;            // per multi-index
    std::vector<MultiIndex> indices;
    double norm = 0.0;                        // sup_part + sum seminorms
    Point witness_x, witness_y;               // pair attaining the largest seminorm
    std::uint64_t sample_size = 0;
};

// |f|_{C^k} + sum_{|I|<=k} [X_I f]_alpha with derivatives by nested central
// differences at step h (default ties to the grid spacing).
HoelderReport holder_norm(const GridFunction& fn, int k, double alpha, double h = 0.0,
                          std::uint64_t pair_budget = 20000, std::uint64_t seed = 12345);

// Dictionary lower bound of the dual norm sup_{|phi| <= 1} <mu, phi>.
struct DualNormEstimate {
    double value = 0.0;
    int best_index = -1;
    int dictionary_size = 0;
};

class DualNormDictionary {
public:
    // phi == 1, coordinate tents, low-frequency trig fields, mollified noise;
    // every entry rescaled to unit estimated Hoelder norm. Deterministic for
    // a fixed seed.
    DualNormDictionary(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution,
                       int k, double alpha, int size, std::uint64_t seed = 777);

    DualNormEstimate estimate(const DiscreteMeasure& mu) const;
    DualNormEstimate estimate_prefix(const DiscreteMeasure& mu, int prefix) const;
    int size() const { return static_cast<int>(fields_.size()); }
    const GridFunction& field(int i) const { return fields_[static_cast<std::size_t>(i)]; }

private:
    std::vector<GridFunction> fields_;
};

DualNormEstimate dual_norm_estimate(const GroupDescriptor& g, const DiscreteMeasure& mu, int k,
                                    double alpha, int dictionary_size, std::uint64_t seed = 777);

// Exact Kantorovich-Rubinstein distance between two finite probability
// measures, cost = torus distance, by successive-shortest-path min cost flow.
struct TransportResult {
    double cost = 0.0;
    std::vector<std::tuple<int, int, double>> plan;  // (source atom, sink atom, mass)
};

TransportResult kantorovich_d1(const GroupDescriptor& g, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu);

// d1 between measures supported on a common coarse binning of the torus;
// used to compare particle ensembles with grid densities at desk scale.
double d1_binned(const GroupDescriptor& g, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                 int bins_per_axis);

DiscreteMeasure bin_measure(const GroupDescriptor& g, const DiscreteMeasure& mu,
                            int bins_per_axis);
DiscreteMeasure grid_density_to_measure(const GridFunction& density);

}  // namespace carnot

#endif
