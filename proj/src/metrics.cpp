#include "carnot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>

namespace carnot {

namespace {

struct PairSearch {
    double best = 0.0;
    Point wx, wy;
    std::uint64_t tried = 0;
};

using DistanceFn = std::function<double(const Point&, const Point&)>;

void consider(PairSearch& ps, const GridFunction& fn, const DistanceFn& dist, const Point& a,
              const Point& b, double alpha) {
    ++ps.tried;
    double d = dist(a, b);
    if (d <= 1e-14) return;
    double r = std::abs(fn.eval_in_cube(a) - fn.eval_in_cube(b)) / std::pow(d, alpha);
    if (r > ps.best) {
        ps.best = r;
        ps.wx = a;
        ps.wy = b;
    }
}

SeminormEstimate seminorm_search(const GridFunction& fn, double alpha, std::uint64_t budget,
                                 std::uint64_t seed, const DistanceFn& dist) {
    const GroupDescriptor& g = fn.group();
    const int n = g.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    PairSearch ps;
    ps.wx = Point::Zero(n);
    ps.wy = Point::Zero(n);

    const auto& res = fn.resolution();
    long nodes = fn.node_count();

    // grid neighbours: random nodes paired with offsets in a 3^n cell
    std::uint64_t n_neigh = budget / 2;
    for (std::uint64_t it = 0; it < n_neigh; ++it) {
        long idx = static_cast<long>(U(rng) * nodes);
        idx = std::min(idx, nodes - 1);
        Point a = fn.node_point(idx);
        Point b = a;
        for (int i = 0; i < n; ++i) {
            int off = static_cast<int>(U(rng) * 3.0) - 1;
            b[i] += static_cast<double>(off) / res[i];
            if (b[i] < 0.0) b[i] += 1.0;
            if (b[i] >= 1.0) b[i] -= 1.0;
        }
        consider(ps, fn, dist, a, b, alpha);
    }
    // random pairs
    std::uint64_t n_rand = budget - n_neigh;
    for (std::uint64_t it = 0; it < n_rand; ++it) {
        Point a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = U(rng);
            b[i] = U(rng);
        }
        consider(ps, fn, dist, a, b, alpha);
    }
    // local ascent from the champion: move endpoints to neighbouring nodes
    for (int round = 0; round < 40; ++round) {
        bool improved = false;
        for (int endpoint = 0; endpoint < 2; ++endpoint) {
            Point base = endpoint == 0 ? ps.wx : ps.wy;
            for (int i = 0; i < n; ++i)
                for (int sgn = -1; sgn <= 1; sgn += 2) {
                    Point c = base;
                    c[i] += sgn / (2.0 * res[i]);
                    if (c[i] < 0.0) c[i] += 1.0;
                    if (c[i] >= 1.0) c[i] -= 1.0;
                    double before = ps.best;
                    if (endpoint == 0)
                        consider(ps, fn, dist, c, ps.wy, alpha);
                    else
                        consider(ps, fn, dist, ps.wx, c, alpha);
                    if (ps.best > before) improved = true;
                }
        }
        if (!improved) break;
    }
    return {ps.best, ps.wx, ps.wy, ps.tried};
}

}  // namespace

SeminormEstimate holder_seminorm(const GridFunction& fn, double alpha, std::uint64_t budget,
                                 std::uint64_t seed) {
    if (!(alpha > 0.0) || alpha > 1.0) throw DomainError("alpha must lie in (0,1]");
    const GroupDescriptor& g = fn.group();
    return seminorm_search(fn, alpha, budget, seed,
                           [&g](const Point& a, const Point& b) { return torus_distance(g, a, b); });
}

SeminormEstimate holder_seminorm_cc(const GridFunction& fn, double alpha, std::uint64_t budget,
                                    std::uint64_t seed) {
    if (!(alpha > 0.0) || alpha > 1.0) throw DomainError("alpha must lie in (0,1]");
    const GroupDescriptor& g = fn.group();
    return seminorm_search(fn, alpha, budget, seed, [&g](const Point& a, const Point& b) {
        return cc_distance(g, a, b).value;
    });
}

HoelderReport holder_norm(const GridFunction& fn, int k, double alpha, double h,
                          std::uint64_t pair_budget, std::uint64_t seed) {
    if (k < 0 || k > 2) throw UnsupportedOrder("holder_norm supports k <= 2");
    const GroupDescriptor& g = fn.group();
    auto gp = fn.group_ptr();
    if (h <= 0.0) {
        int mmax = *std::max_element(fn.resolution().begin(), fn.resolution().end());
        h = 1.0 / mmax;  // derivative step tied to the grid scale
    }
    HoelderReport rep;
    rep.k = k;
    rep.alpha = alpha;
    rep.indices = multi_indices_up_to(g, k);

    ScalarField feval = [&fn](const Point& x) { return fn(x); };
    double best_semi = -1.0;
    for (const auto& I : rep.indices) {
        GridFunction der(gp, fn.resolution());
        if (I.empty()) {
            der.values() = fn.values();
        } else {
            for (long idx = 0; idx < der.node_count(); ++idx)
                der.values()[idx] = lie_derivative(g, feval, der.node_point(idx), I, h);
        }
        double sup = der.max_abs();
        auto semi = holder_seminorm(der, alpha, pair_budget, seed + I.size());
        rep.derivative_sups.push_back(sup);
        rep.seminorms.push_back(semi.value);
        rep.sup_part += sup;
        if (semi.value > best_semi) {
            best_semi = semi.value;
            rep.witness_x = semi.witness_x;
            rep.witness_y = semi.witness_y;
        }
        rep.sample_size += semi.pairs;
    }
    rep.norm = rep.sup_part + std::accumulate(rep.seminorms.begin(), rep.seminorms.end(), 0.0);
    return rep;
}

// --- dual-norm dictionary -----------------------------------------------------

namespace {

double tent(double s) {  // periodic tent on [0,1), peak 1 at 1/2
    double f = s - std::floor(s);
    return 1.0 - 2.0 * std::abs(f - 0.5);
}

}  // namespace

DualNormDictionary::DualNormDictionary(std::shared_ptr<const GroupDescriptor> g,
                                       std::vector<int> resolution, int k, double alpha, int size,
                                       std::uint64_t seed) {
    const int n = g->dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);

    std::vector<GridFunction> raw;
    // phi == 1 first: guarantees estimate(mu) >= |total mass|
    raw.push_back(GridFunction::from_function(g, resolution, [](const Point&) { return 1.0; }));
    // coordinate tents
    for (int i = 0; i < n && static_cast<int>(raw.size()) < size; ++i)
        raw.push_back(GridFunction::from_function(
            g, resolution, [i](const Point& x) { return tent(x[i]); }));
    // low-frequency trig fields (even z-frequencies keep them lattice-periodic)
    const double twopi = 6.283185307179586476925;
    for (int f = 0; static_cast<int>(raw.size()) < size; ++f) {
        std::vector<double> freq(n), phase(n);
        for (int i = 0; i < n; ++i) {
            int fmax = 2;
            int v = static_cast<int>(std::floor((U(rng) * 0.5 + 0.5) * (fmax + 1)));
            v = std::min(v, fmax);
            freq[i] = g->layer_of(i) > 1 ? 2.0 * v : v;
            phase[i] = U(rng) * 3.14159;
        }
        raw.push_back(GridFunction::from_function(g, resolution, [freq, phase, n, twopi](const Point& x) {
            double v = 0.0;
            for (int i = 0; i < n; ++i) v += std::cos(twopi * freq[i] * x[i] + phase[i]);
            return v / n;
        }));
        // mollified white noise every third entry for roughness diversity
        if (static_cast<int>(raw.size()) < size && f % 3 == 2) {
            GridFunction noise(g, resolution);
            for (long idx = 0; idx < noise.node_count(); ++idx) noise.values()[idx] = U(rng);
            raw.push_back(mollify_torus(noise, 0.25));
        }
    }

    for (auto& fld : raw) {
        auto rep = holder_norm(fld, k, alpha, 0.0, 4000, seed ^ 0x9e37);
        double nrm = rep.norm;
        if (nrm < 1e-12) nrm = 1.0;
        fld.values() /= nrm;
        fields_.push_back(std::move(fld));
        if (static_cast<int>(fields_.size()) >= size) break;
    }
}

DualNormEstimate DualNormDictionary::estimate_prefix(const DiscreteMeasure& mu, int prefix) const {
    DualNormEstimate out;
    out.dictionary_size = std::min<int>(prefix, static_cast<int>(fields_.size()));
    for (int i = 0; i < out.dictionary_size; ++i) {
        const auto& fld = fields_[static_cast<std::size_t>(i)];
        double v = mu.pair([&fld](const Point& x) { return fld(x); });
        if (v > out.value) {
            out.value = v;
            out.best_index = i;
        }
    }
    return out;
}

DualNormEstimate DualNormDictionary::estimate(const DiscreteMeasure& mu) const {
    return estimate_prefix(mu, static_cast<int>(fields_.size()));
}

DualNormEstimate dual_norm_estimate(const GroupDescriptor& g, const DiscreteMeasure& mu, int k,
                                    double alpha, int dictionary_size, std::uint64_t seed) {
    auto gp = std::make_shared<const GroupDescriptor>(g);
    std::vector<int> res(g.dim(), 16);
    DualNormDictionary dict(gp, res, k, alpha, dictionary_size, seed);
    return dict.estimate(mu);
}

// --- exact W1 by successive shortest paths -------------------------------------

namespace {

// Dense bipartite transportation problem with real supplies and demands,
// solved by successive shortest augmenting paths with Johnson potentials.
// Reduced costs: forward i->j has c_ij + pi_s[i] - pi_d[j] >= 0, the residual
// j->i (present when flow > 0) has the negation.
struct MinCostFlow {
    int ns, nd;
    Eigen::MatrixXd cost;  // ns x nd
    std::vector<double> supply, demand;

    std::vector<double> pot_s, pot_d;
    Eigen::MatrixXd flow;

    double solve(std::vector<std::tuple<int, int, double>>* plan) {
        pot_s.assign(ns, 0.0);
        pot_d.assign(nd, 0.0);
        flow = Eigen::MatrixXd::Zero(ns, nd);
        double remaining = 0.0;
        for (double s : supply) remaining += s;

        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> dist_d(nd), dist_s(ns);
        std::vector<int> par_d(nd), par_s(ns);
        std::vector<char> done_d(nd), done_s(ns);

        int guard = 0;
        const int guard_max = 4 * (ns + nd) + ns * nd;
        while (remaining > 1e-12) {
            if (++guard > guard_max) throw Error("transport: augmentation did not terminate");
            std::fill(dist_d.begin(), dist_d.end(), inf);
            std::fill(dist_s.begin(), dist_s.end(), inf);
            std::fill(done_d.begin(), done_d.end(), 0);
            std::fill(done_s.begin(), done_s.end(), 0);
            std::fill(par_d.begin(), par_d.end(), -1);
            std::fill(par_s.begin(), par_s.end(), -1);

            using QE = std::pair<double, int>;  // (dist, node); node < ns: source
            std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
            for (int i = 0; i < ns; ++i)
                if (supply[i] > 1e-12) {
                    dist_s[i] = 0.0;
                    pq.push({0.0, i});
                }
            int reach = -1;
            while (!pq.empty()) {
                auto [d, node] = pq.top();
                pq.pop();
                if (node < ns) {
                    int i = node;
                    if (done_s[i]) continue;
                    done_s[i] = 1;
                    for (int j = 0; j < nd; ++j) {
                        if (done_d[j]) continue;
                        double rc = cost(i, j) + pot_s[i] - pot_d[j];
                        if (rc < 0) rc = 0;  // fp dust
                        if (dist_s[i] + rc < dist_d[j] - 1e-18) {
                            dist_d[j] = dist_s[i] + rc;
                            par_d[j] = i;
                            pq.push({dist_d[j], ns + j});
                        }
                    }
                } else {
                    int j = node - ns;
                    if (done_d[j]) continue;
                    done_d[j] = 1;
                    if (demand[j] > 1e-12) {
                        reach = j;
                        break;
                    }
                    for (int i = 0; i < ns; ++i) {
                        if (done_s[i] || flow(i, j) <= 1e-15) continue;
                        double rc = -(cost(i, j) + pot_s[i] - pot_d[j]);
                        if (rc < 0) rc = 0;
                        if (dist_d[j] + rc < dist_s[i] - 1e-18) {
                            dist_s[i] = dist_d[j] + rc;
                            par_s[i] = j;
                            pq.push({dist_s[i], i});
                        }
                    }
                }
            }
            if (reach < 0) throw Error("transport: no augmenting path (unbalanced inputs?)");

            const double dstar = dist_d[reach];
            for (int i = 0; i < ns; ++i) pot_s[i] += std::min(dist_s[i], dstar);
            for (int j = 0; j < nd; ++j) pot_d[j] += std::min(dist_d[j], dstar);

            // bottleneck along the alternating path
            double push = demand[reach];
            int j = reach;
            for (;;) {
                int i = par_d[j];
                if (par_s[i] < 0) {
                    push = std::min(push, supply[i]);
                    break;
                }
                int jprev = par_s[i];
                push = std::min(push, flow(i, jprev));
                j = jprev;
            }
            j = reach;
            for (;;) {
                int i = par_d[j];
                flow(i, j) += push;
                if (par_s[i] < 0) {
                    supply[i] -= push;
                    break;
                }
                int jprev = par_s[i];
                flow(i, jprev) -= push;
                j = jprev;
            }
            demand[reach] -= push;
            remaining -= push;
        }
        double total = 0.0;
        for (int i = 0; i < ns; ++i)
            for (int j = 0; j < nd; ++j)
                if (flow(i, j) > 1e-15) {
                    total += flow(i, j) * cost(i, j);
                    if (plan) plan->emplace_back(i, j, flow(i, j));
                }
        return total;
    }
};

}  // namespace

TransportResult kantorovich_d1(const GroupDescriptor& g, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu) {
    if (mu.atoms.empty() || nu.atoms.empty())
        throw ContractError("d1 needs nonempty measures");
    double mm = mu.total_mass(), nm = nu.total_mass();
    if (std::abs(mm - 1.0) > 1e-8 || std::abs(nm - 1.0) > 1e-8)
        throw ContractError("d1 expects probability measures (mass 1)");
    for (const auto& a : mu.atoms)
        if (a.second < -1e-15) throw ContractError("negative atom weight");

    MinCostFlow mcf;
    mcf.ns = static_cast<int>(mu.atoms.size());
    mcf.nd = static_cast<int>(nu.atoms.size());
    mcf.cost.resize(mcf.ns, mcf.nd);
    for (int i = 0; i < mcf.ns; ++i)
        for (int j = 0; j < mcf.nd; ++j)
            mcf.cost(i, j) = torus_distance(g, mu.atoms[static_cast<std::size_t>(i)].first,
                                            nu.atoms[static_cast<std::size_t>(j)].first);
    mcf.supply.resize(mcf.ns);
    mcf.demand.resize(mcf.nd);
    for (int i = 0; i < mcf.ns; ++i) mcf.supply[i] = std::max(0.0, mu.atoms[i].second);
    for (int j = 0; j < mcf.nd; ++j) mcf.demand[j] = std::max(0.0, nu.atoms[j].second);
    // normalize tiny imbalance from float weights
    double ssum = std::accumulate(mcf.supply.begin(), mcf.supply.end(), 0.0);
    double dsum = std::accumulate(mcf.demand.begin(), mcf.demand.end(), 0.0);
    for (auto& d : mcf.demand) d *= ssum / dsum;

    TransportResult res;
    res.cost = mcf.solve(&res.plan);
    return res;
}

DiscreteMeasure bin_measure(const GroupDescriptor& g, const DiscreteMeasure& mu,
                            int bins_per_axis) {
    const int n = g.dim();
    long cells = 1;
    for (int i = 0; i < n; ++i) cells *= bins_per_axis;
    std::vector<double> mass(static_cast<std::size_t>(cells), 0.0);
    for (const auto& a : mu.atoms) {
        Point p = reduce(g, a.first).point;
        long flat = 0, stride = 1;
        for (int i = 0; i < n; ++i) {
            int j = std::min(bins_per_axis - 1, static_cast<int>(p[i] * bins_per_axis));
            flat += stride * j;
            stride *= bins_per_axis;
        }
        mass[static_cast<std::size_t>(flat)] += a.second;
    }
    DiscreteMeasure out;
    for (long c = 0; c < cells; ++c) {
        if (mass[static_cast<std::size_t>(c)] <= 0.0) continue;
        Point ctr(n);
        long rem = c;
        for (int i = 0; i < n; ++i) {
            ctr[i] = (static_cast<double>(rem % bins_per_axis) + 0.5) / bins_per_axis;
            rem /= bins_per_axis;
        }
        out.atoms.emplace_back(ctr, mass[static_cast<std::size_t>(c)]);
    }
    return out;
}

DiscreteMeasure grid_density_to_measure(const GridFunction& density) {
    DiscreteMeasure out;
    double cell = density.cell_volume();
    for (long idx = 0; idx < density.node_count(); ++idx) {
        double w = density.values()[idx] * cell;
        if (w > 0.0) out.atoms.emplace_back(density.node_point(idx), w);
    }
    return out;
}

double d1_binned(const GroupDescriptor& g, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                 int bins_per_axis) {
    DiscreteMeasure bm = bin_measure(g, mu, bins_per_axis);
    DiscreteMeasure bn = bin_measure(g, nu, bins_per_axis);
    // transport only the difference: supplies (p-q)^+, demands (q-p)^+
    std::map<std::vector<int>, std::pair<double, Point>> cells;
    auto key_of = [&](const Point& p) {
        std::vector<int> key(g.dim());
        for (int i = 0; i < g.dim(); ++i)
            key[i] = std::min(bins_per_axis - 1, static_cast<int>(p[i] * bins_per_axis));
        return key;
    };
    for (const auto& a : bm.atoms) {
        auto k = key_of(a.first);
        auto& slot = cells[k];
        slot.first += a.second;
        slot.second = a.first;
    }
    for (const auto& a : bn.atoms) {
        auto k = key_of(a.first);
        auto& slot = cells[k];
        slot.first -= a.second;
        slot.second = a.first;
    }
    DiscreteMeasure pos, neg;
    double moved = 0.0;
    for (const auto& [k, v] : cells) {
        if (v.first > 1e-15) {
            pos.atoms.emplace_back(v.second, v.first);
            moved += v.first;
        } else if (v.first < -1e-15) {
            neg.atoms.emplace_back(v.second, -v.first);
        }
    }
    if (pos.atoms.empty() || neg.atoms.empty()) return 0.0;
    // rescale to probabilities for the solver, undo afterwards
    double scale = moved;
    for (auto& a : pos.atoms) a.second /= scale;
    double negsum = 0.0;
    for (const auto& a : neg.atoms) negsum += a.second;
    for (auto& a : neg.atoms) a.second /= negsum;
    TransportResult tr = kantorovich_d1(g, pos, neg);
    return tr.cost * scale;
}

}  // namespace carnot
