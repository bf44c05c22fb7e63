#include "carnot/mollify.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "carnot/heat.hpp"

namespace carnot {

namespace {

// Gauss-Legendre nodes/weights on [-1,1] by Newton on Legendre polynomials.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double t = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double p0, p1, dp;
        for (int it = 0; it < 100; ++it) {
            p0 = 1.0;
            p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (t * p1 - p0) / (t * t - 1.0);
            double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
}

double unit_bump(const GroupDescriptor& g, const Point& w) {
    double nrm = homogeneous_norm(g, w);
    if (nrm >= 1.0) return 0.0;
    double rfact = 1.0;
    for (int j = 2; j <= g.step(); ++j) rfact *= j;
    double denom = std::pow(nrm, 2.0 * rfact) - 1.0;
    return std::exp(1.0 / denom);
}

double integrate_unit_bump(const GroupDescriptor& g, int pts) {
    std::vector<double> xs, ws;
    gauss_legendre(pts, xs, ws);
    const int n = g.dim();
    // tensor product over [-1,1]^n
    double acc = 0.0;
    std::vector<int> idx(n, 0);
    Point u(n);
    for (;;) {
        double wgt = 1.0;
        for (int i = 0; i < n; ++i) {
            u[i] = xs[idx[i]];
            wgt *= ws[idx[i]];
        }
        acc += wgt * unit_bump(g, u);
        int axis = 0;
        for (; axis < n; ++axis) {
            if (++idx[axis] < pts) break;
            idx[axis] = 0;
        }
        if (axis == n) break;
    }
    return acc;
}

double bump_normalization(const GroupDescriptor& g) {
    static std::map<std::string, double> cache;
    static std::mutex mtx;
    std::string key = g.to_json_text();
    {
        std::lock_guard<std::mutex> lk(mtx);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    // refine until stable
    double prev = integrate_unit_bump(g, g.dim() <= 3 ? 32 : 16);
    double cur = prev;
    for (int pts : {48, 64, 80}) {
        if (g.dim() > 3 && pts > 32) break;
        cur = integrate_unit_bump(g, pts);
        if (std::abs(cur - prev) < 1e-12 * std::max(1.0, std::abs(cur))) break;
        prev = cur;
    }
    double C = 1.0 / cur;
    {
        std::lock_guard<std::mutex> lk(mtx);
        cache[key] = C;
    }
    return C;
}

}  // namespace

// --- DiscreteMeasure ---------------------------------------------------------

DiscreteMeasure DiscreteMeasure::dirac(const GroupDescriptor& g, const Point& x, double w) {
    DiscreteMeasure mu;
    mu.atoms.emplace_back(reduce(g, x).point, w);
    return mu;
}

double DiscreteMeasure::total_mass() const {
    CompensatedSum s;
    for (const auto& a : atoms) s.add(a.second);
    return s.value();
}

void DiscreteMeasure::reduce_atoms(const GroupDescriptor& g) {
    for (auto& a : atoms) a.first = reduce(g, a.first).point;
}

double DiscreteMeasure::pair(const ScalarField& f) const {
    CompensatedSum s;
    for (const auto& a : atoms) s.add(a.second * f(a.first));
    return s.value();
}

// --- BumpProfile ---------------------------------------------------------------

BumpProfile::BumpProfile(const GroupDescriptor& g, double eps) : g_(g), eps_(eps) {
    if (!(eps > 0.0)) throw DomainError("bump scale must be positive");
    C_ = bump_normalization(g_);
}

double BumpProfile::eval_unit(const Point& w) const { return C_ * unit_bump(g_, w); }

double BumpProfile::eval(const Point& x) const {
    Point w = dilate(g_, 1.0 / eps_, x);
    double v = unit_bump(g_, w);
    if (v == 0.0) return 0.0;
    return C_ * std::pow(eps_, -static_cast<double>(g_.homogeneous_dim())) * v;
}

BumpProfile::UnitQuadrature BumpProfile::unit_quadrature(int pts, bool normalize) const {
    std::vector<double> xs, ws;
    gauss_legendre(pts, xs, ws);
    const int n = g_.dim();
    UnitQuadrature q;
    std::vector<int> idx(n, 0);
    for (;;) {
        Point u(n);
        double wgt = 1.0;
        for (int i = 0; i < n; ++i) {
            u[i] = xs[idx[i]];
            wgt *= ws[idx[i]];
        }
        double v = eval_unit(u);
        if (v > 0.0) {
            q.nodes.push_back(u);
            q.weights.push_back(wgt * v);
        }
        int axis = 0;
        for (; axis < n; ++axis) {
            if (++idx[axis] < pts) break;
            idx[axis] = 0;
        }
        if (axis == n) break;
    }
    if (normalize) {
        double mass = 0.0;
        for (double w : q.weights) mass += w;
        for (double& w : q.weights) w /= mass;
    }
    return q;
}

double BumpProfile::integral_check(int pts) const {
    // midpoint rule over the support box of psi_eps, in x coordinates;
    // independent of the Gauss-Legendre normalization path
    const int n = g_.dim();
    std::vector<double> half(n);
    for (int i = 0; i < n; ++i) half[i] = std::pow(eps_, g_.dilation_exponent(i));
    std::vector<int> idx(n, 0);
    double acc = 0.0;
    double cell = 1.0;
    for (int i = 0; i < n; ++i) cell *= 2.0 * half[i] / pts;
    Point x(n);
    for (;;) {
        for (int i = 0; i < n; ++i)
            x[i] = -half[i] + (idx[i] + 0.5) * (2.0 * half[i] / pts);
        acc += eval(x) * cell;
        int axis = 0;
        for (; axis < n; ++axis) {
            if (++idx[axis] < pts) break;
            idx[axis] = 0;
        }
        if (axis == n) break;
    }
    return acc;
}

double bump_psi_eps(const BumpProfile& profile, const Point& x) { return profile.eval(x); }

// --- torus mollifier -----------------------------------------------------------

Point mollifier_pullback(const GroupDescriptor& g, const Point& u, const Point& x) {
    // unique y in [0,1)^n with u o y = k o x for some integer k:
    // y = u^-1 o (k o x); solve layer by layer like reduce.
    const int n = g.dim();
    Point kf = Point::Zero(n);
    Point uinv = inverse(g, u);
    int c0 = 0;
    for (std::size_t layer = 0; layer < g.layer_dims().size(); ++layer) {
        Point y = compose(g, uinv, compose(g, kf, x));
        int nl = g.layer_dims()[layer];
        for (int t = 0; t < nl; ++t) {
            double f = std::floor(y[c0 + t]);
            kf[c0 + t] -= f;  // adjust k so the coordinate lands in [0,1)
        }
        c0 += nl;
    }
    Point y = compose(g, uinv, compose(g, kf, x));
    for (int i = 0; i < n; ++i) {
        if (y[i] < 0.0 && y[i] > -1e-12) y[i] = 0.0;
        if (y[i] >= 1.0 && y[i] < 1.0 + 1e-12) y[i] -= 1.0;
    }
    return y;
}

double mollify_torus_at(const GridFunction& fn, double eps, const Point& x, int qpts) {
    const GroupDescriptor& g = fn.group();
    if (!(eps > 0.0) || eps > 1.0) throw DomainError("mollifier scale must lie in (0,1]");
    BumpProfile bump(g, eps);
    auto q = bump.unit_quadrature(qpts);
    CompensatedSum acc;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        Point u = dilate(g, eps, q.nodes[i]);
        Point y = mollifier_pullback(g, u, x);
        acc.add(q.weights[i] * fn.eval_in_cube(y));
    }
    return acc.value();
}

GridFunction mollify_torus(const GridFunction& fn, double eps,
                           const std::vector<int>& out_resolution, int qpts) {
    const GroupDescriptor& g = fn.group();
    if (!(eps > 0.0) || eps > 1.0) throw DomainError("mollifier scale must lie in (0,1]");
    std::vector<int> res = out_resolution.empty() ? fn.resolution() : out_resolution;
    for (std::size_t i = 0; i < res.size(); ++i)
        if (res[i] < fn.resolution()[i])
            throw ContractError("output resolution must be >= input resolution");
    BumpProfile bump(g, eps);
    auto q = bump.unit_quadrature(qpts);
    std::vector<Point> us(q.nodes.size());
    for (std::size_t i = 0; i < q.nodes.size(); ++i) us[i] = dilate(g, eps, q.nodes[i]);

    GridFunction out(fn.group_ptr(), res);
    for (long idx = 0; idx < out.node_count(); ++idx) {
        Point x = out.node_point(idx);
        CompensatedSum acc;
        for (std::size_t i = 0; i < us.size(); ++i) {
            Point y = mollifier_pullback(g, us[i], x);
            acc.add(q.weights[i] * fn.eval_in_cube(y));
        }
        out.values()[idx] = acc.value();
    }
    return out;
}

// --- measure mollifier -----------------------------------------------------------

double mollify_measure_at(const GroupDescriptor& g, const DiscreteMeasure& mu, double eps,
                          const Point& x) {
    BumpProfile bump(g, eps);
    KernelSpec spec;
    spec.compact = true;
    spec.support_radius = eps;
    spec.eval = [&bump](const Point& u) { return bump.eval(u); };
    CompensatedSum acc;
    for (const auto& a : mu.atoms) acc.add(a.second * periodize_kernel(g, spec, x, a.first));
    return acc.value();
}

GridFunction mollify_measure(const GroupDescriptor& g, const DiscreteMeasure& mu, double eps,
                             const std::vector<int>& resolution) {
    auto gp = std::make_shared<const GroupDescriptor>(g);
    BumpProfile bump(g, eps);
    KernelSpec spec;
    spec.compact = true;
    spec.support_radius = eps;
    spec.eval = [&bump](const Point& u) { return bump.eval(u); };
    GridFunction out(gp, resolution);
    for (long idx = 0; idx < out.node_count(); ++idx) {
        Point x = out.node_point(idx);
        CompensatedSum acc;
        for (const auto& a : mu.atoms)
            acc.add(a.second * periodize_kernel(g, spec, x, a.first));
        out.values()[idx] = acc.value();
    }
    return out;
}

double mollify_measure_mass(const GroupDescriptor& g, const DiscreteMeasure& mu, double eps,
                            int qpts) {
    // per-atom substitution: the x-integral of the periodized kernel equals
    // the full-space integral of psi_eps, atom by atom; the raw quadrature
    // keeps this an actual check rather than an identity
    BumpProfile bump(g, eps);
    auto q = bump.unit_quadrature(qpts, /*normalize=*/false);
    double kernel_mass = 0.0;
    for (double w : q.weights) kernel_mass += w;
    return kernel_mass * mu.total_mass();
}

DiscreteMeasure mollify_measure_atoms(const GroupDescriptor& g, const DiscreteMeasure& mu,
                                      double eps, int qpts) {
    BumpProfile bump(g, eps);
    auto q = bump.unit_quadrature(qpts);
    DiscreteMeasure out;
    for (const auto& a : mu.atoms) {
        for (std::size_t i = 0; i < q.nodes.size(); ++i) {
            Point u = dilate(g, eps, q.nodes[i]);
            // mass of atom a transported to the (reduced) point of the
            // periodized kernel: x solves u = x o y^-1 modulo the lattice,
            // i.e. x = u o y
            Point x = reduce(g, compose(g, u, a.first)).point;
            out.atoms.emplace_back(x, a.second * q.weights[i]);
        }
    }
    return out;
}

// --- heat mollifier -----------------------------------------------------------

double time_bump(double s) {
    if (std::abs(s) >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - s * s));
}

double time_bump_normalization() {
    static double Z = [] {
        // smooth compact support; midpoint converges fast
        const int N = 20001;
        double acc = 0.0;
        for (int i = 0; i < N; ++i) {
            double s = -1.0 + (i + 0.5) * (2.0 / N);
            acc += time_bump(s) * (2.0 / N);
        }
        return acc;
    }();
    return Z;
}

GridFunction mollify_heat_slice(const GridFunction& fn, double eps, const SDEConfig& cfg) {
    const GroupDescriptor& g = fn.group();
    // E[f(x o G_p)] with shared displacements: exact-in-distribution heat
    // factor, linear in f for fixed seeds
    std::vector<Point> disp = heat_displacements(g, eps, cfg);
    GridFunction out(fn.group_ptr(), fn.resolution());
    const double inv = 1.0 / static_cast<double>(disp.size());
    Point moved(g.dim()), red(g.dim());
    for (long idx = 0; idx < out.node_count(); ++idx) {
        Point x = out.node_point(idx);
        CompensatedSum acc;
        for (const auto& gp : disp) {
            compose_into(g, x, gp, moved);
            reduce_point_into(g, moved, red);
            acc.add(fn.eval_in_cube(red));
        }
        out.values()[idx] = acc.value() * inv;
    }
    return out;
}

SpaceTimeFunction mollify_heat(const SpaceTimeFunction& fn, double eps, const SDEConfig& cfg) {
    if (fn.slices.empty()) throw ContractError("empty space-time input");
    const GroupDescriptor& g = fn.slices[0].group();
    const int nt = fn.steps();
    const double dt = fn.dt();

    // Stage 1: time convolution with phi_eps(t) = phi(t/eps)/(eps Z), data
    // extended constantly outside [t0, t1].
    std::vector<GridFunction> tstage;
    tstage.reserve(nt + 1);
    const double Z = time_bump_normalization();
    // quadrature points across the bump support [-eps, eps]
    const int nq = 33;
    std::vector<double> wq(nq);
    double wsum = 0.0;
    for (int qi = 0; qi < nq; ++qi) {
        double s = -1.0 + (qi + 0.5) * (2.0 / nq);
        wq[qi] = time_bump(s) * (2.0 / nq) / Z;
        wsum += wq[qi];
    }
    for (int i = 0; i <= nt; ++i) {
        double t = fn.time_of(i);
        GridFunction acc(fn.slices[0].group_ptr(), fn.slices[0].resolution());
        for (int qi = 0; qi < nq; ++qi) {
            double s = -1.0 + (qi + 0.5) * (2.0 / nq);
            double ts = t - eps * s;  // constant extension outside [t0, t1]
            double sidx = std::clamp((ts - fn.t0) / (dt > 0 ? dt : 1.0), 0.0,
                                     static_cast<double>(nt));
            int j0 = std::min(static_cast<int>(std::floor(sidx)), std::max(nt - 1, 0));
            double th = sidx - j0;
            const auto& lo = fn.slices[static_cast<std::size_t>(j0)].values();
            const auto& hi = fn.slices[static_cast<std::size_t>(std::min(j0 + 1, nt))].values();
            acc.values() += (wq[qi] / wsum) * ((1.0 - th) * lo + th * hi);
        }
        tstage.push_back(std::move(acc));
    }

    // Stage 2: space convolution with Gamma_0(eps, .) by shared-increment MC.
    std::vector<Point> disp = heat_displacements(g, eps, cfg);
    const double inv = 1.0 / static_cast<double>(disp.size());
    SpaceTimeFunction out;
    out.t0 = fn.t0;
    out.t1 = fn.t1;
    for (int i = 0; i <= nt; ++i) {
        GridFunction slice(fn.slices[0].group_ptr(), fn.slices[0].resolution());
        Point moved(g.dim()), red(g.dim());
        for (long idx = 0; idx < slice.node_count(); ++idx) {
            Point x = slice.node_point(idx);
            CompensatedSum acc;
            for (const auto& gp : disp) {
                compose_into(g, x, gp, moved);
                reduce_point_into(g, moved, red);
                acc.add(tstage[static_cast<std::size_t>(i)].eval_in_cube(red));
            }
            slice.values()[idx] = acc.value() * inv;
        }
        out.slices.push_back(std::move(slice));
    }
    return out;
}

}  // namespace carnot
