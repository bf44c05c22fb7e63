#include "carnot/heat.hpp"

#include <cmath>
#include <fstream>

#include "carnot/mollify.hpp"

namespace carnot {

namespace {

struct GeometricScratch {
    Point step;   // embedded horizontal increment
    Point next;
    explicit GeometricScratch(int n) : step(Point::Zero(n)), next(Point::Zero(n)) {}
};

// Strang split: half drift flow, full noise flow, half drift flow; each
// factor is an exact horizontal translation so iterates stay on the group.
void step_geometric(const GroupDescriptor& g, const DriftField& b, double t, double dt, Point& y,
                    std::mt19937_64& rng, std::normal_distribution<double>& N01,
                    GeometricScratch& s) {
    const int n1 = g.horizontal_dim();
    Eigen::VectorXd bv = b(t, y);
    if (bv.size() != n1) throw ConfigError("drift must have n1 components");
    s.step.setZero();
    s.step.head(n1) = -0.5 * dt * bv;
    compose_into(g, y, s.step, s.next);
    const double root = std::sqrt(2.0 * dt);
    for (int i = 0; i < n1; ++i) s.step[i] = root * N01(rng);
    compose_into(g, s.next, s.step, y);
    bv = b(t + dt, y);
    s.step.head(n1) = -0.5 * dt * bv;
    compose_into(g, y, s.step, s.next);
    y.swap(s.next);
}

Point step_heun(const GroupDescriptor& g, const DriftField& b, double t, double dt,
                const Point& x, std::mt19937_64& rng, std::normal_distribution<double>& N01) {
    const int n1 = g.horizontal_dim();
    Eigen::VectorXd dw(n1);
    for (int i = 0; i < n1; ++i) dw[i] = N01(rng) * std::sqrt(dt);
    auto rhs_drift = [&](double s, const Point& y) -> Point {
        return generator_matrix(g, y) * (-b(s, y));
    };
    auto rhs_noise = [&](const Point& y) -> Point {
        return generator_matrix(g, y) * (std::sqrt(2.0) * dw);
    };
    Point pred = x + rhs_drift(t, x) * dt + rhs_noise(x);
    Point out = x + 0.5 * (rhs_drift(t, x) + rhs_drift(t + dt, pred)) * dt +
                0.5 * (rhs_noise(x) + rhs_noise(pred));
    return out;
}

}  // namespace

Point sample_path(const GroupDescriptor& g, const DriftField& b, double t0, double t1,
                  const Point& x0, double dt, SdeScheme scheme, std::mt19937_64& rng,
                  std::vector<Point>* path_out) {
    g.check_point(x0);
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (dt > t1 - t0) throw ConfigError("dt exceeds the integration window");
    std::normal_distribution<double> N01(0.0, 1.0);
    Point y = x0;
    if (path_out) {
        path_out->clear();
        path_out->push_back(y);
    }
    double t = t0;
    GeometricScratch scratch(g.dim());
    const long n_steps = static_cast<long>(std::ceil((t1 - t0) / dt - 1e-12));
    for (long s = 0; s < n_steps; ++s) {
        double h = std::min(dt, t1 - t);
        if (h <= 0.0) break;
        if (scheme == SdeScheme::SplitStepGeometric)
            step_geometric(g, b, t, h, y, rng, N01, scratch);
        else
            y = step_heun(g, b, t, h, y, rng, N01);
        t += h;
        if (path_out) path_out->push_back(y);
    }
    return y;
}

Point sample_path(const GroupDescriptor& g, const DriftField& b, double t0, double t1,
                  const Point& x0, const SDEConfig& cfg, std::vector<Point>* path_out) {
    cfg.check(t0, t1);
    std::mt19937_64 rng(cfg.seed);
    return sample_path(g, b, t0, t1, x0, cfg.dt, cfg.scheme, rng, path_out);
}

McEstimate heat_apply(const GroupDescriptor& g, const ScalarField& f, double t, const Point& x,
                      const SDEConfig& cfg) {
    if (t <= 0.0) return {f(x), 0.0, cfg.n_particles};
    SDEConfig c = cfg;
    c.dt = std::min(cfg.dt, t);
    c.check(0.0, t);
    auto b0 = zero_drift(g);

    ShardedRuns shards(c.seed, c.n_particles);
    std::vector<double> sums(shards.shards(), 0.0), sqs(shards.shards(), 0.0);
    shards.run(c.threads, [&](std::size_t s, std::mt19937_64& rng, std::size_t first,
                              std::size_t last) {
        CompensatedSum sum, sq;
        for (std::size_t i = first; i < last; ++i) {
            Point e = sample_path(g, b0, 0.0, t, x, c.dt, c.scheme, rng);
            double v = f(e);
            sum.add(v);
            sq.add(v * v);
        }
        sums[s] = sum.value();
        sqs[s] = sq.value();
    });
    CompensatedSum total, total_sq;
    for (std::size_t s = 0; s < shards.shards(); ++s) {
        total.add(sums[s]);
        total_sq.add(sqs[s]);
    }
    const double N = static_cast<double>(c.n_particles);
    double mean = total.value() / N;
    double var = std::max(0.0, total_sq.value() / N - mean * mean);
    return {mean, std::sqrt(var / N), c.n_particles};
}

std::vector<Point> heat_displacements(const GroupDescriptor& g, double t, const SDEConfig& cfg) {
    SDEConfig c = cfg;
    c.dt = std::min(cfg.dt, t > 0 ? t : cfg.dt);
    std::vector<Point> out(cfg.n_particles, Point::Zero(g.dim()));
    if (t <= 0.0) return out;
    auto b0 = zero_drift(g);
    ShardedRuns shards(c.seed, c.n_particles);
    shards.run(c.threads, [&](std::size_t, std::mt19937_64& rng, std::size_t first,
                              std::size_t last) {
        for (std::size_t i = first; i < last; ++i)
            out[i] = sample_path(g, b0, 0.0, t, Point::Zero(g.dim()), c.dt, c.scheme, rng);
    });
    return out;
}

HeatKernelEstimate estimate_kernel(const GroupDescriptor& g, double t, const Point& x,
                                   const SDEConfig& cfg, double bandwidth) {
    g.check_point(x);
    HeatKernelEstimate est;
    est.t = t;
    est.x = x;
    if (t <= 0.0) {
        est.vanished = true;  // Gamma_0 vanishes for t <= 0; exact zero, no MC
        return est;
    }
    const double Q = g.homogeneous_dim();
    double h = bandwidth > 0.0
                   ? bandwidth
                   : std::pow(static_cast<double>(cfg.n_particles), -1.0 / (Q + 4.0)) *
                         std::sqrt(t);
    est.bandwidth = h;
    est.n = cfg.n_particles;

    const BumpProfile window(g, h);

    SDEConfig c = cfg;
    c.dt = std::min(cfg.dt, t);
    auto b0 = zero_drift(g);
    ShardedRuns shards(c.seed, c.n_particles);
    std::vector<double> sums(shards.shards(), 0.0), sqs(shards.shards(), 0.0);
    Point xinv = inverse(g, x);
    shards.run(c.threads, [&](std::size_t s, std::mt19937_64& rng, std::size_t first,
                              std::size_t last) {
        CompensatedSum sum, sq;
        for (std::size_t i = first; i < last; ++i) {
            Point e = sample_path(g, b0, 0.0, t, Point::Zero(g.dim()), c.dt, c.scheme, rng);
            double v = window.eval(compose(g, xinv, e));  // window centered at x
            sum.add(v);
            sq.add(v * v);
        }
        sums[s] = sum.value();
        sqs[s] = sq.value();
    });
    CompensatedSum total, total_sq;
    for (std::size_t s = 0; s < shards.shards(); ++s) {
        total.add(sums[s]);
        total_sq.add(sqs[s]);
    }
    const double N = static_cast<double>(c.n_particles);
    est.value = total.value() / N;
    double var = std::max(0.0, total_sq.value() / N - est.value * est.value);
    est.std_error = std::sqrt(var / N);
    return est;
}

void dump_endpoints(const std::string& path, const std::vector<Point>& pts, double weight) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (const auto& p : pts) {
        out.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(p.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(&weight), sizeof(double));
    }
}

}  // namespace carnot

namespace carnot {

KernelDensity::KernelDensity(const GroupDescriptor& g, std::vector<Point> endpoints,
                             double bandwidth)
    : g_(g), pts_(std::move(endpoints)), h_(bandwidth) {
    if (pts_.empty()) throw ContractError("kernel density needs endpoints");
    if (!(h_ > 0.0)) throw DomainError("bandwidth must be positive");
    inv_n_ = 1.0 / static_cast<double>(pts_.size());
    window_ = std::make_shared<BumpProfile>(g_, h_);
    const int n = g_.dim();
    mean_ = Eigen::VectorXd::Zero(n);
    sd_ = Eigen::VectorXd::Zero(n);
    for (const auto& p : pts_) mean_ += p;
    mean_ *= inv_n_;
    for (const auto& p : pts_) sd_ += (p - mean_).cwiseAbs2();
    sd_ = (sd_ * inv_n_).cwiseSqrt().cwiseMax(1e-6);
    for (int i = 0; i < static_cast<int>(pts_.size()); ++i)
        bins_[key_of(pts_[static_cast<std::size_t>(i)][0],
                     g_.horizontal_dim() > 1 ? pts_[static_cast<std::size_t>(i)][1] : 0.0)]
            .push_back(i);
}

double KernelDensity::window_eval(const Point& u) const {
    return static_cast<const BumpProfile*>(window_.get())->eval(u);
}

long long KernelDensity::key_of(double a, double b) const {
    long long ia = static_cast<long long>(std::floor(a / h_));
    long long ib = static_cast<long long>(std::floor(b / h_));
    return ia * 2000003LL + ib;
}

McEstimate KernelDensity::eval(const Point& x) const {
    g_.check_point(x);
    Point xinv = inverse(g_, x);
    Point u(g_.dim());
    // window support: |u^(1)| <= h, so only first-layer cells within one
    // step of x can contribute
    CompensatedSum sum, sq;
    const bool two = g_.horizontal_dim() > 1;
    for (int da = -1; da <= 1; ++da)
        for (int db = (two ? -1 : 0); db <= (two ? 1 : 0); ++db) {
            auto it = bins_.find(key_of(x[0] + da * h_, two ? x[1] + db * h_ : 0.0));
            if (it == bins_.end()) continue;
            for (int idx : it->second) {
                compose_into(g_, xinv, pts_[static_cast<std::size_t>(idx)], u);
                double v = window_eval(u);
                if (v != 0.0) {
                    sum.add(v);
                    sq.add(v * v);
                }
            }
        }
    const double N = static_cast<double>(pts_.size());
    double meanv = sum.value() / N;
    double var = std::max(0.0, sq.value() / N - meanv * meanv);
    return {meanv, std::sqrt(var / N), pts_.size()};
}

McEstimate KernelDensity::mass(std::uint64_t polls, std::uint64_t seed) const {
    // E_q[ f(X)/q(X) ] with q a moment-matched Gaussian product; the exact
    // value is 1 because every window integrates to 1, so the estimate
    // validates the estimator pipeline end to end
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N01(0.0, 1.0);
    const int n = g_.dim();
    const double tau = 1.4;  // widen q to cover the window padding
    CompensatedSum sum, sq;
    Point x(n);
    const double log2pi = std::log(2.0 * 3.14159265358979323846);
    for (std::uint64_t m = 0; m < polls; ++m) {
        double logq = 0.0;
        for (int i = 0; i < n; ++i) {
            double z = N01(rng);
            x[i] = mean_[i] + tau * sd_[i] * z;
            logq += -0.5 * z * z - std::log(tau * sd_[i]) - 0.5 * log2pi;
        }
        double v = eval(x).value / std::exp(logq);
        sum.add(v);
        sq.add(v * v);
    }
    const double M = static_cast<double>(polls);
    double meanv = sum.value() / M;
    double var = std::max(0.0, sq.value() / M - meanv * meanv);
    return {meanv, std::sqrt(var / M), polls};
}

}  // namespace carnot
