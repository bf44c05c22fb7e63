#include "carnot/solve.hpp"

#include <algorithm>
#include <cmath>

namespace carnot {

namespace {

// periodic cubic Lagrange weights at fractional offset th in [0,1)
inline void cubic_weights(double th, double w[4]) {
    w[0] = -th * (th - 1.0) * (th - 2.0) / 6.0;
    w[1] = (th * th - 1.0) * (th - 2.0) / 2.0;
    w[2] = -th * (th + 1.0) * (th - 2.0) / 2.0;
    w[3] = th * (th * th - 1.0) / 6.0;
}

}  // namespace

ShiftOperator::ShiftOperator(const GridFunction& layout, int generator, double delta,
                             bool forward) {
    const GroupDescriptor& g = layout.group();
    const int n = g.dim();
    const auto& res = layout.resolution();
    nodes_ = layout.node_count();

    HorizontalVector e = HorizontalVector::Zero(g.horizontal_dim());
    e[generator] = forward ? 1.0 : -1.0;

    // per-node stencil: exact node shift on axes whose displacement is an
    // integer number of cells, cubic Lagrange on the rest
    std::vector<long> strides(n);
    long s = 1;
    for (int i = 0; i < n; ++i) {
        strides[i] = s;
        s *= res[i];
    }

    width_ = 1;
    std::vector<int> interp_axes;
    // The displacement of x o (delta e_i) is exactly delta on the generator
    // axis (a whole number of cells when delta*res is integer), zero on the
    // other first-layer axes, and node-dependent on layer-2 axes.
    for (int ax = 0; ax < n; ++ax) {
        if (g.layer_of(ax) == 1) {
            if (ax != generator) continue;
            double cells = delta * res[ax];
            if (std::abs(cells - std::lround(cells)) < 1e-12) continue;
        }
        interp_axes.push_back(ax);
    }
    for (std::size_t t = 0; t < interp_axes.size(); ++t) width_ *= 4;

    idx_.assign(nodes_ * width_, 0);
    w_.assign(nodes_ * width_, 0.0);
    max_l1_ = 0.0;

    Point shift = embed_horizontal(g, delta * e.cast<double>());
    for (long node = 0; node < nodes_; ++node) {
        Point x = layout.node_point(node);
        Point y = compose(g, x, shift);
        Reduced rd = reduce(g, y);
        const Point& p = rd.point;

        // integer base index + fraction per axis
        std::vector<int> base(n);
        std::vector<double> frac(n);
        for (int i = 0; i < n; ++i) {
            double v = p[i] * res[i];
            double fl = std::floor(v);
            int j = static_cast<int>(fl) % res[i];
            if (j < 0) j += res[i];
            double th = v - fl;
            // snap near-integer offsets so exact shifts stay single-node
            if (th < 1e-9) {
                th = 0.0;
            } else if (th > 1.0 - 1e-9) {
                th = 0.0;
                j = (j + 1) % res[i];
            }
            base[i] = j;
            frac[i] = th;
        }

        double l1 = 0.0;
        for (int corner = 0; corner < width_; ++corner) {
            double wgt = 1.0;
            long flat = 0;
            int rem = corner;
            for (int i = 0; i < n; ++i) {
                bool is_interp = std::find(interp_axes.begin(), interp_axes.end(), i) !=
                                 interp_axes.end();
                int j = base[i];
                if (is_interp) {
                    int c = rem % 4;
                    rem /= 4;
                    double cw[4];
                    cubic_weights(frac[i], cw);
                    wgt *= cw[c];
                    j = (base[i] + c - 1) % res[i];
                    if (j < 0) j += res[i];
                } else {
                    if (frac[i] != 0.0) {
                        // an axis we assumed exact is fractional after all:
                        // fall back to nearest node (should not happen)
                        j = (frac[i] > 0.5) ? (base[i] + 1) % res[i] : base[i];
                    }
                }
                flat += strides[i] * j;
            }
            idx_[node * width_ + corner] = flat;
            w_[node * width_ + corner] = wgt;
            l1 += std::abs(wgt);
        }
        max_l1_ = std::max(max_l1_, l1);
    }
}

void ShiftOperator::apply(const Eigen::ArrayXd& in, Eigen::ArrayXd& out) const {
    out.resize(nodes_);
    for (long node = 0; node < nodes_; ++node) {
        double acc = 0.0;
        const long off = node * width_;
        for (int c = 0; c < width_; ++c) acc += w_[off + c] * in[idx_[off + c]];
        out[node] = acc;
    }
}

void ShiftOperator::apply_transpose(const Eigen::ArrayXd& in, Eigen::ArrayXd& out) const {
    out = Eigen::ArrayXd::Zero(nodes_);
    for (long node = 0; node < nodes_; ++node) {
        const long off = node * width_;
        const double v = in[node];
        for (int c = 0; c < width_; ++c) out[idx_[off + c]] += w_[off + c] * v;
    }
}

StencilPack::StencilPack(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution)
    : layout_(g, resolution), n1_(g->horizontal_dim()) {
    int mmax = *std::max_element(resolution.begin(), resolution.end());
    delta_ = 1.0 / mmax;
    for (int i = 0; i < n1_; ++i) {
        fwd_.emplace_back(layout_, i, delta_, true);
        bwd_.emplace_back(layout_, i, delta_, false);
    }
}

void StencilPack::laplacian(const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const {
    out = Eigen::ArrayXd::Zero(u.size());
    const double inv = 1.0 / (delta_ * delta_);
    for (int i = 0; i < n1_; ++i) {
        fwd_[static_cast<std::size_t>(i)].apply(u, tmp_);
        bwd_[static_cast<std::size_t>(i)].apply(u, tmp2_);
        out += (tmp_ + tmp2_ - 2.0 * u) * inv;
    }
}

void StencilPack::laplacian_transpose(const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const {
    out = Eigen::ArrayXd::Zero(u.size());
    const double inv = 1.0 / (delta_ * delta_);
    for (int i = 0; i < n1_; ++i) {
        fwd_[static_cast<std::size_t>(i)].apply_transpose(u, tmp_);
        bwd_[static_cast<std::size_t>(i)].apply_transpose(u, tmp2_);
        out += (tmp_ + tmp2_ - 2.0 * u) * inv;
    }
}

void StencilPack::gradient_i(int i, const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const {
    fwd_[static_cast<std::size_t>(i)].apply(u, tmp_);
    bwd_[static_cast<std::size_t>(i)].apply(u, tmp2_);
    out = (tmp_ - tmp2_) / (2.0 * delta_);
}

void StencilPack::gradient_i_transpose(int i, const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const {
    fwd_[static_cast<std::size_t>(i)].apply_transpose(u, tmp_);
    bwd_[static_cast<std::size_t>(i)].apply_transpose(u, tmp2_);
    out = (tmp_ - tmp2_) / (2.0 * delta_);
}

double StencilPack::cfl_dt(double b_max) const {
    return delta_ * delta_ / (4.0 * n1_ + 2.0 * delta_ * b_max);
}

namespace {

double estimate_bmax(const DriftField& b, const GridFunction& layout, double T) {
    double bmax = 0.0;
    const long stride = std::max<long>(1, layout.node_count() / 512);
    for (double t : {0.0, 0.5 * T, T})
        for (long idx = 0; idx < layout.node_count(); idx += stride) {
            Eigen::VectorXd bv = b(t, layout.node_point(idx));
            bmax = std::max(bmax, bv.lpNorm<Eigen::Infinity>());
        }
    return bmax;
}

}  // namespace

SpaceTimeFunction solve_backward_fd(const BackwardProblem& prob,
                                    const std::vector<int>& resolution, double dt,
                                    SolveReport* report, int store_every) {
    auto g = prob.group;
    StencilPack st(g, resolution);
    const double bmax = estimate_bmax(prob.b, st.layout(), prob.T);
    const double dt_ok = st.cfl_dt(bmax);
    if (dt > dt_ok + 1e-15)
        throw CflError("dt=" + std::to_string(dt) + " exceeds the stability bound", dt_ok);

    const long nodes = st.layout().node_count();
    const int n1 = st.n1();
    int steps = static_cast<int>(std::ceil(prob.T / dt - 1e-12));
    store_every = std::clamp(store_every, 1, steps);
    if (store_every > 1 && steps % store_every != 0)
        steps += store_every - steps % store_every;
    dt = prob.T / steps;  // uniform slices

    // w solves the forward-in-s problem; slices are stored in s and flipped
    // into z(t) = w(T-t) at the end
    Eigen::ArrayXd w(nodes), lap(nodes), gi(nodes), rhs(nodes);
    for (long idx = 0; idx < nodes; ++idx) w[idx] = prob.z_T(st.layout().node_point(idx));

    std::vector<Eigen::ArrayXd> stored;
    std::vector<int> stored_step;
    stored.push_back(w);
    stored_step.push_back(0);

    Eigen::ArrayXd fvals(nodes);
    std::vector<Eigen::ArrayXd> bvals(static_cast<std::size_t>(n1), Eigen::ArrayXd(nodes));
    bool data_ready = false;
    double maxval = 0.0;
    double s = 0.0;
    for (int step = 0; step < steps; ++step) {
        const double h = dt;
        double t_phys = prob.T - s;  // data evaluated at the physical time
        if (!(prob.b_static && prob.f_static && data_ready)) {
            for (long idx = 0; idx < nodes; ++idx) {
                Point x = st.layout().node_point(idx);
                if (!(prob.f_static && data_ready)) fvals[idx] = prob.f(t_phys, x);
                if (!(prob.b_static && data_ready)) {
                    Eigen::VectorXd bv = prob.b(t_phys, x);
                    for (int i = 0; i < n1; ++i) bvals[static_cast<std::size_t>(i)][idx] = bv[i];
                }
            }
            data_ready = true;
        }
        st.laplacian(w, lap);
        rhs = lap + fvals;
        for (int i = 0; i < n1; ++i) {
            st.gradient_i(i, w, gi);
            rhs -= bvals[static_cast<std::size_t>(i)] * gi;
        }
        w += h * rhs;
        s += h;
        maxval = std::max(maxval, w.abs().maxCoeff());
        if ((step + 1) % store_every == 0 || step + 1 == steps) {
            stored.push_back(w);
            stored_step.push_back(step + 1);
        }
    }

    SpaceTimeFunction out;
    out.t0 = 0.0;
    out.t1 = prob.T;
    // flip: slice j of the output is z at time t_j = T - s_j, ascending in t
    for (auto it = stored.rbegin(); it != stored.rend(); ++it)
        out.slices.emplace_back(g, resolution, *it);
    if (report) {
        report->dt = dt;
        report->delta = st.delta();
        report->steps = steps;
        report->cfl_bound = dt_ok;
        report->max_value = maxval;
    }
    return out;
}

SpaceTimeFunction solve_fpk_fd(const FPKProblem& prob, const std::vector<int>& resolution,
                               double dt, SolveReport* report, int store_every) {
    auto g = prob.group;
    StencilPack st(g, resolution);
    const double bmax = estimate_bmax(prob.b, st.layout(), prob.T);
    const double dt_ok = st.cfl_dt(bmax);
    if (dt > dt_ok + 1e-15)
        throw CflError("dt=" + std::to_string(dt) + " exceeds the stability bound", dt_ok);

    const long nodes = st.layout().node_count();
    const int n1 = st.n1();
    int steps = static_cast<int>(std::ceil(prob.T / dt - 1e-12));
    store_every = std::clamp(store_every, 1, steps);
    if (store_every > 1 && steps % store_every != 0)
        steps += store_every - steps % store_every;
    dt = prob.T / steps;  // uniform slices

    Eigen::ArrayXd rho(nodes), lapT(nodes), giT(nodes), rhs(nodes), tmp(nodes);
    if (prob.rho0_atoms) {
        // pre-mollify measures at twice the grid scale
        GridFunction dens = mollify_measure(*g, *prob.rho0_atoms, 2.0 * st.delta(), resolution);
        rho = dens.values();
    } else {
        for (long idx = 0; idx < nodes; ++idx) rho[idx] = prob.rho0(st.layout().node_point(idx));
    }

    const double cell = st.layout().cell_volume();
    const double mass0 = rho.sum() * cell;

    std::vector<Eigen::ArrayXd> stored;
    stored.push_back(rho);

    std::optional<Eigen::ArrayXd> upsilon_fixed;
    if (prob.upsilon_atoms) {
        GridFunction dens = mollify_measure(*g, *prob.upsilon_atoms, 2.0 * st.delta(), resolution);
        upsilon_fixed = dens.values();
    }

    Eigen::ArrayXd uvals(nodes);
    std::vector<Eigen::ArrayXd> bvals(static_cast<std::size_t>(n1), Eigen::ArrayXd(nodes));
    bool data_ready = false;
    double t = 0.0;
    double upsilon_mass_added = 0.0;
    for (int step = 0; step < steps; ++step) {
        const double h = dt;
        bool u_ready = data_ready && (prob.upsilon_static || upsilon_fixed.has_value());
        bool b_ready = data_ready && prob.b_static;
        if (!(u_ready && b_ready)) {
            for (long idx = 0; idx < nodes; ++idx) {
                Point x = st.layout().node_point(idx);
                if (!u_ready) {
                    if (upsilon_fixed)
                        uvals[idx] = (*upsilon_fixed)[idx];
                    else
                        uvals[idx] = prob.upsilon ? prob.upsilon(t, x) : 0.0;
                }
                if (!b_ready) {
                    Eigen::VectorXd bv = prob.b(t, x);
                    for (int i = 0; i < n1; ++i) bvals[static_cast<std::size_t>(i)][idx] = bv[i];
                }
            }
            data_ready = true;
        }
        st.laplacian_transpose(rho, lapT);
        rhs = lapT + uvals;
        for (int i = 0; i < n1; ++i) {
            tmp = bvals[static_cast<std::size_t>(i)] * rho;
            st.gradient_i_transpose(i, tmp, giT);
            rhs -= giT;  // div_X^h(rho b) := -G_i^T(b_i rho), the exact
                         // negative transpose of the backward drift term
        }
        rho += h * rhs;
        upsilon_mass_added += h * uvals.sum() * cell;
        t += h;
        if ((step + 1) % store_every == 0 || step + 1 == steps) stored.push_back(rho);
    }

    SpaceTimeFunction out;
    out.t0 = 0.0;
    out.t1 = prob.T;
    for (auto& sl : stored) out.slices.emplace_back(g, resolution, sl);
    if (report) {
        report->dt = dt;
        report->delta = st.delta();
        report->steps = steps;
        report->cfl_bound = dt_ok;
        report->max_value = rho.abs().maxCoeff();
        report->mass_drift = std::abs(rho.sum() * cell - mass0 - upsilon_mass_added);
    }
    return out;
}

McEstimate feynman_kac_oracle(const BackwardProblem& prob, double t, const Point& x,
                              const SDEConfig& cfg) {
    const GroupDescriptor& g = *prob.group;
    if (t >= prob.T) return {prob.z_T(x), 0.0, cfg.n_particles};
    SDEConfig c = cfg;
    // uniform path steps so the trapezoid along the path lines up
    long nst = static_cast<long>(std::ceil((prob.T - t) / std::min(cfg.dt, prob.T - t) - 1e-12));
    c.dt = (prob.T - t) / static_cast<double>(nst);

    ShardedRuns shards(c.seed, c.n_particles);
    std::vector<double> sums(shards.shards(), 0.0), sqs(shards.shards(), 0.0);
    shards.run(c.threads, [&](std::size_t s, std::mt19937_64& rng, std::size_t first,
                              std::size_t last) {
        CompensatedSum sum, sq;
        std::vector<Point> path;
        for (std::size_t p = first; p < last; ++p) {
            Point e = sample_path(g, prob.b, t, prob.T, x, c.dt, c.scheme, rng, &path);
            // trapezoid along the path for the running source integral
            double acc = 0.0;
            const double h = (prob.T - t) / static_cast<double>(path.size() - 1);
            for (std::size_t k = 0; k < path.size(); ++k) {
                double w = (k == 0 || k + 1 == path.size()) ? 0.5 : 1.0;
                acc += w * prob.f(t + static_cast<double>(k) * h, path[k]) * h;
            }
            double v = prob.z_T(e) + acc;
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

DiscreteMeasure ParticleEnsemble::to_measure() const {
    DiscreteMeasure mu;
    for (long j = 0; j < positions.cols(); ++j)
        mu.atoms.emplace_back(positions.col(j), weights[j]);
    return mu;
}

std::vector<ParticleEnsemble> simulate_fpk_particles(const FPKProblem& prob, const SDEConfig& cfg,
                                                     int snapshots) {
    const GroupDescriptor& g = *prob.group;
    if (prob.upsilon || prob.upsilon_atoms)
        throw ConfigError("particle transport supports upsilon = 0 only; use the grid solver");
    const int n = g.dim();
    const long N = static_cast<long>(cfg.n_particles);

    // sample rho0: atoms by categorical draw, densities by rejection on the cube
    Eigen::MatrixXd pos(n, N);
    {
        std::mt19937_64 rng(shard_seed(cfg.seed, 0xfeed));
        std::uniform_real_distribution<double> U(0.0, 1.0);
        if (prob.rho0_atoms) {
            const auto& atoms = prob.rho0_atoms->atoms;
            std::vector<double> cdf;
            double acc = 0.0;
            for (const auto& a : atoms) {
                acc += a.second;
                cdf.push_back(acc);
            }
            for (long j = 0; j < N; ++j) {
                double u = U(rng) * acc;
                std::size_t k = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
                k = std::min(k, atoms.size() - 1);
                pos.col(j) = atoms[k].first;
            }
        } else {
            double fmax = 0.0;
            for (int trial = 0; trial < 4096; ++trial) {
                Point x(n);
                for (int i = 0; i < n; ++i) x[i] = U(rng);
                fmax = std::max(fmax, prob.rho0(x));
            }
            fmax *= 1.2;
            for (long j = 0; j < N; ++j) {
                for (;;) {
                    Point x(n);
                    for (int i = 0; i < n; ++i) x[i] = U(rng);
                    if (U(rng) * fmax <= prob.rho0(x)) {
                        pos.col(j) = x;
                        break;
                    }
                }
            }
        }
    }

    std::vector<ParticleEnsemble> out;
    const double snap_dt = prob.T / snapshots;
    auto snap = [&](double tnow) {
        ParticleEnsemble e;
        e.positions = pos;
        e.weights = Eigen::VectorXd::Constant(N, 1.0 / static_cast<double>(N));
        e.time = tnow;
        e.seed = cfg.seed;
        out.push_back(std::move(e));
    };
    snap(0.0);

    for (int sidx = 0; sidx < snapshots; ++sidx) {
        double t0 = sidx * snap_dt, t1 = (sidx + 1) * snap_dt;
        ShardedRuns shards(splitmix64(cfg.seed + 17 * (sidx + 1)), static_cast<std::size_t>(N));
        shards.run(cfg.threads, [&](std::size_t, std::mt19937_64& rng, std::size_t first,
                                    std::size_t last) {
            std::normal_distribution<double> N01(0.0, 1.0);
            const int n1 = g.horizontal_dim();
            Point y(n), step(Point::Zero(n)), nx(n);
            for (std::size_t j = first; j < last; ++j) {
                y = pos.col(static_cast<long>(j));
                double t = t0;
                while (t < t1 - 1e-14) {
                    double h = std::min(cfg.dt, t1 - t);
                    Eigen::VectorXd bv = prob.b(t, y);
                    step.setZero();
                    step.head(n1) = -0.5 * h * bv;
                    compose_into(g, y, step, nx);
                    const double root = std::sqrt(2.0 * h);
                    for (int i = 0; i < n1; ++i) step[i] = root * N01(rng);
                    compose_into(g, nx, step, y);
                    bv = prob.b(t + h, y);
                    step.head(n1) = -0.5 * h * bv;
                    compose_into(g, y, step, nx);
                    reduce_point_into(g, nx, y);  // constrained to the torus
                    t += h;
                }
                pos.col(static_cast<long>(j)) = y;
            }
        });
        snap(t1);
    }
    return out;
}

double duality_residual(const SpaceTimeFunction& rho, const FPKProblem& prob,
                        const GridFunction& xi, const TimeScalarField& f, double t, double dt) {
    if (rho.slices.empty()) throw ContractError("empty density");
    const auto& res = rho.slices[0].resolution();
    if (xi.resolution() != res) throw ContractError("xi grid does not match the density grid");
    auto g = prob.group;
    const double cell = rho.slices[0].cell_volume();

    // dual solve: terminal data xi at horizon t, same drift, source f
    BackwardProblem dual;
    dual.group = g;
    dual.T = t;
    dual.b = prob.b;
    dual.f = f;
    GridFunction xs = xi;
    dual.z_T = [xs](const Point& x) { return xs(x); };
    SpaceTimeFunction z = solve_backward_fd(dual, res, dt);

    auto inner = [cell](const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
        return (a * b).sum() * cell;
    };

    // left side: <rho(t), xi> + int_0^t <rho(s), f(s)> ds
    const GridFunction& rho_t = rho.slice_nearest(t);
    double lhs = inner(rho_t.values(), xi.values());
    {
        // trapezoid over the stored slices of rho within [0, t]
        int nt = rho.steps();
        double hdt = rho.dt();
        CompensatedSum acc;
        Eigen::ArrayXd fv(rho.slices[0].node_count());
        for (int k = 0; k <= nt; ++k) {
            double s = rho.time_of(k);
            if (s > t + 1e-12) break;
            for (long idx = 0; idx < fv.size(); ++idx)
                fv[idx] = f(s, rho.slices[0].node_point(idx));
            double w = (k == 0 || std::abs(s - t) < 1e-12) ? 0.5 : 1.0;
            acc.add(w * inner(rho.slices[static_cast<std::size_t>(k)].values(), fv) * hdt);
        }
        lhs += acc.value();
    }

    // right side: <rho_0, z(0)> + int_0^t <upsilon(s), z(s)> ds
    double rhs = inner(rho.slices[0].values(), z.slices[0].values());
    if (prob.upsilon || prob.upsilon_atoms) {
        int nt = z.steps();
        double hdt = z.dt();
        CompensatedSum acc;
        Eigen::ArrayXd uv(z.slices[0].node_count());
        std::optional<Eigen::ArrayXd> ufix;
        if (prob.upsilon_atoms) {
            StencilPack st(g, res);
            GridFunction dens = mollify_measure(*g, *prob.upsilon_atoms, 2.0 * st.delta(), res);
            ufix = dens.values();
        }
        for (int k = 0; k <= nt; ++k) {
            double s = z.time_of(k);
            if (s > t + 1e-12) break;
            if (ufix)
                uv = *ufix;
            else
                for (long idx = 0; idx < uv.size(); ++idx)
                    uv[idx] = prob.upsilon(s, z.slices[0].node_point(idx));
            double w = (k == 0 || std::abs(s - t) < 1e-12) ? 0.5 : 1.0;
            acc.add(w * inner(uv, z.slices[static_cast<std::size_t>(k)].values()) * hdt);
        }
        rhs += acc.value();
    }
    return std::abs(lhs - rhs);
}

}  // namespace carnot
