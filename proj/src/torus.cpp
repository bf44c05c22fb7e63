#include "carnot/torus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace carnot {

namespace {

double floor_frac(double v, long& ipart) {
    double f = std::floor(v);
    ipart = static_cast<long>(f);
    double frac = v - f;
    if (frac >= 1.0) {  // guard against rounding at the boundary
        frac -= 1.0;
        ipart += 1;
    }
    return frac;
}

}  // namespace

Reduced reduce(const GroupDescriptor& g, const Point& p) {
    g.check_point(p);
    const int n = g.dim();
    Reduced out;
    out.k = LatticeElement::Zero(n);
    Point kf = Point::Zero(n);

    // Per layer: with lower layers of k fixed, (k^-1 o p)_j = p_j - k_j + P(lower),
    // so the integer part of the current residual determines k on that layer.
    int c0 = 0;
    for (std::size_t layer = 0; layer < g.layer_dims().size(); ++layer) {
        Point resid = compose(g, -kf, p);
        int nl = g.layer_dims()[layer];
        for (int t = 0; t < nl; ++t) {
            long ip;
            floor_frac(resid[c0 + t], ip);
            out.k[c0 + t] = static_cast<int>(ip);
            kf[c0 + t] = static_cast<double>(ip);
        }
        c0 += nl;
    }
    out.point = compose(g, -kf, p);
    for (int i = 0; i < n; ++i) {
        // snap rounding dust so the output is a valid representative
        if (out.point[i] < 0.0 && out.point[i] > -1e-12) out.point[i] = 0.0;
        if (out.point[i] >= 1.0 && out.point[i] < 1.0 + 1e-12) out.point[i] -= 1.0;
        if (out.point[i] < 0.0 || out.point[i] >= 1.0)
            throw Error("reduce: layer solve failed to land in [0,1)^n (descriptor inconsistency?)");
    }
    return out;
}

double torus_distance(const GroupDescriptor& g, const Point& x, const Point& y) {
    Point xr = reduce(g, x).point;
    Point yr = reduce(g, y).point;
    const int n = g.dim();
    const int n1 = g.horizontal_dim();

    double best = cc_distance(g, xr, yr).value;

    // Every translate k with d(k o xr, yr) < best must satisfy two necessary
    // conditions, both derived from subunit paths of length L < best anchored
    // at yr (|gamma^(1)(t)| <= |yr^(1)| + t):
    //   (1) the first-layer projection moves at unit speed, so
    //       |k_i + xr_i - yr_i| <= L per coordinate;
    //   (2) each layer-2 coordinate drifts at rate 0.5*S_m*|gamma^(1)|, with
    //       S_m = sum_ij |c^m_ij|, so the absolute coordinate gap obeys
    //       |(k o xr)_m - yr_m| <= 0.5*S_m*(|yr1| L + L^2/2); (k o xr)_m is
    //       k_m plus a known offset, which bounds k_m.
    // Enumerating exactly that candidate box certifies the minimum.
    std::vector<double> S(n, 0.0);
    for (const auto& b : g.brackets()) S[b.m] += std::abs(b.c);

    const double L = best + 1e-12;
    const double y1n = yr.head(n1).norm();
    auto len_for_vertical = [&](int m, double V) {
        // smallest l with 0.5*S_m*(y1n*l + l^2/2) >= V
        if (S[m] <= 0.0) return std::numeric_limits<double>::infinity();
        double a = 0.25 * S[m], bq = 0.5 * S[m] * y1n;
        return (-bq + std::sqrt(bq * bq + 4.0 * a * V)) / (2.0 * a);
    };

    std::vector<std::pair<int, int>> r1(n1);
    for (int i = 0; i < n1; ++i) {
        r1[i] = {static_cast<int>(std::ceil(yr[i] - xr[i] - L)),
                 static_cast<int>(std::floor(yr[i] - xr[i] + L))};
    }
    std::vector<int> k1(n1);
    std::function<void(int)> rec = [&](int axis) {
        if (axis == n1) {
            Point kf = Point::Zero(n);
            for (int i = 0; i < n1; ++i) kf[i] = k1[i];
            Point base = compose(g, kf, xr);  // absolute coordinates, k^(2) = 0
            double low1 = (base.head(n1) - yr.head(n1)).norm();
            if (low1 >= best) return;
            if (n == n1) {
                double d = cc_distance(g, base, yr).value;
                best = std::min(best, d);
                return;
            }
            std::vector<std::pair<int, int>> r2(n - n1);
            for (int m = n1; m < n; ++m) {
                double vmax = 0.5 * S[m] * (y1n * L + 0.5 * L * L) + 1e-9;
                double lo = yr[m] - base[m] - vmax, hi = yr[m] - base[m] + vmax;
                r2[m - n1] = {static_cast<int>(std::ceil(lo)), static_cast<int>(std::floor(hi))};
                if (r2[m - n1].first > r2[m - n1].second) return;
            }
            std::vector<int> k2(n - n1, 0);
            std::function<void(int)> rec2 = [&](int a2) {
                if (a2 == n - n1) {
                    LatticeElement kk = LatticeElement::Zero(n);
                    for (int i = 0; i < n1; ++i) kk[i] = k1[i];
                    for (int m = 0; m < n - n1; ++m) kk[n1 + m] = k2[m];
                    double lower = low1;
                    for (int m = n1; m < n; ++m)
                        lower = std::max(
                            lower, len_for_vertical(m, std::abs(base[m] + k2[m - n1] - yr[m])));
                    if (lower < best) {
                        double dd = cc_distance(g, compose(g, kk.cast<double>(), xr), yr).value;
                        best = std::min(best, dd);
                    }
                    return;
                }
                for (int v = r2[a2].first; v <= r2[a2].second; ++v) {
                    k2[a2] = v;
                    rec2(a2 + 1);
                }
            };
            rec2(0);
            return;
        }
        for (int v = r1[axis].first; v <= r1[axis].second; ++v) {
            k1[axis] = v;
            rec(axis + 1);
        }
    };
    rec(0);
    return best;
}

std::vector<LatticeElement> lattice_in_ball(const GroupDescriptor& g, const Point& w,
                                            double radius) {
    // |(k o w)^(1)| = |k^(1) + w^(1)| <= radius bounds layer 1 exactly;
    // given layer 1, |(k o w)^(2)| = |k^(2) + known| <= radius^2 bounds layer 2.
    const int n = g.dim();
    const int n1 = g.horizontal_dim();
    std::vector<LatticeElement> out;

    std::vector<std::pair<int, int>> range1(n1);
    for (int i = 0; i < n1; ++i) {
        range1[i] = {static_cast<int>(std::ceil(-radius - w[i])) ,
                     static_cast<int>(std::floor(radius - w[i]))};
        if (range1[i].first > range1[i].second) return out;
    }
    std::vector<int> k1(n1);
    std::function<void(int)> rec1 = [&](int axis) {
        if (axis == n1) {
            // second layer bound given k1
            Point kf = Point::Zero(n);
            for (int i = 0; i < n1; ++i) kf[i] = k1[i];
            Point base = compose(g, kf, w);  // with k^(2)=0
            double r2 = radius * radius;
            if (n == n1) {
                out.emplace_back(LatticeElement::Zero(n));
                for (int i = 0; i < n1; ++i) out.back()[i] = k1[i];
                return;
            }
            std::vector<std::pair<int, int>> range2(n - n1);
            for (int m = n1; m < n; ++m) {
                range2[m - n1] = {static_cast<int>(std::ceil(-r2 - base[m])),
                                  static_cast<int>(std::floor(r2 - base[m]))};
                if (range2[m - n1].first > range2[m - n1].second) return;
            }
            std::vector<int> k2(n - n1, 0);
            std::function<void(int)> rec2 = [&](int axis2) {
                if (axis2 == n - n1) {
                    LatticeElement kk = LatticeElement::Zero(n);
                    for (int i = 0; i < n1; ++i) kk[i] = k1[i];
                    for (int m = 0; m < n - n1; ++m) kk[n1 + m] = k2[m];
                    out.push_back(kk);
                    return;
                }
                for (int v = range2[axis2].first; v <= range2[axis2].second; ++v) {
                    k2[axis2] = v;
                    rec2(axis2 + 1);
                }
            };
            rec2(0);
            return;
        }
        for (int v = range1[axis].first; v <= range1[axis].second; ++v) {
            k1[axis] = v;
            rec1(axis + 1);
        }
    };
    rec1(0);
    return out;
}

double periodize_kernel(const GroupDescriptor& g, const KernelSpec& kernel, const Point& x,
                        const Point& y) {
    if (!kernel.compact && !kernel.gaussian)
        throw ContractError("periodize_kernel needs a support radius or a Gaussian tail bound");
    Point w = compose(g, x, inverse(g, y));

    if (kernel.compact) {
        double acc = 0.0;
        for (const auto& k : lattice_in_ball(g, w, kernel.support_radius)) {
            Point u = compose(g, k.cast<double>(), w);
            acc += kernel.eval(u);
        }
        return acc;
    }

    // Gaussian case: include every term with ||k o w|| <= R and grow R until
    // the envelope times a shell-count bound certifies the tail below 1e-10.
    const double c0 = kernel.gauss_c0, c = kernel.gauss_c, t = kernel.gauss_t;
    const int n = g.dim();
    const int n2 = n - g.horizontal_dim();
    const double pref = c0 * std::pow(t, -0.5 * g.homogeneous_dim());
    double R = std::max(1.0, std::sqrt(c * t));
    for (int grow = 0; grow < 200; ++grow) {
        double tail = 0.0;
        for (int j = 0; j < 400; ++j) {
            double r = R + j;
            // terms with ||u|| in [r, r+1): |k^(1)| <= r+1+|w|, |k^(2)| <= (r+1)^2+..
            double cnt = std::pow(2.0 * (r + 2.0 + w.cwiseAbs().maxCoeff()), g.horizontal_dim()) *
                         std::pow(2.0 * ((r + 2.0) * (r + 2.0) + w.cwiseAbs().maxCoeff() + 1.0),
                                  n2);
            double term = cnt * pref * std::exp(-r * r / (c * t));
            tail += term;
            if (term < 1e-22) break;
        }
        if (tail < 1e-10) break;
        R += 1.0;
    }
    double acc = 0.0;
    for (const auto& k : lattice_in_ball(g, w, R)) {
        Point u = compose(g, k.cast<double>(), w);
        acc += kernel.eval(u);
    }
    return acc;
}

// --- GridFunction ------------------------------------------------------------

GridFunction::GridFunction(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution)
    : g_(std::move(g)), res_(std::move(resolution)) {
    if (static_cast<int>(res_.size()) != g_->dim())
        throw ContractError("resolution must give one extent per coordinate");
    long total = 1;
    strides_.assign(res_.size(), 0);
    for (std::size_t i = 0; i < res_.size(); ++i) {
        if (res_[i] < 2) throw ContractError("grid resolution must be >= 2 per axis");
        strides_[i] = total;
        total *= res_[i];
    }
    values_ = Eigen::ArrayXd::Zero(total);
}

GridFunction::GridFunction(std::shared_ptr<const GroupDescriptor> g, std::vector<int> resolution,
                           Eigen::ArrayXd values)
    : GridFunction(std::move(g), std::move(resolution)) {
    if (values.size() != values_.size())
        throw ContractError("value count does not match the grid resolution");
    values_ = std::move(values);
}

GridFunction GridFunction::from_function(std::shared_ptr<const GroupDescriptor> g,
                                         std::vector<int> resolution, const ScalarField& f) {
    GridFunction out(std::move(g), std::move(resolution));
    for (long idx = 0; idx < out.node_count(); ++idx) out.values_[idx] = f(out.node_point(idx));
    return out;
}

Point GridFunction::node_point(long flat) const {
    Point x(g_->dim());
    for (std::size_t i = 0; i < res_.size(); ++i) {
        long j = (flat / strides_[i]) % res_[i];
        x[static_cast<int>(i)] = static_cast<double>(j) / res_[i];
    }
    return x;
}

long GridFunction::flat_index(const std::vector<int>& idx) const {
    long flat = 0;
    for (std::size_t i = 0; i < res_.size(); ++i) {
        int j = idx[i] % res_[i];
        if (j < 0) j += res_[i];
        flat += strides_[i] * j;
    }
    return flat;
}

double GridFunction::eval_in_cube(const Point& x0) const {
    const int n = g_->dim();
    // multilinear with Euclidean wrap on the cube
    std::vector<int> base(n);
    std::vector<double> frac(n);
    for (int i = 0; i < n; ++i) {
        double v = x0[i] * res_[i];
        double f = std::floor(v);
        int j = static_cast<int>(f);
        double th = v - f;
        if (j >= res_[i]) {
            j -= res_[i];
        }
        base[i] = j;
        frac[i] = th;
    }
    double acc = 0.0;
    const int corners = 1 << n;
    for (int cbits = 0; cbits < corners; ++cbits) {
        double wgt = 1.0;
        long flat = 0;
        for (int i = 0; i < n; ++i) {
            int up = (cbits >> i) & 1;
            wgt *= up ? frac[i] : (1.0 - frac[i]);
            int j = base[i] + up;
            if (j >= res_[i]) j -= res_[i];
            flat += strides_[i] * j;
        }
        acc += wgt * values_[flat];
    }
    return acc;
}

double GridFunction::operator()(const Point& x) const {
    bool in_cube = true;
    for (int i = 0; i < x.size(); ++i)
        if (x[i] < 0.0 || x[i] >= 1.0) {
            in_cube = false;
            break;
        }
    if (in_cube) return eval_in_cube(x);
    return eval_in_cube(reduce(*g_, x).point);
}

double GridFunction::cell_volume() const {
    double v = 1.0;
    for (int m : res_) v /= m;
    return v;
}

void GridFunction::save(const std::string& path_base, bool csv) const {
    nlohmann::json hdr;
    hdr["resolution"] = res_;
    hdr["group_descriptor_ref"] = nlohmann::json::parse(g_->to_json_text());
    hdr["format"] = csv ? "csv" : "bin";
    std::ofstream jh(path_base + ".json");
    if (!jh) throw Error("cannot write " + path_base + ".json");
    jh << hdr.dump(2) << "\n";
    if (csv) {
        std::ofstream out(path_base + ".csv");
        out << "value\n";
        char buf[40];
        for (long i = 0; i < values_.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g\n", values_[i]);
            out << buf;
        }
    } else {
        std::ofstream out(path_base + ".bin", std::ios::binary);
        out.write(reinterpret_cast<const char*>(values_.data()),
                  static_cast<std::streamsize>(values_.size() * sizeof(double)));
    }
}

GridFunction GridFunction::load(const std::string& path_base,
                                std::shared_ptr<const GroupDescriptor> g) {
    std::ifstream jh(path_base + ".json");
    if (!jh) throw Error("cannot read " + path_base + ".json");
    nlohmann::json hdr;
    jh >> hdr;
    std::vector<int> res = hdr.at("resolution").get<std::vector<int>>();
    GridFunction out(std::move(g), res);
    std::string fmt = hdr.value("format", "bin");
    if (fmt == "csv") {
        std::ifstream in(path_base + ".csv");
        std::string line;
        std::getline(in, line);  // header
        for (long i = 0; i < out.values_.size(); ++i) {
            if (!std::getline(in, line)) throw Error("csv truncated: " + path_base);
            out.values_[i] = std::stod(line);
        }
    } else {
        std::ifstream in(path_base + ".bin", std::ios::binary);
        in.read(reinterpret_cast<char*>(out.values_.data()),
                static_cast<std::streamsize>(out.values_.size() * sizeof(double)));
        if (!in) throw Error("bin truncated: " + path_base);
    }
    return out;
}

double SpaceTimeFunction::eval(double t, const Point& x) const {
    if (slices.empty()) throw ContractError("empty space-time function");
    if (slices.size() == 1) return slices[0](x);
    double s = (t - t0) / dt();
    if (s <= 0.0) return slices.front()(x);
    if (s >= steps()) return slices.back()(x);
    int i = static_cast<int>(std::floor(s));
    double th = s - i;
    return (1.0 - th) * slices[i](x) + th * slices[i + 1](x);
}

const GridFunction& SpaceTimeFunction::slice_nearest(double t) const {
    if (slices.empty()) throw ContractError("empty space-time function");
    double s = (t - t0) / (dt() > 0 ? dt() : 1.0);
    int i = static_cast<int>(std::lround(s));
    i = std::clamp(i, 0, steps());
    return slices[static_cast<std::size_t>(i)];
}

}  // namespace carnot
