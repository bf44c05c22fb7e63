#include "carnot/group.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace carnot {

GroupDescriptor::GroupDescriptor(int step, std::vector<int> layer_dims,
                                 std::vector<BracketTerm> brackets)
    : step_(step), layer_dims_(std::move(layer_dims)), brackets_(std::move(brackets)) {
    n_ = std::accumulate(layer_dims_.begin(), layer_dims_.end(), 0);
    n1_ = layer_dims_.empty() ? 0 : layer_dims_[0];
    Q_ = 0;
    layer_of_.assign(n_, 0);
    int c = 0;
    for (std::size_t j = 0; j < layer_dims_.size(); ++j) {
        Q_ += static_cast<int>(j + 1) * layer_dims_[j];
        for (int t = 0; t < layer_dims_[j]; ++t) layer_of_[c++] = static_cast<int>(j + 1);
    }
    validate();
}

void GroupDescriptor::validate() const {
    if (step_ < 1 || step_ > 2)
        throw DescriptorError("step must be 1 or 2 (brackets table covers step <= 2)");
    if (static_cast<int>(layer_dims_.size()) != step_)
        throw DescriptorError("layer_dims size must equal step");
    for (int d : layer_dims_)
        if (d <= 0) throw DescriptorError("layer dimensions must be positive");
    if (step_ == 1 && !brackets_.empty())
        throw DescriptorError("abelian group cannot carry nonzero brackets");

    // Brackets of first-layer generators must land in layer 2.
    for (const auto& b : brackets_) {
        if (b.i < 0 || b.i >= n1_ || b.j < 0 || b.j >= n1_)
            throw DescriptorError("bracket generator index out of layer 1");
        if (layer_of_[b.m] != 2)
            throw DescriptorError("bracket target must lie in layer 2");
        if (b.i == b.j && b.c != 0.0)
            throw DescriptorError("bracket antisymmetry violated: [E_i,E_i] != 0");
    }
    // Antisymmetry: c^m_{ij} = -c^m_{ji}.
    auto coeff = [&](int i, int j, int m) {
        double s = 0.0;
        for (const auto& b : brackets_)
            if (b.i == i && b.j == j && b.m == m) s += b.c;
        return s;
    };
    for (const auto& b : brackets_) {
        double lhs = coeff(b.i, b.j, b.m);
        double rhs = coeff(b.j, b.i, b.m);
        if (std::abs(lhs + rhs) > 1e-14)
            throw DescriptorError("bracket antisymmetry violated");
    }
    if (step_ == 2) {
        // Hormander condition: brackets must span layer 2.
        int n2 = layer_dims_[1];
        Eigen::MatrixXd span(n2, std::max<std::size_t>(1, brackets_.size()));
        span.setZero();
        int col = 0;
        for (const auto& b : brackets_) span(b.m - n1_, col++) += b.c;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(span);
        lu.setThreshold(1e-10);
        if (lu.rank() < n2)
            throw DescriptorError("Hormander condition fails: brackets do not span layer 2");
    }
}

GroupDescriptor GroupDescriptor::heisenberg() {
    return GroupDescriptor(2, {2, 1}, {{0, 1, 2, 1.0}, {1, 0, 2, -1.0}});
}

GroupDescriptor GroupDescriptor::abelian(int n) {
    return GroupDescriptor(1, {n}, {});
}

GroupDescriptor GroupDescriptor::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw DescriptorError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.contains("step") || !j.contains("layer_dims"))
        throw DescriptorError("missing required fields {step, layer_dims}");
    int step = j.at("step").get<int>();
    std::vector<int> dims = j.at("layer_dims").get<std::vector<int>>();
    std::vector<BracketTerm> brackets;
    if (j.contains("brackets")) {
        for (const auto& t : j.at("brackets")) {
            BracketTerm b;
            b.i = t.at("i").get<int>() - 1;  // file is 1-based
            b.j = t.at("j").get<int>() - 1;
            b.m = t.at("m").get<int>() - 1;
            b.c = t.at("c").get<double>();
            brackets.push_back(b);
            // store the antisymmetric partner if the file lists only i<j
            bool has_partner = false;
            for (const auto& u : j.at("brackets"))
                if (u.at("i").get<int>() - 1 == b.j && u.at("j").get<int>() - 1 == b.i &&
                    u.at("m").get<int>() - 1 == b.m)
                    has_partner = true;
            if (!has_partner) brackets.push_back({b.j, b.i, b.m, -b.c});
        }
    }
    return GroupDescriptor(step, dims, brackets);
}

GroupDescriptor GroupDescriptor::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DescriptorError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string GroupDescriptor::to_json_text() const {
    nlohmann::json j;
    j["step"] = step_;
    j["layer_dims"] = layer_dims_;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : brackets_)
        if (b.i < b.j)
            arr.push_back({{"i", b.i + 1}, {"j", b.j + 1}, {"m", b.m + 1}, {"c", b.c}});
    j["brackets"] = arr;
    j["Q"] = Q_;
    return j.dump(2);
}

Point GroupDescriptor::bracket(const Point& u, const Point& v) const {
    Point out = Point::Zero(n_);
    for (const auto& b : brackets_) out[b.m] += b.c * u[b.i] * v[b.j];
    return out;
}

void GroupDescriptor::check_point(const Point& p) const {
    if (p.size() != n_)
        throw DescriptorError("point dimension " + std::to_string(p.size()) +
                              " does not match group dimension " + std::to_string(n_));
    if (!p.allFinite()) throw DomainError("point has non-finite entries");
}

Point compose(const GroupDescriptor& g, const Point& p, const Point& q) {
    g.check_point(p);
    g.check_point(q);
    if (g.abelian_group()) return p + q;
    return p + q + 0.5 * g.bracket(p, q);
}

void compose_into(const GroupDescriptor& g, const Point& p, const Point& q, Point& out) {
    const int n = g.dim();
    if (out.size() != n) out.resize(n);
    const int n1 = g.horizontal_dim();
    // layer-2 first: reads only first-layer entries of p and q
    for (int m = n1; m < n; ++m) out[m] = p[m] + q[m];
    for (const auto& b : g.brackets()) out[b.m] += 0.5 * b.c * p[b.i] * q[b.j];
    for (int i = 0; i < n1; ++i) out[i] = p[i] + q[i];
}

void reduce_point_into(const GroupDescriptor& g, const Point& p, Point& out) {
    // closed-form layered solve for step <= 2: k^(1) = floor(p^(1)), then
    // p_m = k_m + x_m + 0.5 [k, x]_m determines layer 2 coordinatewise
    const int n = g.dim();
    const int n1 = g.horizontal_dim();
    if (n1 > 16) throw DescriptorError("reduce_point_into supports at most 16 generators");
    if (out.size() != n) out.resize(n);
    double k1[16];
    for (int i = 0; i < n1; ++i) {
        double f = std::floor(p[i]);
        double x = p[i] - f;
        if (x >= 1.0) {
            x -= 1.0;
            f += 1.0;
        }
        out[i] = x;
        k1[i] = f;
    }
    for (int m = n1; m < n; ++m) out[m] = p[m];
    for (const auto& b : g.brackets()) out[b.m] -= 0.5 * b.c * k1[b.i] * out[b.j];
    for (int m = n1; m < n; ++m) {
        double f = std::floor(out[m]);
        double x = out[m] - f;
        if (x >= 1.0) x -= 1.0;
        out[m] = x;
    }
}

Point inverse(const GroupDescriptor& g, const Point& p) {
    g.check_point(p);
    return -p;
}

Point dilate(const GroupDescriptor& g, double lambda, const Point& p) {
    if (!(lambda > 0.0)) throw DomainError("dilation parameter must be positive");
    g.check_point(p);
    Point out(p.size());
    for (int i = 0; i < p.size(); ++i)
        out[i] = std::pow(lambda, g.dilation_exponent(i)) * p[i];
    return out;
}

double homogeneous_norm(const GroupDescriptor& g, const Point& p) {
    g.check_point(p);
    const int r = g.step();
    double rfact = 1.0;
    for (int j = 2; j <= r; ++j) rfact *= j;
    const double two_rfact = 2.0 * rfact;
    double acc = 0.0;
    int c = 0;
    for (int j = 1; j <= r; ++j) {
        int nj = g.layer_dims()[j - 1];
        double lay = p.segment(c, nj).norm();
        c += nj;
        if (lay > 0.0) acc += std::pow(lay, two_rfact / j);
    }
    return acc > 0.0 ? std::pow(acc, 1.0 / two_rfact) : 0.0;
}

Point embed_horizontal(const GroupDescriptor& g, const HorizontalVector& v) {
    if (v.size() != g.horizontal_dim())
        throw DescriptorError("horizontal vector must have length n1");
    Point out = Point::Zero(g.dim());
    out.head(g.horizontal_dim()) = v;
    return out;
}

Eigen::MatrixXd generator_matrix(const GroupDescriptor& g, const Point& p) {
    g.check_point(p);
    const int n = g.dim(), n1 = g.horizontal_dim();
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n1);
    X.topLeftCorner(n1, n1).setIdentity();
    // X_i(p) = d/dt|_0 p o (t e_i) = e_i + 1/2 [p, e_i]
    for (const auto& b : g.brackets()) X(b.m, b.j) += 0.5 * b.c * p[b.i];
    return X;
}

Point exp_horizontal(const GroupDescriptor& g, const Point& p, const HorizontalVector& v,
                     double tau) {
    if (!v.allFinite()) throw DomainError("horizontal vector has non-finite entries");
    return compose(g, p, embed_horizontal(g, tau * v));
}

Point exp_horizontal_rk4(const GroupDescriptor& g, const Point& p, const HorizontalVector& v,
                         double tau, int n_steps) {
    Point y = p;
    const double h = tau / n_steps;
    auto field = [&](const Point& x) -> Point { return generator_matrix(g, x) * v; };
    for (int s = 0; s < n_steps; ++s) {
        Point k1 = field(y);
        Point k2 = field(y + 0.5 * h * k1);
        Point k3 = field(y + 0.5 * h * k2);
        Point k4 = field(y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
}

double default_fd_step(const GroupDescriptor& g, const Point& p) {
    return 1e-4 * std::max(1.0, homogeneous_norm(g, p));
}

namespace {

double lie_derivative_rec(const GroupDescriptor& g, const ScalarField& f, const Point& p,
                          const MultiIndex& I, std::size_t level, double h) {
    if (level == I.size()) return f(p);
    HorizontalVector e = HorizontalVector::Zero(g.horizontal_dim());
    e[I[level]] = 1.0;
    Point fwd = exp_horizontal(g, p, e, h);
    Point bwd = exp_horizontal(g, p, e, -h);
    // h^(1/2) coarsening per nesting level balances truncation vs cancellation
    double h_next = std::sqrt(h);
    return (lie_derivative_rec(g, f, fwd, I, level + 1, h_next) -
            lie_derivative_rec(g, f, bwd, I, level + 1, h_next)) /
           (2.0 * h);
}

}  // namespace

double lie_derivative(const GroupDescriptor& g, const ScalarField& f, const Point& p,
                      const MultiIndex& I, double h) {
    if (I.size() > 4)
        throw UnsupportedOrder("nested differences beyond |I|=4 are dominated by noise");
    for (int idx : I)
        if (idx < 0 || idx >= g.horizontal_dim())
            throw DescriptorError("multi-index entry outside the first layer");
    if (h <= 0.0) h = default_fd_step(g, p);
    if (I.empty()) return f(p);  // X_I = Id for an empty index
    return lie_derivative_rec(g, f, p, I, 0, h);
}

std::vector<MultiIndex> multi_indices_up_to(const GroupDescriptor& g, int k) {
    std::vector<MultiIndex> out;
    out.push_back({});
    std::vector<MultiIndex> frontier = {{}};
    for (int len = 1; len <= k; ++len) {
        std::vector<MultiIndex> next;
        for (const auto& base : frontier)
            for (int i = 0; i < g.horizontal_dim(); ++i) {
                MultiIndex m = base;
                m.push_back(i);
                next.push_back(m);
            }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

// --- CC distance ------------------------------------------------------------

namespace {

constexpr double kPi = std::numbers::pi;

bool is_h1(const GroupDescriptor& g) {
    if (g.step() != 2 || g.dim() != 3 || g.horizontal_dim() != 2) return false;
    // needs [E1,E2] = c E3 with |c| = 1 in these coordinates
    Point e1 = Point::Zero(3), e2 = Point::Zero(3);
    e1[0] = 1.0;
    e2[1] = 1.0;
    Point br = g.bracket(e1, e2);
    return std::abs(std::abs(br[2]) - 1.0) < 1e-14;
}

// Geodesic distance from the origin on H^1 with group law
// (x,y,z)o(x',y',z') = (x+x', y+y', z+z'+(xy'-yx')/2).
// With chord rho = |(x,y)| and area A = |z|, the arc angle theta in (0,2pi)
// solves A/rho^2 = (theta - sin theta) / (8 sin^2(theta/2)); then
// d = theta * rho / (2 sin(theta/2)). Degenerate branches: z = 0 -> rho,
// rho = 0 -> 2 sqrt(pi A).
double h1_distance_from_origin(double x, double y, double z) {
    const double rho = std::hypot(x, y);
    const double A = std::abs(z);
    if (A < 1e-300) return rho;
    if (rho < 1e-300) return 2.0 * std::sqrt(kPi * A);
    const double target = A / (rho * rho);
    auto F = [](double th) {
        double s = std::sin(0.5 * th);
        return (th - std::sin(th)) / (8.0 * s * s);
    };
    double lo = 1e-12, hi = 2.0 * kPi - 1e-12;
    if (target <= F(lo)) return rho;  // almost flat
    if (target >= F(hi)) {
        // almost vertical: theta -> 2pi
        double k = std::sqrt((2.0 * kPi - std::sin(2.0 * kPi)) / (2.0 * A));
        return 2.0 * kPi / k;
    }
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (F(mid) < target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13) break;
    }
    double theta = 0.5 * (lo + hi);
    return theta * rho / (2.0 * std::sin(0.5 * theta));
}

// Upper bound for generic step-2 groups: straight horizontal move for the
// first layer, one circular loop per remaining second-layer defect, then a
// Nelder-Mead polish over loop allocations is skipped in favor of a short
// deterministic coordinate refinement (kept simple; the result is flagged).
double step2_upper_bound(const GroupDescriptor& g, const Point& target) {
    const int n1 = g.horizontal_dim();
    const int n = g.dim();
    // straight segment for the horizontal part
    HorizontalVector v = target.head(n1);
    Point reached = exp_horizontal(g, Point::Zero(n), v, 1.0);
    double length = v.norm();
    // second-layer residual, fixed by generator loops: a square loop in the
    // (i,j) plane of signed area a adds c^m_{ij} * a to coordinate m and
    // costs 4*sqrt(|a|); the flows compose exactly, so the bound is certified.
    Point residual = target - reached;
    residual.head(n1).setZero();
    // process coordinates one at a time with the strongest available bracket
    for (int m = n1; m < n; ++m) {
        double need = residual[m];
        if (std::abs(need) < 1e-15) continue;
        const BracketTerm* best = nullptr;
        for (const auto& b : g.brackets())
            if (b.m == m && (best == nullptr || std::abs(b.c) > std::abs(best->c))) best = &b;
        if (best == nullptr) return std::numeric_limits<double>::infinity();
        double area = need / best->c;
        // a closed loop leaves the first layer unchanged; its second-layer
        // effect on other coordinates is zero when brackets are disjoint,
        // otherwise accounted for by recomputing the residual below
        HorizontalVector ei = HorizontalVector::Zero(n1), ej = HorizontalVector::Zero(n1);
        ei[best->i] = 1.0;
        ej[best->j] = 1.0;
        double s = std::sqrt(std::abs(area));
        double sgn = area >= 0 ? 1.0 : -1.0;
        // square loop: i, j, -i, -j with side s (area sgn*s^2)
        Point w = reached;
        w = exp_horizontal(g, w, ei, sgn * s);
        w = exp_horizontal(g, w, ej, s);
        w = exp_horizontal(g, w, ei, -sgn * s);
        w = exp_horizontal(g, w, ej, -s);
        reached = w;
        length += 4.0 * s;
        residual = target - reached;
        residual.head(n1).setZero();
    }
    // tiny leftover from bracket interactions: close it with nested loops
    for (int pass = 0; pass < 4 && residual.tail(n - n1).norm() > 1e-12; ++pass) {
        for (int m = n1; m < n; ++m) {
            double need = target[m] - reached[m];
            if (std::abs(need) < 1e-15) continue;
            const BracketTerm* best = nullptr;
            for (const auto& b : g.brackets())
                if (b.m == m && (best == nullptr || std::abs(b.c) > std::abs(best->c)))
                    best = &b;
            if (!best) continue;
            double area = need / best->c;
            HorizontalVector ei = HorizontalVector::Zero(n1), ej = HorizontalVector::Zero(n1);
            ei[best->i] = 1.0;
            ej[best->j] = 1.0;
            double s = std::sqrt(std::abs(area));
            double sgn = area >= 0 ? 1.0 : -1.0;
            Point w = reached;
            w = exp_horizontal(g, w, ei, sgn * s);
            w = exp_horizontal(g, w, ej, s);
            w = exp_horizontal(g, w, ei, -sgn * s);
            w = exp_horizontal(g, w, ej, -s);
            reached = w;
            length += 4.0 * s;
        }
        residual = target - reached;
        residual.head(n1).setZero();
    }
    return length;
}

}  // namespace

CcResult cc_distance(const GroupDescriptor& g, const Point& p, const Point& q) {
    g.check_point(p);
    g.check_point(q);
    Point d = compose(g, inverse(g, p), q);  // left invariance: d(p,q) = d(0, p^-1 o q)
    if (g.abelian_group()) return {d.norm(), true};
    if (is_h1(g)) {
        // account for the sign of the bracket constant: flip z if needed
        Point e1 = Point::Zero(3), e2 = Point::Zero(3);
        e1[0] = 1.0;
        e2[1] = 1.0;
        double c = g.bracket(e1, e2)[2];
        return {h1_distance_from_origin(d[0], d[1], c * d[2]), true};
    }
    return {step2_upper_bound(g, d), false};
}

}  // namespace carnot
