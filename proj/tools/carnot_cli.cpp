// carnot: batch entry points for the Carnot-torus toolkit.
// Subcommands: group-check, heat-kernel, mollify, solve-backward, solve-fpk,
// duality, norms, d1.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "carnot/heat.hpp"
#include "carnot/io.hpp"
#include "carnot/metrics.hpp"
#include "carnot/mollify.hpp"
#include "carnot/solve.hpp"

using namespace carnot;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Common {
    std::string config;
    std::string out_dir = ".";
    std::uint64_t seed = 20240901;
    unsigned threads = 1;
};

json base_report(const Common& c, const std::string& cmd) {
    json rep;
    rep["command"] = cmd;
    rep["version"] = version_string();
    rep["seed"] = c.seed;
    rep["threads"] = c.threads;
    return rep;
}

void write_report(const Common& c, const std::string& name, const json& rep) {
    std::filesystem::create_directories(c.out_dir);
    std::string path = c.out_dir + "/" + name;
    std::ofstream out(path);
    out << rep.dump(2) << "\n";
    std::cout << rep.dump(2) << std::endl;
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    in >> j;
    return j;
}

std::shared_ptr<const GroupDescriptor> group_from(const json& j) {
    if (!j.contains("group_ref")) throw ConfigError("config needs group_ref");
    if (j.at("group_ref").is_string())
        return std::make_shared<const GroupDescriptor>(
            GroupDescriptor::from_json_file(j.at("group_ref").get<std::string>()));
    return std::make_shared<const GroupDescriptor>(
        GroupDescriptor::from_json_text(j.at("group_ref").dump()));
}

Point parse_point(const std::string& csv, int dim) {
    Point x(dim);
    std::stringstream ss(csv);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= dim) throw ConfigError("too many coordinates in point");
        x[i++] = std::stod(tok);
    }
    if (i != dim) throw ConfigError("expected " + std::to_string(dim) + " coordinates");
    return x;
}

// ---- group-check -------------------------------------------------------------

int cmd_group_check(const Common& c) {
    json cfg = load_config(c.config);
    json rep = base_report(c, "group-check");
    rep["config"] = cfg;

    std::shared_ptr<const GroupDescriptor> g;
    try {
        g = group_from(cfg);
    } catch (const DescriptorError& e) {
        rep["status"] = "fail";
        rep["failed_invariant"] = e.what();
        write_report(c, "group_check.json", rep);
        return 2;
    }

    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    const int n = g->dim();
    auto rand_point = [&]() {
        Point p(n);
        for (int i = 0; i < n; ++i) p[i] = U(rng);
        return p;
    };
    std::string failed;
    double worst_assoc = 0.0, worst_auto = 0.0, worst_inv = 0.0, worst_jac = 0.0;
    for (int it = 0; it < 1000 && failed.empty(); ++it) {
        Point p = rand_point(), q = rand_point(), s = rand_point();
        worst_assoc = std::max(worst_assoc,
                               (compose(*g, compose(*g, p, q), s) -
                                compose(*g, p, compose(*g, q, s)))
                                   .lpNorm<Eigen::Infinity>());
        if (worst_assoc > 1e-10) failed = "associativity";
        double lam = std::abs(U(rng)) + 0.1;
        worst_auto = std::max(worst_auto,
                              (dilate(*g, lam, compose(*g, p, q)) -
                               compose(*g, dilate(*g, lam, p), dilate(*g, lam, q)))
                                  .lpNorm<Eigen::Infinity>());
        if (worst_auto > 1e-10) failed = "dilation automorphism";
        worst_inv = std::max(worst_inv,
                             compose(*g, p, inverse(*g, p)).lpNorm<Eigen::Infinity>());
        if (worst_inv > 1e-10) failed = "inverse";
    }
    if (failed.empty()) {
        std::mt19937_64 r2(c.seed + 1);
        for (int it = 0; it < 100 && failed.empty(); ++it) {
            Point p(n), y(n);
            for (int i = 0; i < n; ++i) {
                p[i] = U(r2);
                y[i] = U(r2);
            }
            Eigen::MatrixXd J(n, n);
            const double h = 1e-6;
            for (int col = 0; col < n; ++col) {
                Point yp = y, ym = y;
                yp[col] += h;
                ym[col] -= h;
                J.col(col) = (compose(*g, p, yp) - compose(*g, p, ym)) / (2.0 * h);
            }
            worst_jac = std::max(worst_jac, std::abs(J.determinant() - 1.0));
            if (worst_jac > 1e-6) failed = "Haar Jacobian";
        }
    }
    rep["worst"] = {{"associativity", worst_assoc},
                    {"automorphism", worst_auto},
                    {"inverse", worst_inv},
                    {"haar_jacobian", worst_jac}};
    if (g->abelian_group()) rep["note"] = "commutative";
    if (!failed.empty()) {
        rep["status"] = "fail";
        rep["failed_invariant"] = failed;
        write_report(c, "group_check.json", rep);
        return 2;
    }
    rep["status"] = "pass";
    write_report(c, "group_check.json", rep);
    return 0;
}

// ---- heat-kernel ---------------------------------------------------------------

int cmd_heat_kernel(const Common& c) {
    json cfg = load_config(c.config);
    auto g = group_from(cfg);
    double t = cfg.value("t", 0.1);
    Point x = parse_point(cfg.value("x", std::string("0")), g->dim());
    SDEConfig sde;
    sde.n_particles = cfg.value("n", 100000);
    sde.dt = cfg.value("dt", 1e-3);
    sde.seed = c.seed;
    sde.threads = c.threads;
    double bw = cfg.value("bandwidth", 0.0);

    auto est = estimate_kernel(*g, t, x, sde, bw);
    json rep = base_report(c, "heat-kernel");
    rep["config"] = cfg;
    rep["t"] = est.t;
    rep["x"] = std::vector<double>(x.data(), x.data() + x.size());
    rep["value"] = est.value;
    rep["stderr"] = est.std_error;
    rep["N"] = est.n;
    rep["bandwidth"] = est.bandwidth;
    rep["vanished"] = est.vanished;

    if (cfg.value("dump_endpoints", false)) {
        auto disp = heat_displacements(*g, t, sde);
        std::filesystem::create_directories(c.out_dir);
        dump_endpoints(c.out_dir + "/endpoints.bin", disp, 1.0 / disp.size());
        rep["endpoint_dump"] = c.out_dir + "/endpoints.bin";
    }
    write_report(c, "heat_kernel.json", rep);
    return 0;
}

// ---- mollify -------------------------------------------------------------------

int cmd_mollify(const Common& c) {
    json cfg = load_config(c.config);
    auto g = group_from(cfg);
    const int n = g->dim();
    std::vector<int> grid = cfg.value("grid", std::vector<int>(n, 16));
    std::string spec = cfg.value("g_spec", std::string("cos(2*pi*x1)"));
    Expression expr = Expression::parse(spec, n);
    auto f = GridFunction::from_function(g, grid, [&expr](const Point& p) {
        return expr.eval(0.0, p);
    });
    int jmin = cfg.value("j_min", 1), jmax = cfg.value("j_max", 6);
    double alpha = cfg.value("alpha", 1.0);

    auto sem_in = holder_seminorm(f, alpha, 20000, c.seed);
    std::filesystem::create_directories(c.out_dir);
    CsvWriter csv(c.out_dir + "/mollifier_table.csv");
    csv.row({"eps", "sup_error", "seminorm_ratio"});
    json rows = json::array();
    for (int j = jmin; j <= jmax; ++j) {
        double eps = std::pow(2.0, -j);
        auto out = mollify_torus(f, eps);
        double err = (out.values() - f.values()).abs().maxCoeff();
        auto sem_out = holder_seminorm(out, alpha, 20000, c.seed);
        double ratio = sem_in.value > 0 ? sem_out.value / sem_in.value : 0.0;
        csv.row({CsvWriter::num(eps), CsvWriter::num(err), CsvWriter::num(ratio)});
        rows.push_back({{"eps", eps}, {"sup_error", err}, {"seminorm_ratio", ratio}});
    }
    json rep = base_report(c, "mollify");
    rep["config"] = cfg;
    rep["table"] = rows;
    rep["csv"] = c.out_dir + "/mollifier_table.csv";
    write_report(c, "mollify.json", rep);
    return 0;
}

// ---- solvers ---------------------------------------------------------------------

json canned_duality(const SpaceTimeFunction& rho, const FPKProblem& prob, double dt,
                    const json& user_pairs) {
    const auto& res = rho.slices[0].resolution();
    auto g = prob.group;
    json out = json::array();
    struct Pair {
        std::string name;
        ScalarField xi;
        TimeScalarField f;
    };
    std::vector<Pair> pairs = {
        {"xi=1,f=0", [](const Point&) { return 1.0; },
         [](double, const Point&) { return 0.0; }},
        {"xi=sin(2pi x1),f=0",
         [](const Point& x) { return std::sin(2 * kPi * x[0]); },
         [](double, const Point&) { return 0.0; }},
        {"xi=cos(2pi x.last),f=cos(2pi x1)",
         [g](const Point& x) { return std::cos(2 * kPi * x[g->dim() - 1]); },
         [](double, const Point& x) { return std::cos(2 * kPi * x[0]); }},
    };
    for (const auto& up : user_pairs) {
        Expression xe = Expression::parse(up.at("xi").get<std::string>(), g->dim());
        Expression fe = Expression::parse(up.value("f", "0"), g->dim());
        pairs.push_back({"user:" + up.at("xi").get<std::string>(),
                         [xe](const Point& x) { return xe.eval(0.0, x); },
                         [fe](double t, const Point& x) { return fe.eval(t, x); }});
    }
    for (const auto& p : pairs) {
        auto xi = GridFunction::from_function(g, res, p.xi);
        double r = duality_residual(rho, prob, xi, p.f, prob.T, dt);
        out.push_back({{"pair", p.name}, {"residual", r}});
    }
    return out;
}

int run_solver(const Common& c, bool fpk, bool duality_only) {
    ProblemFile pf = load_problem(c.config);
    json cfg = json::parse(pf.raw_json);
    json rep = base_report(c, duality_only ? "duality" : (fpk ? "solve-fpk" : "solve-backward"));
    rep["config"] = cfg;

    StencilPack st(pf.group, pf.grid);
    double bmax = 0.0;
    {
        std::mt19937_64 rng(c.seed);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (int it = 0; it < 256; ++it) {
            Point x(pf.group->dim());
            for (int i = 0; i < x.size(); ++i) x[i] = U(rng);
            bmax = std::max(bmax, pf.b(0.0, x).lpNorm<Eigen::Infinity>());
            bmax = std::max(bmax, pf.b(pf.T, x).lpNorm<Eigen::Infinity>());
        }
    }
    double dt = pf.dt > 0.0 ? pf.dt : 0.9 * st.cfl_dt(bmax);

    try {
        SolveReport srep;
        if (fpk || duality_only) {
            FPKProblem prob = to_fpk(pf);
            int steps_est = static_cast<int>(std::ceil(pf.T / dt));
            int store = std::max(1, steps_est / 48);
            auto rho = solve_fpk_fd(prob, pf.grid, dt, &srep, store);
            rep["mass_drift"] = srep.mass_drift;
            rep["duality"] = canned_duality(rho, prob, dt,
                                            cfg.value("duality_pairs", json::array()));
            if (!duality_only) {
                std::filesystem::create_directories(c.out_dir);
                for (std::size_t i = 0; i < rho.slices.size(); i += rho.slices.size() - 1) {
                    rho.slices[i].save(c.out_dir + "/rho_" + std::to_string(i));
                    if (i + 1 >= rho.slices.size()) break;
                }
                rep["solution_dump"] = c.out_dir + "/rho_*";
            }
        } else {
            BackwardProblem prob = to_backward(pf);
            int steps_est = static_cast<int>(std::ceil(pf.T / dt));
            int store = std::max(1, steps_est / 48);
            auto z = solve_backward_fd(prob, pf.grid, dt, &srep, store);
            std::filesystem::create_directories(c.out_dir);
            z.slices.front().save(c.out_dir + "/z_t0");
            z.slices.back().save(c.out_dir + "/z_T");
            rep["solution_dump"] = c.out_dir + "/z_*";
            rep["sup_z"] = srep.max_value;
        }
        rep["cfl"] = {{"dt", srep.dt}, {"bound", srep.cfl_bound}, {"delta", srep.delta},
                      {"steps", srep.steps}};
    } catch (const CflError& e) {
        rep["status"] = "cfl-refused";
        rep["suggested_dt"] = e.admissible_dt;
        write_report(c, "solve_report.json", rep);
        std::cerr << "CFL refusal; largest admissible dt = " << e.admissible_dt << "\n";
        return 3;
    }
    rep["status"] = "ok";
    write_report(c, "solve_report.json", rep);
    return 0;
}

// ---- norms ----------------------------------------------------------------------

int cmd_norms(const Common& c) {
    json cfg = load_config(c.config);
    auto g = group_from(cfg);
    const int n = g->dim();
    std::vector<int> grid = cfg.value("grid", std::vector<int>(n, 16));
    Expression expr = Expression::parse(cfg.value("field_spec", std::string("cos(2*pi*x1)")), n);
    auto f = GridFunction::from_function(g, grid, [&expr](const Point& p) {
        return expr.eval(0.0, p);
    });
    int k = cfg.value("k", 1);
    double alpha = cfg.value("alpha", 0.5);
    auto repo = holder_norm(f, k, alpha, 0.0, cfg.value("pair_budget", 20000), c.seed);

    json rep = base_report(c, "norms");
    rep["config"] = cfg;
    rep["k"] = repo.k;
    rep["alpha"] = repo.alpha;
    rep["norm"] = repo.norm;
    rep["sup_part"] = repo.sup_part;
    rep["seminorms"] = repo.seminorms;
    rep["derivative_sups"] = repo.derivative_sups;
    rep["witness_x"] = std::vector<double>(repo.witness_x.data(),
                                           repo.witness_x.data() + repo.witness_x.size());
    rep["witness_y"] = std::vector<double>(repo.witness_y.data(),
                                           repo.witness_y.data() + repo.witness_y.size());
    rep["sample_size"] = repo.sample_size;
    write_report(c, "norms.json", rep);
    return 0;
}

// ---- d1 -------------------------------------------------------------------------

DiscreteMeasure measure_from_csv(const GroupDescriptor& g, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    DiscreteMeasure mu;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        if (static_cast<int>(vals.size()) != g.dim() + 1)
            throw ConfigError("atom rows must be x1..xn,weight");
        Point x(g.dim());
        for (int i = 0; i < g.dim(); ++i) x[i] = vals[static_cast<std::size_t>(i)];
        mu.atoms.emplace_back(reduce(g, x).point, vals.back());
    }
    return mu;
}

int cmd_d1(const Common& c, const std::string& mu_path, const std::string& nu_path) {
    json cfg = load_config(c.config);
    auto g = group_from(cfg);
    auto mu = measure_from_csv(*g, mu_path);
    auto nu = measure_from_csv(*g, nu_path);
    auto res = kantorovich_d1(*g, mu, nu);
    json rep = base_report(c, "d1");
    rep["config"] = cfg;
    rep["mu"] = mu_path;
    rep["nu"] = nu_path;
    rep["d1"] = res.cost;
    json plan = json::array();
    for (auto [i, j, m] : res.plan) plan.push_back({{"from", i}, {"to", j}, {"mass", m}});
    rep["plan"] = plan;
    write_report(c, "d1.json", rep);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical toolkit for heat flow and transport on Carnot tori"};
    app.require_subcommand(1);
    app.fallthrough();  // accept the global flags after the subcommand name

    Common c;
    app.add_option("--config", c.config, "config / problem JSON path");
    app.add_option("--seed", c.seed, "master RNG seed");
    app.add_option("--threads", c.threads, "worker cap for MC stages");
    app.add_option("--out", c.out_dir, "output directory");

    auto* sc_group = app.add_subcommand("group-check", "run the group invariant suite");
    auto* sc_heat = app.add_subcommand("heat-kernel", "kernel density estimate of Gamma_0");
    auto* sc_mol = app.add_subcommand("mollify", "mollifier convergence table (CSV)");
    auto* sc_sb = app.add_subcommand("solve-backward", "backward degenerate parabolic solve");
    auto* sc_sf = app.add_subcommand("solve-fpk", "forward FPK solve with duality report");
    auto* sc_du = app.add_subcommand("duality", "weak-formulation residual report");
    auto* sc_no = app.add_subcommand("norms", "non-isotropic Hoelder norm report");
    auto* sc_d1 = app.add_subcommand("d1", "Kantorovich-Rubinstein distance of atom lists");
    std::string mu_path, nu_path;
    sc_d1->add_option("--mu", mu_path, "CSV atom list (x1..xn,weight)")->required();
    sc_d1->add_option("--nu", nu_path, "CSV atom list (x1..xn,weight)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sc_group->parsed()) return cmd_group_check(c);
        if (sc_heat->parsed()) return cmd_heat_kernel(c);
        if (sc_mol->parsed()) return cmd_mollify(c);
        if (sc_sb->parsed()) return run_solver(c, false, false);
        if (sc_sf->parsed()) return run_solver(c, true, false);
        if (sc_du->parsed()) return run_solver(c, true, true);
        if (sc_no->parsed()) return cmd_norms(c);
        if (sc_d1->parsed()) return cmd_d1(c, mu_path, nu_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
