#include "carnot/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace carnot {

namespace {

using nlohmann::json;

ScalarField spatial_expr(const std::string& text, int dim) {
    Expression e = Expression::parse(text, dim);
    return [e](const Point& x) { return e.eval(0.0, x); };
}

TimeScalarField time_expr(const std::string& text, int dim) {
    Expression e = Expression::parse(text, dim);
    return [e](double t, const Point& x) { return e.eval(t, x); };
}

DiscreteMeasure atoms_from_json(const GroupDescriptor& g, const json& j) {
    DiscreteMeasure mu;
    for (const auto& row : j) {
        if (!row.is_array() || static_cast<int>(row.size()) != g.dim() + 1)
            throw ConfigError("atom rows must be [x_1..x_n, weight]");
        Point x(g.dim());
        for (int i = 0; i < g.dim(); ++i) x[i] = row[static_cast<std::size_t>(i)].get<double>();
        mu.atoms.emplace_back(reduce(g, x).point, row[static_cast<std::size_t>(g.dim())].get<double>());
    }
    return mu;
}

}  // namespace

ProblemFile load_problem(const std::string& path, const std::string& group_search_dir) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open problem file " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("problem file is not valid JSON: ") + e.what());
    }

    ProblemFile pf;
    if (!j.contains("group_ref")) throw ConfigError("problem file needs group_ref");
    if (j.at("group_ref").is_string()) {
        std::string gp = j.at("group_ref").get<std::string>();
        std::ifstream test(gp);
        if (!test && !group_search_dir.empty()) gp = group_search_dir + "/" + gp;
        pf.group = std::make_shared<const GroupDescriptor>(GroupDescriptor::from_json_file(gp));
    } else {
        pf.group = std::make_shared<const GroupDescriptor>(
            GroupDescriptor::from_json_text(j.at("group_ref").dump()));
    }
    const int n = pf.group->dim();
    const int n1 = pf.group->horizontal_dim();

    pf.T = j.value("T", 0.1);
    if (!(pf.T > 0.0)) throw ConfigError("horizon T must be positive");
    pf.grid = j.value("grid", std::vector<int>(static_cast<std::size_t>(n), 16));
    if (static_cast<int>(pf.grid.size()) != n)
        throw ConfigError("grid must list one resolution per coordinate");
    if (j.contains("dt") && j.at("dt").is_number()) pf.dt = j.at("dt").get<double>();

    if (j.contains("b_spec")) {
        std::vector<Expression> comps;
        const auto& bs = j.at("b_spec");
        if (!bs.is_array() || static_cast<int>(bs.size()) != n1)
            throw ConfigError("b_spec must be an array of n1 expressions");
        for (const auto& c : bs) comps.push_back(Expression::parse(c.get<std::string>(), n));
        pf.b = [comps, n1](double t, const Point& x) {
            Eigen::VectorXd v(n1);
            for (int i = 0; i < n1; ++i) v[i] = comps[static_cast<std::size_t>(i)].eval(t, x);
            return v;
        };
    } else {
        pf.b = [n1](double, const Point&) { return Eigen::VectorXd::Zero(n1); };
    }

    if (j.contains("f_spec")) {
        pf.f = time_expr(j.at("f_spec").get<std::string>(), n);
        pf.has_backward_data = true;
    } else {
        pf.f = [](double, const Point&) { return 0.0; };
    }
    if (j.contains("zT_spec")) {
        pf.z_T = spatial_expr(j.at("zT_spec").get<std::string>(), n);
        pf.has_backward_data = true;
    }

    if (j.contains("rho0_spec")) {
        const auto& r = j.at("rho0_spec");
        if (r.is_string())
            pf.rho0 = spatial_expr(r.get<std::string>(), n);
        else if (r.is_object() && r.contains("atoms"))
            pf.rho0_atoms = atoms_from_json(*pf.group, r.at("atoms"));
        else
            throw ConfigError("rho0_spec must be an expression or {atoms: [...]}");
        pf.has_fpk_data = true;
    }
    if (j.contains("upsilon_spec") && !j.at("upsilon_spec").is_null()) {
        const auto& u = j.at("upsilon_spec");
        if (u.is_string())
            pf.upsilon = time_expr(u.get<std::string>(), n);
        else if (u.is_object() && u.contains("atoms"))
            pf.upsilon_atoms = atoms_from_json(*pf.group, u.at("atoms"));
        else
            throw ConfigError("upsilon_spec must be an expression or {atoms: [...]}");
    }

    pf.raw_json = j.dump(2);
    return pf;
}

BackwardProblem to_backward(const ProblemFile& pf) {
    if (!pf.z_T) throw ConfigError("problem file lacks zT_spec");
    BackwardProblem prob;
    prob.group = pf.group;
    prob.T = pf.T;
    prob.b = pf.b;
    prob.f = pf.f;
    prob.z_T = pf.z_T;
    return prob;
}

FPKProblem to_fpk(const ProblemFile& pf) {
    if (!pf.rho0 && !pf.rho0_atoms) throw ConfigError("problem file lacks rho0_spec");
    FPKProblem prob;
    prob.group = pf.group;
    prob.T = pf.T;
    prob.b = pf.b;
    prob.rho0 = pf.rho0;
    prob.rho0_atoms = pf.rho0_atoms;
    prob.upsilon = pf.upsilon;
    prob.upsilon_atoms = pf.upsilon_atoms;
    return prob;
}

std::string csv_escape(const std::string& field) {
    bool need = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!need) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

struct CsvWriter::Impl {
    std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
    impl_->out.open(path);
    if (!impl_->out) throw Error("cannot write " + path);
}

CsvWriter::~CsvWriter() = default;

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) impl_->out << ",";
        impl_->out << csv_escape(fields[i]);
    }
    impl_->out << "\r\n";  // RFC 4180 line ending
}

std::string CsvWriter::num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string version_string() {
#ifdef CARNOT_VERSION
    return CARNOT_VERSION;
#else
    return "v0.0.0";
#endif
}

}  // namespace carnot
