#ifndef CARNOT_IO_HPP
#define CARNOT_IO_HPP

#include <memory>
#include <string>
#include <vector>

#include "carnot/expr.hpp"
#include "carnot/solve.hpp"

namespace carnot {

// Problem file:
// {
//   "group_ref": "path or inline descriptor object",
//   "T": 0.1, "grid": [32,32,32], "dt": 1e-4 (optional: "auto"),
//   "b_spec": ["expr", ...n1],         // or {"file": base path}
//   "f_spec": "expr",                  // backward source
//   "zT_spec": "expr",                 // backward terminal data
//   "rho0_spec": "expr" | {"atoms": [[x...,w],...]},
//   "upsilon_spec": "expr" | {"atoms": ...} | null
// }
struct ProblemFile {
    std::shared_ptr<const GroupDescriptor> group;
    double T = 0.1;
    std::vector<int> grid;
    double dt = 0.0;  // 0: derive from CFL
    DriftField b;
    TimeScalarField f;
    ScalarField z_T;
    ScalarField rho0;
    std::optional<DiscreteMeasure> rho0_atoms;
    TimeScalarField upsilon;  // may be null
    std::optional<DiscreteMeasure> upsilon_atoms;
    std::string raw_json;     // resolved config echo
    bool has_backward_data = false;
    bool has_fpk_data = false;
};

ProblemFile load_problem(const std::string& path, const std::string& group_search_dir = "");

BackwardProblem to_backward(const ProblemFile& pf);
FPKProblem to_fpk(const ProblemFile& pf);

// RFC 4180: quote fields containing comma, quote or newline; double quotes.
std::string csv_escape(const std::string& field);

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    void row(const std::vector<std::string>& fields);
    static std::string num(double v);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string version_string();

}  // namespace carnot

#endif
