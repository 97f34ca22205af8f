#include "ccml/gallery.hpp"

#include <cmath>
#include <numbers>
#include <regex>

namespace ccml {

namespace {

Polynomial var(int n, int j) { return Polynomial::variable(n, j); }
Polynomial cst(int n, double c) { return Polynomial::constant(n, c); }

PolyField field(int n, std::vector<Polynomial> e) { return PolyField(n, std::move(e)); }

std::vector<PolyField> heisenberg_fields() {
  const int n = 3;
  return {field(n, {cst(n, 1), cst(n, 0), var(n, 1) * -0.5}), field(n, {cst(n, 0), cst(n, 1), var(n, 0) * 0.5})};
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"euclidean", "heisenberg", "grushin", "martinet", "heisenberg_linf", "overdetermined_line"};
}

GalleryEntry builtin(const std::string& name) {
  const double dido = 2.0 * std::sqrt(std::numbers::pi);
  GalleryEntry g;
  g.name = name;
  std::smatch m;
  if (name == "euclidean" || std::regex_match(name, m, std::regex(R"(euclidean\((\d+)\))"))) {
    int n = name == "euclidean" ? 2 : std::stoi(m[1]);
    if (n < 1 || n > 8) throw ConfigError("euclidean(n): n must be in 1..8");
    std::vector<PolyField> fs;
    for (int j = 0; j < n; ++j) {
      std::vector<Polynomial> e;
      for (int i = 0; i < n; ++i) e.push_back(cst(n, i == j ? 1.0 : 0.0));
      fs.push_back(field(n, e));
    }
    g.structure = std::make_shared<SubFinslerStructure>(name, ChartDomain::cube(n, 1.0), fs, FiberNorm::euclidean(), 1);
    g.references = {{"rho(x,v)", 1.0, "TRIVIAL", "identity morphism gives |v| for unit v"},
                    {"hormander_step", 1, "TRIVIAL", "fields span R^n"}};
  } else if (name == "heisenberg") {
    g.structure = std::make_shared<SubFinslerStructure>(name, ChartDomain::cube(3, 1.0), heisenberg_fields(),
                                                        FiberNorm::euclidean(), 2);
    g.references = {{"d(0,(1,0,0))", 1.0, "TRIVIAL", "straight horizontal segment"},
                    {"d(0,(0,0,1))", dido, "DERIVED", "isoperimetric circle enclosing area 1"},
                    {"hormander_step", 2, "DERIVED", "bracket table [X1,X2] = dz"}};
  } else if (name == "heisenberg_linf") {
    g.structure = std::make_shared<SubFinslerStructure>(
        name, ChartDomain::cube(3, 1.0), heisenberg_fields(),
        FiberNorm::weighted_p(std::numeric_limits<double>::infinity()), 2);
    g.references = {{"parallelogram_defect(0,e1,e2)", 2.0, "DERIVED", "closed-form l-infinity preimages"},
                    {"hormander_step", 2, "DERIVED", "bracket table [X1,X2] = dz"}};
  } else if (name == "grushin") {
    const int n = 2;
    std::vector<PolyField> fs = {field(n, {cst(n, 1), cst(n, 0)}), field(n, {cst(n, 0), var(n, 0)})};
    g.structure = std::make_shared<SubFinslerStructure>(name, ChartDomain::cube(2, 1.0), fs, FiberNorm::euclidean(), 2);
    g.references = {{"rank on {x=0}", 1, "DERIVED", "columns (1,0),(0,x)"},
                    {"d((0,0),(1,0))", 1.0, "TRIVIAL", "segment (t,0)"},
                    {"rho((x,y),e2)*|x|", 1.0, "DERIVED", "single-constraint min-norm"}};
  } else if (name == "martinet") {
    const int n = 3;
    std::vector<PolyField> fs = {field(n, {cst(n, 1), cst(n, 0), cst(n, 0)}),
                                 field(n, {cst(n, 0), cst(n, 1), var(n, 0) * var(n, 0)})};
    g.structure = std::make_shared<SubFinslerStructure>(name, ChartDomain::cube(3, 1.0), fs, FiberNorm::euclidean(), 3);
    g.references = {{"hormander_step on {x=0}", 3, "DERIVED", "bracket table 2x dz, 2 dz"},
                    {"hormander_step off {x=0}", 2, "DERIVED", "bracket table 2x dz"}};
  } else if (name == "overdetermined_line") {
    const int n = 1;
    std::vector<PolyField> fs = {field(n, {cst(n, 1)}), field(n, {cst(n, 1)})};
    g.structure = std::make_shared<SubFinslerStructure>(name, ChartDomain::cube(1, 1.0), fs, FiberNorm::euclidean(), 1);
    g.references = {{"rho(x,1)", 1.0 / std::sqrt(2.0), "DERIVED", "pseudoinverse least-norm (1/2,1/2)"}};
  } else {
    throw ConfigError("unknown builtin structure '" + name + "'");
  }
  return g;
}

}  // namespace ccml
