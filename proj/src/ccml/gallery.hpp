#pragma once

#include "ccml/structure.hpp"

namespace ccml {

struct Reference {
  std::string quantity;
  double value;
  std::string tag;     // TRIVIAL, DERIVED or PAPER
  std::string oracle;  // how the value is obtained
};

struct GalleryEntry {
  std::string name;
  StructurePtr structure;
  std::vector<Reference> references;
};

// Names: euclidean (n = 2), euclidean(n), heisenberg, grushin, martinet,
// heisenberg_linf, overdetermined_line.
GalleryEntry builtin(const std::string& name);
std::vector<std::string> builtin_names();

}  // namespace ccml
