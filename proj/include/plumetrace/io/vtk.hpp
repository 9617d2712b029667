#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/mesh.hpp"

namespace plumetrace::io {

/// Legacy ASCII VTK unstructured grid with one point-scalar array per entry
/// of `fields`; a zero-length vector is written as zeros.
inline std::string vtk_unstructured(const Mesh& mesh, const std::vector<std::pair<std::string, const VectorXd*>>& fields,
                                    const std::string& title = "plumetrace") {
  using plumetrace::detail::format_double;
  const std::size_t n = mesh.num_nodes(), ne = mesh.num_triangles();
  std::string out;
  out.reserve(64 * (n + ne));
  out += "# vtk DataFile Version 3.0\n" + title + "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out += "POINTS " + std::to_string(n) + " double\n";
  for (const auto& p : mesh.nodes()) out += format_double(p.x()) + ' ' + format_double(p.y()) + " 0\n";
  out += "CELLS " + std::to_string(ne) + ' ' + std::to_string(4 * ne) + '\n';
  for (const auto& t : mesh.triangles())
    out += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
  out += "CELL_TYPES " + std::to_string(ne) + '\n';
  for (std::size_t e = 0; e < ne; ++e) out += "5\n";
  out += "POINT_DATA " + std::to_string(n) + '\n';
  for (const auto& [name, values] : fields) {
    plumetrace::detail::require(values->size() == 0 || values->size() == static_cast<Eigen::Index>(n),
                                "vtk: field '" + name + "' does not match the mesh");
    out += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < n; ++i)
      out += (values->size() ? format_double((*values)[static_cast<Eigen::Index>(i)]) : std::string("0")) + '\n';
  }
  return out;
}

/// File name `<prefix>_<step>.vtk` with the step zero-padded to `width` digits.
inline std::string vtk_step_name(const std::string& prefix, std::size_t step, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, step);
  return prefix + "_" + buf + ".vtk";
}

}  // namespace plumetrace::io
