#include "monodyn/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace monodyn::csv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory(const std::filesystem::path& path,
                      const dynamics::Trajectory& traj, long first_t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "t";
  for (Index j = 0; j < traj.dim(); ++j) out << ",x" << j;
  out << "\n";
  for (Index t = 0; t < traj.states.rows(); ++t) {
    out << (first_t + t);
    for (Index j = 0; j < traj.dim(); ++j) {
      out << "," << format_double(traj.states(t, j));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

dynamics::Trajectory read_trajectory(const std::filesystem::path& path) {
  std::vector<std::string> header;
  const auto rows = read_table(path, &header);
  if (header.empty() || header[0] != "t") {
    throw IoError("not a trajectory file (missing 't' column): " +
                  path.string());
  }
  const Index dim = static_cast<Index>(header.size()) - 1;
  if (dim < 1) throw IoError("trajectory has no state columns: " + path.string());
  dynamics::Trajectory traj;
  traj.states.resize(static_cast<Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Index>(rows[r].size()) != dim + 1) {
      throw IoError("ragged row " + std::to_string(r) + " in " + path.string());
    }
    for (Index j = 0; j < dim; ++j) {
      traj.states(static_cast<Index>(r), j) =
          std::strtod(rows[r][j + 1].c_str(), nullptr);
    }
  }
  return traj;
}

void write_table(const std::filesystem::path& path,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::vector<std::string>> read_table(
    const std::filesystem::path& path, std::vector<std::string>* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (first && header) {
      *header = fields;
      first = false;
      continue;
    }
    first = false;
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace monodyn::csv
