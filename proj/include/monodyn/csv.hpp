#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "monodyn/common.hpp"
#include "monodyn/dynamics.hpp"

namespace monodyn::csv {

// Full-precision rendering (17 significant digits) so values round-trip.
std::string format_double(double v);

// Trajectory files: header "t,x0,x1,...", one row per time step, LF endings.
// first_t shifts the time column, e.g. for predictions starting at t = q.
void write_trajectory(const std::filesystem::path& path,
                      const dynamics::Trajectory& traj, long first_t = 0);
dynamics::Trajectory read_trajectory(const std::filesystem::path& path);

// Generic table writer for reports and loss histories.
void write_table(const std::filesystem::path& path,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

std::vector<std::vector<std::string>> read_table(
    const std::filesystem::path& path, std::vector<std::string>* header);

}  // namespace monodyn::csv
