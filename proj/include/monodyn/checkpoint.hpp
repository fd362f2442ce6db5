#pragma once

#include <filesystem>

#include "monodyn/net.hpp"

namespace monodyn::nn {

// Text container with a versioned magic header holding layer dims,
// activation kinds, constraint mode, all parameters, BN running statistics,
// and the training-step counter. Values round-trip at full precision.
void save_net(const std::filesystem::path& path, const MonotoneNet& net,
              long train_step);
MonotoneNet load_net(const std::filesystem::path& path,
                     long* train_step = nullptr);

void save_lyapunov_net(const std::filesystem::path& path,
                       const LyapunovNet& net, long train_step);
LyapunovNet load_lyapunov_net(const std::filesystem::path& path,
                              long* train_step = nullptr);

}  // namespace monodyn::nn
