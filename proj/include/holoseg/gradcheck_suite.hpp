#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holoseg/micronet.hpp"

namespace holoseg {

/// Names accepted by check_op.
std::vector<std::string> gradcheck_op_names();

/// Finite-difference check of one primitive on random inputs drawn away
/// from its kinks and clamp regions. Returns the worst relative error over
/// all of the op's differentiable arguments.
double check_op(const std::string& name, std::uint64_t seed);

struct TensorCheck {
  std::string name;
  double error = 0;
};

struct FullNetCheck {
  std::vector<TensorCheck> tensors;
  /// Norm of d(segmentation loss)/d(patch-net weights), i.e. the gradient
  /// that reaches the patch network only through the soft filter.
  double holistic_path_norm = 0;
  std::uint64_t seed_used = 0;  // first seed whose forward pass was far from kinks
};

/// Config of the small network used for the end-to-end check.
MicroNetConfig gradcheck_net_config();

/// Checks total_loss against central differences for every weight tensor
/// of the holistic network on a 16x16 input.
FullNetCheck check_full_net(std::uint64_t seed, double step = 1e-5, double margin = 1e-4);

}  // namespace holoseg
