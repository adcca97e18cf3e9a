#pragma once

#include <string>
#include <vector>

#include "emkken/autodiff.hpp"

namespace emkken::io {

/// Named-tensor checkpoint: u64 little-endian header length, JSON header
/// (per tensor: shape, dtype, byte offset into the payload), then the raw
/// little-endian payload. dtype follows the active precision mode (f32
/// payloads in 32-bit mode, f64 otherwise).
void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params);

/// Loads values into matching parameters (by name); shapes must agree.
void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params);

}  // namespace emkken::io
