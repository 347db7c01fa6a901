#pragma once

#include <string>

#include "snn/network.hpp"

namespace snn {

/// Versioned binary checkpoint container.
///
/// Layout (all integers little-endian):
///   magic "SNNB" | u32 version (=1)
///   u8 rule | u8 mode | u8 le_sum_over_time
///   u32 n_layers, then per layer the topology descriptor:
///     u8 kind (0 conv, 1 fc) | u8 neuron (0 ff, 1 rec, 2 relu)
///     conv: u32 in_c,in_h,in_w,out_c,ksize,stride   fc: u32 in_dim,out_dim
///   f32 decay | f32 v_th | f32 surrogate_slope | u32 T | u64 seed
///   per layer, raw little-endian f32 tensors in declaration order:
///     w, v (REC layers only), g, g_v (REC layers only)
///
/// Round trips are bit-exact; any magic/version/size mismatch or truncation
/// rejects the whole file.
void checkpoint_save(const NetworkModel& model, const std::string& path);
NetworkModel checkpoint_load(const std::string& path);

}  // namespace snn
