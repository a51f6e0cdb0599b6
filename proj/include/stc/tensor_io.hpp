#pragma once

#include <filesystem>
#include <iosfwd>

#include "stc/tensor.hpp"

namespace stc {

// STCT container: magic "STCT", u16 format version (=1), u8 rank,
// rank x u32 dims, u8 dtype code (0 = f32, 1 = f64), raw little-endian payload.
void write_stct(std::ostream& os, const Tensor& t);
Tensor read_stct(std::istream& is);

void write_stct(const std::filesystem::path& path, const Tensor& t);
Tensor read_stct(const std::filesystem::path& path);

}  // namespace stc
