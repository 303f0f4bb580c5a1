#pragma once

#include <filesystem>
#include <iosfwd>

#include "guidecap/tensor.hpp"

namespace gcap {

// GTEN tensor container: magic "GTEN", u32 rank, u32 per dimension, then the
// f32 payload in row-major order. All fields little-endian. Round trips are
// bit-exact.
void write_gten(std::ostream& os, const Tensor& t);
Tensor read_gten(std::istream& is);

uint64_t gten_byte_size(const Tensor& t);

void save_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor_file(const std::filesystem::path& path);

}  // namespace gcap
