#pragma once

#include <filesystem>

#include "fgir/tensor.hpp"

namespace fgir {

// Binary 8-bit grayscale PGM (P5). Reads scale byte values to [0,1] doubles;
// writes quantize with round-to-nearest. Byte-level round trips are lossless.

Tensor read_pgm(const std::filesystem::path& path);  // [h,w] in [0,1]

void write_pgm(const Tensor& image2d, const std::filesystem::path& path);

// Writes a raw byte image directly; used by the generator so file contents
// are a pure function of the byte values.
void write_pgm_bytes(const std::vector<std::uint8_t>& bytes, std::size_t width,
                     std::size_t height, const std::filesystem::path& path);

} // namespace fgir
