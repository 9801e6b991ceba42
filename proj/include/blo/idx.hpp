#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "blo/mlp.hpp"

namespace blo {

// Unsigned-byte IDX tensor (the MNIST container).
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t count() const;  // product of dims
};

// Header: two zero bytes, element type (0x08 only), dimension count, then one
// big-endian uint32 per dimension. Errors: BadMagic, UnsupportedElementType,
// TruncatedFile.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
IdxTensor load_idx(const std::filesystem::path& path);  // adds IoError
std::vector<std::uint8_t> encode_idx(const IdxTensor& t);

// train-images-idx3-ubyte / train-labels-idx1-ubyte from dir, pixels scaled to
// [0, 1]. limit = 0 keeps every example.
OriginalData load_mnist(const std::filesystem::path& dir, std::size_t limit = 0);

}  // namespace blo
