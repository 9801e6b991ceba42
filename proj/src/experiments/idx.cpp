#include "blo/idx.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "blo/error.hpp"

namespace blo {

std::size_t IdxTensor::count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, "IDX header needs 4 bytes");
  if (bytes[0] != 0 || bytes[1] != 0) throw Error(ErrorKind::BadMagic, "IDX magic must start with two zero bytes");
  if (bytes[2] != 0x08)
    throw Error(ErrorKind::UnsupportedElementType, "IDX element type " + std::to_string(bytes[2]) +
                                                       " unsupported (only 0x08, unsigned byte)");
  const std::size_t nd = bytes[3];
  if (nd == 0) throw Error(ErrorKind::BadMagic, "IDX dimension count is zero");
  const std::size_t header = 4 + 4 * nd;
  if (bytes.size() < header) throw Error(ErrorKind::TruncatedFile, "IDX header cut short");
  IdxTensor t;
  for (std::size_t i = 0; i < nd; ++i) {
    const std::uint8_t* p = bytes.data() + 4 + 4 * i;
    t.dims.push_back(std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3]);
  }
  const std::size_t n = t.count();
  if (bytes.size() - header < n)
    throw Error(ErrorKind::TruncatedFile, "IDX payload has " + std::to_string(bytes.size() - header) +
                                              " bytes, header declares " + std::to_string(n));
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                bytes.begin() + static_cast<std::ptrdiff_t>(header + n));
  return t;
}

IdxTensor load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_idx(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& t) {
  if (t.dims.empty() || t.dims.size() > 255) throw Error(ErrorKind::ShapeMismatch, "IDX needs 1..255 dimensions");
  if (t.data.size() != t.count()) throw Error(ErrorKind::ShapeMismatch, "IDX data length != product of dims");
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(t.dims.size())};
  for (auto d : t.dims)
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

OriginalData load_mnist(const std::filesystem::path& dir, std::size_t limit) {
  const IdxTensor images = load_idx(dir / "train-images-idx3-ubyte");
  const IdxTensor labels = load_idx(dir / "train-labels-idx1-ubyte");
  if (images.dims.size() != 3 || labels.dims.size() != 1 || images.dims[0] != labels.dims[0])
    throw Error(ErrorKind::ShapeMismatch, "MNIST images must be N x rows x cols with N labels");
  const std::size_t total = images.dims[0];
  const std::size_t n = limit == 0 ? total : std::min(limit, total);
  const std::size_t px = std::size_t{images.dims[1]} * images.dims[2];
  OriginalData d;
  d.loss = LossKind::SoftmaxCrossEntropy;
  d.x = DenseMatrix(n, px);
  for (std::size_t i = 0; i < n * px; ++i) d.x.data()[i] = images.data[i] / 255.0;
  d.classes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels.data[i] > 9) throw Error(ErrorKind::ShapeMismatch, "MNIST label out of range");
    d.classes[i] = labels.data[i];
  }
  return d;
}

}  // namespace blo
