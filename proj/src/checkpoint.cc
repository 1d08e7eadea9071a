#include "hsiband/checkpoint.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "hsiband/errors.h"

namespace hsiband {
namespace {

constexpr unsigned char kVersion = 1;

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw DataError("BFNN: truncated at byte offset " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_shape(std::vector<unsigned char>& out, const std::vector<std::size_t>& shape) {
  out.push_back(static_cast<unsigned char>(shape.size()));
  for (std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
}

std::vector<std::size_t> read_shape(Reader& in) {
  const std::size_t rank = in.u8();
  if (rank == 0 || rank > 4) throw DataError("BFNN: bad tensor rank at byte offset " + std::to_string(in.offset() - 1));
  std::vector<std::size_t> shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = in.u32();
    if (d == 0) throw DataError("BFNN: zero dimension at byte offset " + std::to_string(in.offset() - 4));
    count *= d;
    if (count > (std::uint64_t{1} << 32)) throw DataError("BFNN: tensor too large");
  }
  return shape;
}

void read_values(Reader& in, Tensor<float>& t) {
  in.need(4 * t.size());
  for (float& v : t.values()) {
    const std::size_t at = in.offset();
    v = in.f32();
    if (!std::isfinite(v)) throw DataError("BFNN: non-finite value at byte offset " + std::to_string(at));
  }
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(std::span<const LayerParams<float>> layers) {
  std::vector<unsigned char> out{'B', 'F', 'N', 'N', kVersion, 0, 0, 0};
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    out.push_back(static_cast<unsigned char>(layer.kind));
    put_shape(out, layer.weights.shape());
    put_shape(out, layer.biases.shape());
    for (float v : layer.weights.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    for (float v : layer.biases.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<LayerParams<float>> decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader in(bytes);
  in.need(8);
  if (std::memcmp(bytes.data(), "BFNN", 4) != 0) throw DataError("BFNN: bad magic at byte offset 0");
  for (int i = 0; i < 4; ++i) in.u8();
  if (in.u8() != kVersion) throw DataError("BFNN: unsupported version at byte offset 4");
  for (std::size_t i = 5; i < 8; ++i) {
    if (in.u8() != 0) throw DataError("BFNN: non-zero padding at byte offset " + std::to_string(i));
  }
  const std::uint32_t count = in.u32();

  std::vector<LayerParams<float>> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t kind_at = in.offset();
    const auto kind = static_cast<LayerKind>(in.u8());
    if (kind != LayerKind::dense && kind != LayerKind::conv3x3)
      throw DataError("BFNN: unexpected layer kind at byte offset " + std::to_string(kind_at));
    LayerParams<float> layer;
    layer.kind = kind;
    layer.name = "layer" + std::to_string(l);
    layer.weights = Tensor<float>(read_shape(in));
    layer.biases = Tensor<float>(read_shape(in));
    const std::size_t want_rank = kind == LayerKind::dense ? 2 : 4;
    if (layer.weights.rank() != want_rank || layer.biases.rank() != 1 ||
        layer.biases.dim(0) != layer.weights.dim(0) ||
        (kind == LayerKind::conv3x3 && (layer.weights.dim(2) != 3 || layer.weights.dim(3) != 3)))
      throw DataError("BFNN: inconsistent shapes in record " + std::to_string(l));
    read_values(in, layer.weights);
    read_values(in, layer.biases);
    layers.push_back(std::move(layer));
  }
  if (!in.done()) throw DataError("BFNN: trailing bytes at byte offset " + std::to_string(in.offset()));
  return layers;
}

void save_checkpoint(std::span<const LayerParams<float>> layers, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(layers);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<LayerParams<float>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace hsiband
