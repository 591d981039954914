#include "pbnn/serialization.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace pbnn::io {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u64(s.size());
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

// Fixed tensors are stored as raw integers plus their Q-format; real ones
// as IEEE-754 bit patterns. Both round-trip exactly.
void ByteWriter::tensor(const Tensor& t) {
  u8(t.backend().is_fixed() ? 1 : 0);
  if (t.backend().is_fixed()) {
    u8(static_cast<std::uint8_t>(t.backend().format().total_bits));
    u8(static_cast<std::uint8_t>(t.backend().format().frac_bits));
  }
  u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) u64(d);
  if (t.backend().is_fixed()) {
    for (std::size_t i = 0; i < t.size(); ++i) i32(static_cast<std::int32_t>(t.raw(i)));
  } else {
    for (double x : t.values()) f64(x);
  }
}

std::uint64_t ByteReader::get(int n) {
  if (pos_ + static_cast<std::size_t>(n) > bytes_.size()) throw FormatError("truncated payload");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
  pos_ += static_cast<std::size_t>(n);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const auto n = u64();
  if (n > bytes_.size() - pos_) throw FormatError("truncated string");
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

Tensor ByteReader::tensor() {
  const bool fixed = u8() != 0;
  Backend backend = Backend::real();
  if (fixed) {
    const int total = u8();
    const int frac = u8();
    try {
      backend = Backend::fixed(fxp::QFormat::make(total, frac));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("bad tensor format: ") + e.what());
    }
  }
  const auto rank = u32();
  if (rank > 8) throw FormatError("implausible tensor rank");
  Shape shape(rank);
  for (auto& d : shape) d = u64();
  const std::size_t n = shape_size(shape);
  if (n > (bytes_.size() - pos_)) throw FormatError("truncated tensor");
  std::vector<double> values(n);
  for (auto& x : values) {
    x = fixed ? fxp::raw_to_real(i32(), backend.format()) : f64();
  }
  return Tensor(std::move(shape), std::move(values), backend);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_container(const std::filesystem::path& path, std::string_view magic,
                     std::uint32_t version, const std::vector<std::uint8_t>& payload) {
  if (magic.size() != 8) throw std::logic_error("container magic must be 8 bytes");
  ByteWriter header;
  header.u32(version);
  header.u64(payload.size());
  ByteWriter trailer;
  trailer.u64(fnv1a(payload));
  std::string blob(magic);
  blob.append(header.bytes().begin(), header.bytes().end());
  blob.append(payload.begin(), payload.end());
  blob.append(trailer.bytes().begin(), trailer.bytes().end());
  write_text_atomic(path, blob);
}

std::vector<std::uint8_t> read_container(const std::filesystem::path& path, std::string_view magic,
                                         std::uint32_t version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (blob.size() < 8 + 4 + 8 + 8 ||
      std::string_view(reinterpret_cast<const char*>(blob.data()), 8) != magic) {
    throw FormatError(path.string() + ": not a " + std::string(magic) + " file");
  }
  ByteReader header(std::span<const std::uint8_t>(blob).subspan(8, 12));
  const auto found_version = header.u32();
  if (found_version != version) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(found_version) +
                      " (expected " + std::to_string(version) + ")");
  }
  const auto length = header.u64();
  if (length != blob.size() - 28) throw FormatError(path.string() + ": truncated or padded file");
  std::vector<std::uint8_t> payload(blob.begin() + 20, blob.begin() + 20 + static_cast<std::ptrdiff_t>(length));
  ByteReader trailer(std::span<const std::uint8_t>(blob).subspan(20 + length, 8));
  if (trailer.u64() != fnv1a(payload)) throw FormatError(path.string() + ": checksum mismatch");
  return payload;
}

}  // namespace pbnn::io
