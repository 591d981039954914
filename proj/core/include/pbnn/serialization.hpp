#pragma once

// Little-endian binary containers: 8-byte magic, u32 version, u64 payload
// length, payload, FNV-1a-64 checksum of the payload. Writes go through a
// temporary file and a rename so a failed write never leaves a partial file.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pbnn/tensor.hpp"

namespace pbnn::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void f64(double v);
  void str(std::string_view s);
  void tensor(const Tensor& t);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }
  double f64();
  std::string str();
  Tensor tensor();

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t get(int n);
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_container(const std::filesystem::path& path, std::string_view magic,
                     std::uint32_t version, const std::vector<std::uint8_t>& payload);

/// Returns the payload; throws FormatError on wrong magic, unsupported
/// version, truncation or checksum mismatch.
std::vector<std::uint8_t> read_container(const std::filesystem::path& path, std::string_view magic,
                                         std::uint32_t version);

/// Writes text through a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace pbnn::io
