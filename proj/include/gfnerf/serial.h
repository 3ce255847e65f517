#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>


namespace gfnerf {

// Shared checkpoint container: 8 magic bytes, u32 little-endian JSON header
// length, JSON header text, raw little-endian payload.
struct CheckpointBlob {
  std::string magic;  // exactly 8 bytes
  std::string header; // JSON text
  std::vector<uint8_t> payload;
};

void write_blob(const std::string& path, const CheckpointBlob& blob);
CheckpointBlob read_blob(const std::string& path, const std::string& expected_magic);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t n);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

// Payload append helpers (host is little-endian x86; stored verbatim).
template <typename T>
void put_pod(std::vector<uint8_t>& out, const T& v) {
  const uint8_t* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_pod(const std::vector<uint8_t>& in, size_t& cursor) {
  T v;
  if (cursor + sizeof(T) > in.size()) throw std::runtime_error("gfnerf: truncated payload");
  __builtin_memcpy(&v, in.data() + cursor, sizeof(T));
  cursor += sizeof(T);
  return v;
}

}  // namespace gfnerf
