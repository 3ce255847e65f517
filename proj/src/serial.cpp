#include "gfnerf/serial.h"

#include <cstring>
#include <fstream>

#include "gfnerf/util.h"

namespace gfnerf {

void write_blob(const std::string& path, const CheckpointBlob& blob) {
  GF_CHECK(blob.magic.size() == 8, "blob magic must be 8 bytes: " + blob.magic);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  GF_CHECK(f.good(), "cannot open for write: " + path);
  f.write(blob.magic.data(), 8);
  uint32_t hlen = uint32_t(blob.header.size());
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(blob.header.data(), std::streamsize(blob.header.size()));
  f.write(reinterpret_cast<const char*>(blob.payload.data()), std::streamsize(blob.payload.size()));
  GF_CHECK(f.good(), "write failed: " + path);
}

CheckpointBlob read_blob(const std::string& path, const std::string& expected_magic) {
  std::ifstream f(path, std::ios::binary);
  GF_CHECK(f.good(), "cannot open: " + path);
  CheckpointBlob blob;
  blob.magic.resize(8);
  f.read(blob.magic.data(), 8);
  GF_CHECK(f.gcount() == 8, "truncated file: " + path);
  GF_CHECK(blob.magic == expected_magic,
           "bad magic in " + path + " (got '" + blob.magic + "', want '" + expected_magic + "')");
  uint32_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 4);
  GF_CHECK(f.gcount() == 4, "truncated header length: " + path);
  blob.header.resize(hlen);
  f.read(blob.header.data(), hlen);
  GF_CHECK(uint32_t(f.gcount()) == hlen, "truncated header: " + path);
  blob.payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return blob;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GF_CHECK(f.good(), "cannot open: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const void* data, size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  GF_CHECK(f.good(), "cannot open for write: " + path);
  f.write(static_cast<const char*>(data), std::streamsize(n));
  GF_CHECK(f.good(), "write failed: " + path);
}

std::string read_file_text(const std::string& path) {
  std::ifstream f(path);
  GF_CHECK(f.good(), "cannot open: " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  GF_CHECK(f.good(), "cannot open for write: " + path);
  f << text;
  GF_CHECK(f.good(), "write failed: " + path);
}

}  // namespace gfnerf
