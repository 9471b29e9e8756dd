#include "labelforge/zip.hpp"

#include <zlib.h>

#include <cstdint>

#include "labelforge/error.hpp"

namespace labelforge::zip {
namespace {

constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr std::uint16_t kMethodStore = 0;
constexpr std::uint16_t kMethodDeflate = 8;
constexpr std::uint16_t kFlagUtf8 = 1 << 11;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get16(std::string_view b, std::size_t at) {
  if (at + 2 > b.size()) throw Error(ErrorCode::invalid_argument, "truncated zip archive");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

std::uint32_t get32(std::string_view b, std::size_t at) {
  return static_cast<std::uint32_t>(get16(b, at)) | (static_cast<std::uint32_t>(get16(b, at + 2)) << 16);
}

std::uint32_t crc_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::string deflate_raw(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorCode::internal, "deflateInit2 failed");
  std::string out(deflateBound(&zs, static_cast<uLong>(data.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::internal, "deflate failed");
  out.resize(zs.total_out);
  return out;
}

std::string inflate_raw(std::string_view data, std::size_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw Error(ErrorCode::internal, "inflateInit2 failed");
  std::string out(expected, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected)
    throw Error(ErrorCode::invalid_argument, "corrupt deflate stream in zip entry");
  return out;
}

}  // namespace

std::string write_archive(const std::vector<Entry>& entries) {
  std::string out, central;
  for (const auto& e : entries) {
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto crc = crc_of(e.data);
    auto compressed = deflate_raw(e.data);
    std::uint16_t method = kMethodDeflate;
    if (compressed.size() >= e.data.size()) {
      compressed = e.data;
      method = kMethodStore;
    }
    const auto name_len = static_cast<std::uint16_t>(e.name.size());

    put32(out, 0x04034b50);
    put16(out, 20);
    put16(out, kFlagUtf8);
    put16(out, method);
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, static_cast<std::uint32_t>(compressed.size()));
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put16(out, name_len);
    put16(out, 0);
    out += e.name;
    out += compressed;

    put32(central, 0x02014b50);
    put16(central, 20);  // made by
    put16(central, 20);  // needed
    put16(central, kFlagUtf8);
    put16(central, method);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, static_cast<std::uint32_t>(compressed.size()));
    put32(central, static_cast<std::uint32_t>(e.data.size()));
    put16(central, name_len);
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += e.name;
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::map<std::string, std::string> read_archive(std::string_view b) {
  if (b.size() < 22) throw Error(ErrorCode::invalid_argument, "not a zip archive");
  std::size_t eocd = std::string_view::npos;
  for (std::size_t i = b.size() - 22 + 1; i-- > 0;) {
    if (get32(b, i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string_view::npos) throw Error(ErrorCode::invalid_argument, "zip end record not found");

  const auto count = get16(b, eocd + 10);
  std::size_t at = get32(b, eocd + 16);
  std::map<std::string, std::string> out;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (get32(b, at) != 0x02014b50) throw Error(ErrorCode::invalid_argument, "bad central directory entry");
    const auto method = get16(b, at + 10);
    const auto crc = get32(b, at + 16);
    const auto csize = get32(b, at + 20);
    const auto usize = get32(b, at + 24);
    const auto name_len = get16(b, at + 28);
    const auto extra_len = get16(b, at + 30);
    const auto comment_len = get16(b, at + 32);
    const auto local = get32(b, at + 42);
    if (at + 46 + name_len > b.size()) throw Error(ErrorCode::invalid_argument, "truncated zip archive");
    std::string name(b.substr(at + 46, name_len));
    at += 46 + name_len + extra_len + comment_len;

    if (get32(b, local) != 0x04034b50) throw Error(ErrorCode::invalid_argument, "bad local header");
    const std::size_t data_at = local + 30 + get16(b, local + 26) + get16(b, local + 28);
    if (data_at + csize > b.size()) throw Error(ErrorCode::invalid_argument, "truncated zip entry");
    auto raw = b.substr(data_at, csize);
    std::string data;
    if (method == kMethodStore)
      data = std::string(raw);
    else if (method == kMethodDeflate)
      data = inflate_raw(raw, usize);
    else
      throw Error(ErrorCode::invalid_argument, "unsupported zip compression method");
    if (crc_of(data) != crc) throw Error(ErrorCode::invalid_argument, "zip entry CRC mismatch: " + name);
    out.emplace(std::move(name), std::move(data));
  }
  return out;
}

}  // namespace labelforge::zip
