#include "core/imageio.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace afw {

namespace {

void write_binary(const std::string& path, const std::string& header, const void* data, size_t len) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for write: " + path);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!f) throw DataError("short write: " + path);
}

struct PnmHeader {
  std::string magic;
  int cols = 0;
  int rows = 0;
  int maxval = 0;
  size_t data_offset = 0;
};

PnmHeader parse_pnm_header(const std::string& bytes, const std::string& path) {
  PnmHeader h;
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < bytes.size() && !isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  h.magic = next_token();
  try {
    h.cols = std::stoi(next_token());
    h.rows = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw DataError("malformed PNM header: " + path);
  }
  if (pos >= bytes.size()) throw DataError("truncated PNM header: " + path);
  h.data_offset = pos + 1;  // single whitespace after maxval
  if (h.cols <= 0 || h.rows <= 0 || h.maxval != 255)
    throw DataError("unsupported PNM format: " + path);
  return h;
}

}  // namespace

void write_ppm(const std::string& path, const ImageRGB& img) {
  std::ostringstream hdr;
  hdr << "P6\n" << img.cols << " " << img.rows << "\n255\n";
  write_binary(path, hdr.str(), img.v.data(), img.v.size());
}

ImageRGB read_ppm(const std::string& path) {
  std::string bytes = read_text_file(path);
  PnmHeader h = parse_pnm_header(bytes, path);
  if (h.magic != "P6") throw DataError("not a P6 PPM: " + path);
  size_t need = static_cast<size_t>(h.rows) * h.cols * 3;
  if (bytes.size() - h.data_offset < need) throw DataError("truncated PPM payload: " + path);
  ImageRGB img(h.rows, h.cols);
  std::copy_n(bytes.data() + h.data_offset, need, reinterpret_cast<char*>(img.v.data()));
  return img;
}

void write_pgm_mask(const std::string& path, const MaskPlane& mask) {
  std::ostringstream hdr;
  hdr << "P5\n" << mask.cols << " " << mask.rows << "\n255\n";
  std::vector<uint8_t> bytes(mask.v.size());
  for (size_t i = 0; i < mask.v.size(); ++i) bytes[i] = mask.v[i] ? 255 : 0;
  write_binary(path, hdr.str(), bytes.data(), bytes.size());
}

MaskPlane read_pgm_mask(const std::string& path) {
  std::string bytes = read_text_file(path);
  PnmHeader h = parse_pnm_header(bytes, path);
  if (h.magic != "P5") throw DataError("not a P5 PGM: " + path);
  size_t need = static_cast<size_t>(h.rows) * h.cols;
  if (bytes.size() - h.data_offset < need) throw DataError("truncated PGM payload: " + path);
  MaskPlane m(h.rows, h.cols);
  for (size_t i = 0; i < need; ++i)
    m.v[i] = static_cast<uint8_t>(bytes[h.data_offset + i]) ? 1 : 0;
  return m;
}

std::string sha256_hex(const void* data, size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data, len);
  EVP_DigestFinal_ex(ctx, md, &md_len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file_hex(const std::string& path) {
  return sha256_hex(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for write: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw DataError("short write: " + path);
}

}  // namespace afw
