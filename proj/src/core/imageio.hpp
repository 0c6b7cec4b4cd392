#pragma once

#include <string>
#include <vector>

#include "core/plane.hpp"

namespace afw {

// Binary PPM (P6) / PGM (P5). Lossless for 8-bit data, byte-stable across
// runs, and readable by standard tools.
void write_ppm(const std::string& path, const ImageRGB& img);
ImageRGB read_ppm(const std::string& path);

// Masks are stored as 0/255 so they are viewable; read maps nonzero -> 1.
void write_pgm_mask(const std::string& path, const MaskPlane& mask);
MaskPlane read_pgm_mask(const std::string& path);

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace afw
