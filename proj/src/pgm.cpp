#include "glymph/pgm.hpp"

#include <cstdio>

namespace glymph {

void write_pgm16(const std::vector<std::uint16_t>& pixels, int height, int width,
                 const std::string& path) {
  if (static_cast<long>(pixels.size()) != static_cast<long>(height) * width)
    fail(ErrorKind::Shape, "write_pgm16: pixel count does not match dimensions");
  char header[64];
  std::snprintf(header, sizeof header, "P5\n%d %d\n65535\n", width, height);
  std::string bytes(header);
  bytes.reserve(bytes.size() + pixels.size() * 2);
  for (std::uint16_t p : pixels) {
    bytes.push_back(static_cast<char>(p >> 8)); // big-endian per PGM convention
    bytes.push_back(static_cast<char>(p & 0xff));
  }
  write_file_bytes(path, bytes);
}

namespace {

// skips whitespace and "#" comments between header tokens
long next_token(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  long v = 0;
  bool any = false;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + (s[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) fail(ErrorKind::IoCorrupt, "read_pgm16: malformed header");
  return v;
}

} // namespace

Pgm16 read_pgm16(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    fail(ErrorKind::IoBadMagic, path + ": not a binary PGM file");
  std::size_t pos = 2;
  Pgm16 img;
  img.width = static_cast<int>(next_token(bytes, pos));
  img.height = static_cast<int>(next_token(bytes, pos));
  const long maxval = next_token(bytes, pos);
  if (maxval != 65535) fail(ErrorKind::IoVersion, path + ": expected 16-bit PGM (maxval 65535)");
  ++pos; // single whitespace after maxval
  const std::size_t count = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  if (bytes.size() - pos != 2 * count)
    fail(ErrorKind::IoCorrupt, path + ": PGM payload size mismatch");
  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto hi = static_cast<unsigned char>(bytes[pos + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    img.pixels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return img;
}

} // namespace glymph
