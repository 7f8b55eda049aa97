#include "nbr/hash.hpp"

#include <algorithm>
#include <cstdio>

#include <zlib.h>

namespace nbr {

std::uint32_t crc32_of(std::span<const unsigned char> d) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < d.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(d.size() - off, 1u << 30));
    c = crc32(c, d.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

std::uint32_t crc32_of(std::string_view text) {
  return crc32_of({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace nbr
