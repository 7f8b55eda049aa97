#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace nbr {

std::uint32_t crc32_of(std::span<const unsigned char> data);
std::uint32_t crc32_of(std::string_view text);
std::string hex32(std::uint32_t v);

}  // namespace nbr
