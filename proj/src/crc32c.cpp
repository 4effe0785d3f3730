#include "mediavault/crc32c.hpp"

#include <array>

namespace mediavault {

namespace {

constexpr std::uint32_t kPoly = 0x82f63b78u;

constexpr std::array<std::uint32_t, 256> make_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t crc = i;
        for (int bit = 0; bit < 8; ++bit)
            crc = (crc & 1) ? (crc >> 1) ^ kPoly : crc >> 1;
        table[i] = crc;
    }
    return table;
}

constexpr auto kTable = make_table();

} // namespace

void Crc32c::update(std::span<const std::uint8_t> data) {
    std::uint32_t crc = state_;
    for (std::uint8_t byte : data)
        crc = kTable[(crc ^ byte) & 0xff] ^ (crc >> 8);
    state_ = crc;
}

std::uint32_t crc32c(std::span<const std::uint8_t> data) {
    Crc32c c;
    c.update(data);
    return c.value();
}

} // namespace mediavault
