#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace mediavault {

// CRC-32C (Castagnoli), reflected, init and final xor 0xffffffff.
class Crc32c {
public:
    void update(std::span<const std::uint8_t> data);
    void update(std::string_view text) {
        update(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    std::uint32_t value() const { return ~state_; }

private:
    std::uint32_t state_ = 0xffffffffu;
};

std::uint32_t crc32c(std::span<const std::uint8_t> data);

} // namespace mediavault
