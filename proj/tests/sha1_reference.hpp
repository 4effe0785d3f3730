#pragma once
// Self-contained SHA1 used as an independent cross-check of the library's
// hashing. Deliberately shares no code with the implementation under test.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace refsha1 {

inline std::uint32_t rol(std::uint32_t v, int s) {
    return (v << s) | (v >> (32 - s));
}

inline std::array<std::uint8_t, 20> digest(std::span<const std::uint8_t> data) {
    std::uint32_t h[5] = {0x67452301u, 0xefcdab89u, 0x98badcfeu, 0x10325476u, 0xc3d2e1f0u};

    std::vector<std::uint8_t> padded(data.begin(), data.end());
    std::uint64_t bit_length = static_cast<std::uint64_t>(data.size()) * 8;
    padded.push_back(0x80);
    while (padded.size() % 64 != 56)
        padded.push_back(0);
    for (int i = 7; i >= 0; --i)
        padded.push_back(static_cast<std::uint8_t>(bit_length >> (8 * i)));

    for (std::size_t off = 0; off < padded.size(); off += 64) {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = (static_cast<std::uint32_t>(padded[off + 4 * i]) << 24) |
                   (static_cast<std::uint32_t>(padded[off + 4 * i + 1]) << 16) |
                   (static_cast<std::uint32_t>(padded[off + 4 * i + 2]) << 8) |
                   static_cast<std::uint32_t>(padded[off + 4 * i + 3]);
        for (int i = 16; i < 80; ++i)
            w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5a827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ed9eba1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8f1bbcdcu;
            } else {
                f = b ^ c ^ d;
                k = 0xca62c1d6u;
            }
            std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = tmp;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }

    std::array<std::uint8_t, 20> out{};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j)
            out[static_cast<std::size_t>(4 * i + j)] =
                static_cast<std::uint8_t>(h[i] >> (8 * (3 - j)));
    return out;
}

inline std::string hex_digest(std::span<const std::uint8_t> data) {
    auto raw = digest(data);
    std::string out;
    out.reserve(40);
    for (std::uint8_t b : raw) {
        out.push_back("0123456789abcdef"[b >> 4]);
        out.push_back("0123456789abcdef"[b & 0x0f]);
    }
    return out;
}

inline std::string hex_digest(std::string_view text) {
    return hex_digest(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace refsha1
