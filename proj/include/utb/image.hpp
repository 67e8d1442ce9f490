#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "utb/error.hpp"
#include "utb/io.hpp"

namespace utb {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// Binary portable graymap (P5), 8-bit, row-major. Byte output is a pure
// function of the pixel data.
inline std::uint64_t write_pgm(std::uint32_t width, std::uint32_t height,
                               std::span<const std::uint8_t> pixels, std::ostream& out) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ConfigError("pgm pixel count does not match dimensions");
    const std::string head =
        "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    io::write_exact(out, head.data(), head.size(), 0);
    io::write_exact(out, pixels.data(), pixels.size(), head.size());
    return head.size() + pixels.size();
}

// Binary portable pixmap (P6), 8-bit per channel.
inline std::uint64_t write_ppm(std::uint32_t width, std::uint32_t height,
                               std::span<const Rgb> pixels, std::ostream& out) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ConfigError("ppm pixel count does not match dimensions");
    const std::string head =
        "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    io::write_exact(out, head.data(), head.size(), 0);
    io::write_exact(out, pixels.data(), pixels.size() * 3, head.size());
    return head.size() + pixels.size() * 3;
}

}  // namespace utb
