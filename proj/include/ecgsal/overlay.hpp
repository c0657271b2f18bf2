#pragma once

// Saliency overlays as CSV tables and SVG plots.

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace ecgsal::overlay {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Rgb&) const = default;
};

inline constexpr int kRampVersion = 1;

/// Piecewise-linear violet -> blue -> green -> orange -> yellow, evenly spaced.
inline constexpr std::array<Rgb, 5> kRampStops{{
    {128, 0, 255},
    {0, 64, 255},
    {0, 200, 80},
    {255, 140, 0},
    {255, 255, 0},
}};

/// Colour for v in [0, 1]; values outside are clamped.
Rgb ramp_color(double v);
std::string hex(Rgb c);

/// "t,x,overlay" rows.
std::string overlay_csv(std::span<const double> x, std::span<const double> overlay);

/// The signal as a dotted polyline: one circle per sample, in sample order,
/// filled with the ramp colour of its overlay value.
std::string overlay_svg(std::span<const double> x, std::span<const double> overlay, const std::string& title);

}  // namespace ecgsal::overlay
