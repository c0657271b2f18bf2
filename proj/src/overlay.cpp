#include "ecgsal/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ecgsal/error.hpp"

namespace ecgsal::overlay {
namespace {

constexpr double kWidth = 1440.0;
constexpr double kHeight = 360.0;
constexpr double kMargin = 20.0;

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

Rgb ramp_color(double v) {
    if (!(v > 0.0)) return kRampStops.front();
    if (v >= 1.0) return kRampStops.back();
    const double pos = v * static_cast<double>(kRampStops.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    const Rgb a = kRampStops[i];
    const Rgb b = kRampStops[i + 1];
    auto mix = [f](std::uint8_t x, std::uint8_t y) {
        return static_cast<std::uint8_t>(std::lround(x + f * (static_cast<double>(y) - x)));
    };
    return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

std::string hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

std::string overlay_csv(std::span<const double> x, std::span<const double> overlay) {
    if (x.size() != overlay.size()) throw ShapeError("overlay_csv: signal and overlay lengths differ");
    std::string out = "t,x,overlay\n";
    char buf[96];
    for (std::size_t t = 0; t < x.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t, x[t], overlay[t]);
        out += buf;
    }
    return out;
}

std::string overlay_svg(std::span<const double> x, std::span<const double> overlay, const std::string& title) {
    if (x.size() != overlay.size()) throw ShapeError("overlay_svg: signal and overlay lengths differ");
    double lo = 0.0;
    double hi = 1.0;
    if (!x.empty()) {
        const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
        lo = *mn;
        hi = *mx > *mn ? *mx : *mn + 1.0;
    }
    const double sx = (kWidth - 2 * kMargin) / static_cast<double>(std::max<std::size_t>(1, x.size() - 1));
    const double sy = (kHeight - 2 * kMargin) / (hi - lo);
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  kWidth, kHeight, kWidth, kHeight);
    out += buf;
    out += "<title>" + escape(title) + "</title>\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<g stroke=\"none\">\n";
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double px = kMargin + sx * static_cast<double>(t);
        const double py = kHeight - kMargin - sy * (x[t] - lo);
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\" fill=\"%s\"/>\n", px, py,
                      hex(ramp_color(overlay[t])).c_str());
        out += buf;
    }
    out += "</g>\n</svg>\n";
    return out;
}

}  // namespace ecgsal::overlay
