#ifndef HLSD_PRESETS_HPP
#define HLSD_PRESETS_HPP

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hlsd/coeff.hpp"
#include "hlsd/error.hpp"

namespace hlsd {

/// Coefficient scenario on the domain. All presets are scalar and produce a raster of
/// `resolution` x `resolution` cells.
struct PresetSpec {
    std::string name = "smooth";
    double contrast = 1e2;
    /// channel width and centre line, as fractions of the domain height.
    double width = 1.0 / 16.0;
    double position = 0.5;
    /// channel value 1 / contrast instead of contrast.
    bool low = false;
    /// number of inclusions, or checkerboard tiles per side.
    int count = 4;
    Index resolution = 128;
    Rectangle domain;
};

namespace detail {

inline Raster blank_raster(const PresetSpec& s, double value)
{
    Raster r;
    r.nx = r.ny = s.resolution;
    r.domain = s.domain;
    r.values.assign(std::size_t(r.nx * r.ny), value);
    return r;
}

inline Point cell_center(const Raster& r, Index i, Index j)
{
    return {r.domain.x0 + (double(i) + 0.5) * r.domain.width() / double(r.nx),
            r.domain.y0 + (double(j) + 0.5) * r.domain.height() / double(r.ny)};
}

} // namespace detail

/// a = 1 + 0.5 sin(2 pi x) sin(2 pi y) on the unit square (scaled to the domain).
inline Raster smooth_preset(const PresetSpec& s)
{
    Raster r = detail::blank_raster(s, 1.0);
    for (Index j = 0; j < r.ny; ++j)
        for (Index i = 0; i < r.nx; ++i) {
            const Point x = detail::cell_center(r, i, j);
            const double u = (x.x() - r.domain.x0) / r.domain.width();
            const double v = (x.y() - r.domain.y0) / r.domain.height();
            r.values[std::size_t(j * r.nx + i)] =
                1.0 + 0.5 * std::sin(2 * std::numbers::pi * u) * std::sin(2 * std::numbers::pi * v);
        }
    return r;
}

/// count x count tiles alternating between 1 and contrast.
inline Raster checkerboard_preset(const PresetSpec& s)
{
    require(s.count >= 1, ErrorKind::invalid_argument, "checkerboard needs at least one tile per side");
    Raster r = detail::blank_raster(s, 1.0);
    for (Index j = 0; j < r.ny; ++j)
        for (Index i = 0; i < r.nx; ++i) {
            const Index ti = i * s.count / r.nx, tj = j * s.count / r.ny;
            r.values[std::size_t(j * r.nx + i)] = (ti + tj) % 2 ? s.contrast : 1.0;
        }
    return r;
}

/// Horizontal strip across the whole domain with value `contrast` (or 1 / contrast when `low`),
/// 1 elsewhere.
inline Raster channel_preset(const PresetSpec& s)
{
    Raster r = detail::blank_raster(s, 1.0);
    const double lo = s.position - 0.5 * s.width, hi = s.position + 0.5 * s.width;
    const double value = s.low ? 1.0 / s.contrast : s.contrast;
    for (Index j = 0; j < r.ny; ++j) {
        const double v = (double(j) + 0.5) / double(r.ny);
        if (v >= lo && v <= hi)
            for (Index i = 0; i < r.nx; ++i)
                r.values[std::size_t(j * r.nx + i)] = value;
    }
    return r;
}

/// `count` separated square inclusions of value `contrast` on a regular layout.
inline Raster inclusions_preset(const PresetSpec& s)
{
    require(s.count >= 0, ErrorKind::invalid_argument, "inclusion count must be >= 0");
    Raster r = detail::blank_raster(s, 1.0);
    if (s.count == 0)
        return r;
    const int per_row = int(std::ceil(std::sqrt(double(s.count))));
    const Index cell = r.nx / per_row;
    require(cell >= 4, ErrorKind::invalid_argument, "raster resolution too small for the requested inclusions");
    const Index side = std::max<Index>(1, cell / 3);
    for (int k = 0; k < s.count; ++k) {
        const Index ci = (k % per_row) * cell + cell / 2, cj = (k / per_row) * cell + cell / 2;
        for (Index j = cj - side / 2; j < cj - side / 2 + side; ++j)
            for (Index i = ci - side / 2; i < ci - side / 2 + side; ++i)
                r.values[std::size_t(j * r.nx + i)] = s.contrast;
    }
    return r;
}

inline Raster make_preset(const PresetSpec& s)
{
    require(s.resolution >= 1, ErrorKind::invalid_argument, "preset resolution must be positive");
    require(s.contrast > 0, ErrorKind::invalid_argument, "preset contrast must be positive");
    if (s.name == "smooth")
        return smooth_preset(s);
    if (s.name == "checkerboard")
        return checkerboard_preset(s);
    if (s.name == "channel")
        return channel_preset(s);
    if (s.name == "inclusions")
        return inclusions_preset(s);
    if (s.name == "constant")
        return detail::blank_raster(s, 1.0);
    throw Error(ErrorKind::invalid_argument, "unknown preset '" + s.name + "'");
}

inline std::vector<std::string> preset_names() { return {"constant", "smooth", "checkerboard", "channel", "inclusions"}; }

/// 4-connected components of cells whose value exceeds `threshold`.
inline int count_components(const Raster& r, double threshold)
{
    std::vector<int> label(r.values.size(), -1);
    int count = 0;
    std::vector<Index> stack;
    for (Index start = 0; start < Index(r.values.size()); ++start) {
        if (label[std::size_t(start)] >= 0 || !(r.values[std::size_t(start * r.stride())] > threshold))
            continue;
        stack.push_back(start);
        label[std::size_t(start)] = count;
        while (!stack.empty()) {
            const Index c = stack.back();
            stack.pop_back();
            const Index i = c % r.nx, j = c / r.nx;
            const Index nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
            for (const auto& n : nb) {
                if (n[0] < 0 || n[0] >= r.nx || n[1] < 0 || n[1] >= r.ny)
                    continue;
                const Index d = n[1] * r.nx + n[0];
                if (label[std::size_t(d)] < 0 && r.values[std::size_t(d * r.stride())] > threshold) {
                    label[std::size_t(d)] = count;
                    stack.push_back(d);
                }
            }
        }
        ++count;
    }
    return count;
}

inline PresetSpec preset_from_json(const nlohmann::json& j)
{
    PresetSpec s;
    s.name = j.value("name", s.name);
    s.contrast = j.value("contrast", s.contrast);
    s.width = j.value("width", s.width);
    s.position = j.value("position", s.position);
    s.low = j.value("low", s.low);
    s.count = j.value("count", s.count);
    s.resolution = j.value("resolution", s.resolution);
    return s;
}

inline nlohmann::json preset_to_json(const PresetSpec& s)
{
    return {{"name", s.name}, {"contrast", s.contrast}, {"width", s.width}, {"position", s.position},
            {"low", s.low}, {"count", s.count},
            {"resolution", s.resolution}};
}

} // namespace hlsd

#endif
