#ifndef HLSD_COEFF_HPP
#define HLSD_COEFF_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hlsd/error.hpp"
#include "hlsd/mesh.hpp"

namespace hlsd {

using Tensor = Eigen::Matrix2d;

/// Smallest and largest eigenvalue of a symmetric 2x2 tensor.
inline std::pair<double, double> tensor_eigen_bounds(const Tensor& a)
{
    const double mean = 0.5 * (a(0, 0) + a(1, 1));
    const double diff = 0.5 * (a(0, 0) - a(1, 1));
    const double r = std::hypot(diff, a(0, 1));
    return {mean - r, mean + r};
}

/// Cellwise-constant coefficient tensor on the interior triangulation of every coarse element.
class CoefficientField {
public:
    CoefficientField() = default;

    /// cells[e][c]: tensor of fine cell c in element e.
    explicit CoefficientField(std::vector<std::vector<Tensor>> cells) : cells_(std::move(cells))
    {
        a_min_ = std::numeric_limits<double>::infinity();
        a_max_ = 0.0;
        for (std::size_t e = 0; e < cells_.size(); ++e)
            for (std::size_t c = 0; c < cells_[e].size(); ++c) {
                const Tensor& a = cells_[e][c];
                require(std::abs(a(0, 1) - a(1, 0)) <= 1e-14 * a.norm(), ErrorKind::invalid_argument,
                        "coefficient tensor is not symmetric in element " + std::to_string(e));
                const auto [lo, hi] = tensor_eigen_bounds(a);
                require(lo > 0 && std::isfinite(hi), ErrorKind::invalid_argument,
                        "coefficient tensor is not positive definite in element " + std::to_string(e));
                a_min_ = std::min(a_min_, lo);
                a_max_ = std::max(a_max_, hi);
            }
    }

    /// Samples A at the centroid of every fine cell.
    static CoefficientField sample(const CoarseMesh& mesh, const FinePartition& part,
                                   const std::function<Tensor(const Point&)>& a)
    {
        std::vector<std::vector<Tensor>> cells(std::size_t(mesh.element_count()));
        for (Index e = 0; e < mesh.element_count(); ++e) {
            auto& list = cells[std::size_t(e)];
            list.reserve(std::size_t(part.pattern().cell_count()));
            for (int c = 0; c < part.pattern().cell_count(); ++c)
                list.push_back(a(part.cell_centroid(mesh, e, c)));
        }
        return CoefficientField(std::move(cells));
    }

    static CoefficientField sample_scalar(const CoarseMesh& mesh, const FinePartition& part,
                                          const std::function<double(const Point&)>& a)
    {
        return sample(mesh, part, [&](const Point& x) -> Tensor { return a(x) * Tensor::Identity(); });
    }

    Index element_count() const { return Index(cells_.size()); }
    const std::vector<Tensor>& element_cells(Index e) const { return cells_[std::size_t(e)]; }
    const Tensor& cell(Index e, int c) const { return cells_[std::size_t(e)][std::size_t(c)]; }
    double a_min() const { return a_min_; }
    double a_max() const { return a_max_; }

    CoefficientField scaled(double s) const
    {
        auto cells = cells_;
        for (auto& list : cells)
            for (auto& a : list)
                a *= s;
        return CoefficientField(std::move(cells));
    }

    /// Throws incomplete-field unless every fine cell of every element has a tensor.
    void check_covers(const CoarseMesh& mesh, const FinePartition& part) const
    {
        require(element_count() == mesh.element_count(), ErrorKind::incomplete_field,
                "coefficient field covers " + std::to_string(element_count()) + " of " +
                    std::to_string(mesh.element_count()) + " elements");
        for (Index e = 0; e < element_count(); ++e)
            require(Index(cells_[std::size_t(e)].size()) == part.pattern().cell_count(), ErrorKind::incomplete_field,
                    "coefficient field does not cover every fine cell of element " + std::to_string(e));
    }

private:
    std::vector<std::vector<Tensor>> cells_;
    double a_min_ = 0.0;
    double a_max_ = 0.0;
};

enum class WeightChoice { one, amin, a_minus, a_plus, amax, custom };

inline WeightChoice parse_weight_choice(const std::string& name)
{
    if (name == "one")
        return WeightChoice::one;
    if (name == "amin")
        return WeightChoice::amin;
    if (name == "a_minus")
        return WeightChoice::a_minus;
    if (name == "a_plus")
        return WeightChoice::a_plus;
    if (name == "amax")
        return WeightChoice::amax;
    if (name == "custom")
        return WeightChoice::custom;
    throw Error(ErrorKind::invalid_argument, "unknown weight choice '" + name + "'");
}

inline const char* to_string(WeightChoice c)
{
    switch (c) {
    case WeightChoice::one: return "one";
    case WeightChoice::amin: return "amin";
    case WeightChoice::a_minus: return "a_minus";
    case WeightChoice::a_plus: return "a_plus";
    case WeightChoice::amax: return "amax";
    case WeightChoice::custom: return "custom";
    }
    return "?";
}

/// Cellwise weight rho > 0.
struct WeightField {
    WeightChoice choice = WeightChoice::one;
    std::vector<std::vector<double>> cells;
    double rho_min = 1.0;
    double rho_max = 1.0;

    double cell(Index e, int c) const { return cells[std::size_t(e)][std::size_t(c)]; }
};

/// Builds rho from the coefficient field. `custom` uses the given raster (same layout as the field).
inline WeightField make_weight(WeightChoice choice, const CoefficientField& field,
                               const std::vector<std::vector<double>>* custom = nullptr)
{
    WeightField w;
    w.choice = choice;
    w.cells.resize(std::size_t(field.element_count()));
    for (Index e = 0; e < field.element_count(); ++e) {
        const auto& cells = field.element_cells(e);
        auto& out = w.cells[std::size_t(e)];
        out.resize(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto [lo, hi] = tensor_eigen_bounds(cells[c]);
            switch (choice) {
            case WeightChoice::one: out[c] = 1.0; break;
            case WeightChoice::amin: out[c] = field.a_min(); break;
            case WeightChoice::a_minus: out[c] = lo; break;
            case WeightChoice::a_plus: out[c] = hi; break;
            case WeightChoice::amax: out[c] = field.a_max(); break;
            case WeightChoice::custom: {
                require(custom != nullptr, ErrorKind::invalid_argument, "custom weight needs a raster");
                require(custom->size() == std::size_t(field.element_count()) &&
                            (*custom)[std::size_t(e)].size() == cells.size(),
                        ErrorKind::incomplete_field, "custom weight raster does not match the field layout");
                out[c] = (*custom)[std::size_t(e)][c];
                require(out[c] > 0 && std::isfinite(out[c]), ErrorKind::invalid_argument,
                        "custom weight must be positive");
                break;
            }
            }
        }
    }
    w.rho_min = std::numeric_limits<double>::infinity();
    w.rho_max = 0.0;
    for (const auto& list : w.cells)
        for (double r : list) {
            w.rho_min = std::min(w.rho_min, r);
            w.rho_max = std::max(w.rho_max, r);
        }
    return w;
}

/// Per-element contrast kappa^tau = a_max^tau / a_min^tau and beta_{H/h} = 1 + log(H/h).
struct ContrastStats {
    std::vector<double> a_min, a_max, kappa;
    double global_kappa = 1.0;
    double beta = 1.0;
};

inline ContrastStats local_bounds(const CoefficientField& field, const CoarseMesh& mesh, const FinePartition& part)
{
    field.check_covers(mesh, part);
    ContrastStats s;
    const std::size_t n = std::size_t(mesh.element_count());
    s.a_min.assign(n, std::numeric_limits<double>::infinity());
    s.a_max.assign(n, 0.0);
    s.kappa.assign(n, 1.0);
    for (std::size_t e = 0; e < n; ++e) {
        for (const Tensor& a : field.element_cells(Index(e))) {
            const auto [lo, hi] = tensor_eigen_bounds(a);
            s.a_min[e] = std::min(s.a_min[e], lo);
            s.a_max[e] = std::max(s.a_max[e], hi);
        }
        s.kappa[e] = s.a_max[e] / s.a_min[e];
        s.global_kappa = std::max(s.global_kappa, s.kappa[e]);
    }
    s.beta = 1.0 + std::log(mesh.mesh_size() / part.h());
    return s;
}

/// Rectangular raster of scalar (1 value) or symmetric tensor (a11 a12 a22) cells, row-major
/// with row 0 at the bottom of the domain.
struct Raster {
    Index nx = 1, ny = 1;
    bool tensor = false;
    Rectangle domain;
    std::vector<double> values;

    int stride() const { return tensor ? 3 : 1; }

    Index cell_at(const Point& x) const
    {
        auto clamp = [](double t, Index n) {
            return std::clamp(Index(std::floor(t * double(n))), Index(0), n - 1);
        };
        const Index i = clamp((x.x() - domain.x0) / domain.width(), nx);
        const Index j = clamp((x.y() - domain.y0) / domain.height(), ny);
        return j * nx + i;
    }

    Tensor at(const Point& x) const
    {
        const std::size_t c = std::size_t(cell_at(x) * stride());
        if (!tensor)
            return values[c] * Tensor::Identity();
        Tensor a;
        a << values[c], values[c + 1], values[c + 1], values[c + 2];
        return a;
    }

    void validate() const
    {
        require(nx >= 1 && ny >= 1, ErrorKind::invalid_argument, "raster dimensions must be positive");
        require(Index(values.size()) == nx * ny * stride(), ErrorKind::invalid_argument,
                "raster has " + std::to_string(values.size()) + " values, expected " +
                    std::to_string(nx * ny * stride()));
    }

    CoefficientField to_field(const CoarseMesh& mesh, const FinePartition& part) const
    {
        validate();
        return CoefficientField::sample(mesh, part, [this](const Point& x) { return at(x); });
    }
};

/// Text raster: header `nx ny scalar|tensor [x0 y0 x1 y1]`, then row-major cell values.
inline Raster parse_raster(std::istream& in)
{
    Raster r;
    std::string kind;
    require(bool(in >> r.nx >> r.ny >> kind), ErrorKind::parse, "raster header must be: nx ny scalar|tensor");
    require(kind == "scalar" || kind == "tensor", ErrorKind::parse, "raster kind must be scalar or tensor");
    r.tensor = kind == "tensor";
    std::vector<double> rest;
    double v = 0;
    while (in >> v)
        rest.push_back(v);
    require(in.eof(), ErrorKind::parse, "raster contains a non-numeric token");
    const std::size_t expected = std::size_t(r.nx * r.ny * r.stride());
    if (rest.size() == expected + 4) {
        r.domain = {rest[0], rest[1], rest[2], rest[3]};
        rest.erase(rest.begin(), rest.begin() + 4);
    }
    r.values = std::move(rest);
    r.validate();
    return r;
}

/// JSON raster: {"nx":..,"ny":..,"tensor":bool,"domain":[x0,y0,x1,y1],"values":[...]}.
inline Raster raster_from_json(const nlohmann::json& j)
{
    Raster r;
    r.nx = j.at("nx").get<Index>();
    r.ny = j.at("ny").get<Index>();
    r.tensor = j.value("tensor", false);
    if (j.contains("domain")) {
        const auto d = j.at("domain").get<std::vector<double>>();
        require(d.size() == 4, ErrorKind::parse, "raster domain needs four numbers");
        r.domain = {d[0], d[1], d[2], d[3]};
    }
    r.values = j.at("values").get<std::vector<double>>();
    r.validate();
    return r;
}

inline nlohmann::json raster_to_json(const Raster& r)
{
    return {{"nx", r.nx},
            {"ny", r.ny},
            {"tensor", r.tensor},
            {"domain", {r.domain.x0, r.domain.y0, r.domain.x1, r.domain.y1}},
            {"values", r.values}};
}

inline void write_raster(std::ostream& out, const Raster& r)
{
    out.precision(17);
    out << r.nx << ' ' << r.ny << ' ' << (r.tensor ? "tensor" : "scalar") << '\n';
    out << r.domain.x0 << ' ' << r.domain.y0 << ' ' << r.domain.x1 << ' ' << r.domain.y1 << '\n';
    for (Index j = 0; j < r.ny; ++j) {
        for (Index i = 0; i < r.nx * r.stride(); ++i)
            out << (i ? " " : "") << r.values[std::size_t(j * r.nx * r.stride() + i)];
        out << '\n';
    }
}

inline Raster load_raster(const std::string& path)
{
    std::ifstream in(path);
    require(bool(in), ErrorKind::io, "cannot open raster " + path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            return raster_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, std::string("raster json: ") + e.what());
        }
    }
    return parse_raster(in);
}

} // namespace hlsd

#endif
