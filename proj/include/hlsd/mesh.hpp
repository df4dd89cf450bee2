#ifndef HLSD_MESH_HPP
#define HLSD_MESH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hlsd/error.hpp"

namespace hlsd {

using Index = Eigen::Index;
using Point = Eigen::Vector2d;

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rectangle {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

/// A coarse face (an edge in 2D). The normal points outward from `left`.
struct Face {
    std::array<Index, 2> vertices{};
    Index left = -1;
    std::optional<Index> right;
    Point normal = Point::Zero();
    double length = 0.0;

    bool on_boundary() const { return !right.has_value(); }
};

/// Simplicial coarse partition T_H. Elements are counter-clockwise; local edge k joins
/// local vertices k and k+1 (mod 3).
class CoarseMesh {
public:
    static constexpr double default_shape_bound = 10.0;

    CoarseMesh(std::vector<Point> vertices, std::vector<std::array<Index, 3>> elements,
               double shape_bound = default_shape_bound)
        : vertices_(std::move(vertices)), elements_(std::move(elements))
    {
        orient_and_check(shape_bound);
        build_faces();
        build_vertex_adjacency();
        check_connected();
    }

    Index vertex_count() const { return Index(vertices_.size()); }
    Index element_count() const { return Index(elements_.size()); }
    Index face_count() const { return Index(faces_.size()); }

    const Point& vertex(Index v) const { return vertices_[std::size_t(v)]; }
    const std::vector<Point>& vertices() const { return vertices_; }
    const std::array<Index, 3>& element(Index e) const { return elements_[std::size_t(e)]; }
    const std::vector<std::array<Index, 3>>& elements() const { return elements_; }
    const Face& face(Index f) const { return faces_[std::size_t(f)]; }
    const std::vector<Face>& faces() const { return faces_; }

    /// Coarse face of local edge k of element e.
    Index element_face(Index e, int k) const { return element_faces_[std::size_t(e)][std::size_t(k)]; }

    /// +1 when the face normal points outward from the element, -1 otherwise.
    double face_sign(Index e, Index f) const
    {
        const Face& face = faces_[std::size_t(f)];
        if (face.left == e)
            return 1.0;
        if (face.right && *face.right == e)
            return -1.0;
        throw Error(ErrorKind::invalid_argument, "face " + std::to_string(f) + " is not a face of element " +
                                                     std::to_string(e));
    }

    /// Local edge index of face f within element e.
    int local_edge(Index e, Index f) const
    {
        for (int k = 0; k < 3; ++k)
            if (element_face(e, k) == f)
                return k;
        throw Error(ErrorKind::invalid_argument, "face " + std::to_string(f) + " is not a face of element " +
                                                     std::to_string(e));
    }

    double area(Index e) const
    {
        const auto& t = element(e);
        return 0.5 * cross(vertex(t[1]) - vertex(t[0]), vertex(t[2]) - vertex(t[0]));
    }

    double perimeter(Index e) const
    {
        double p = 0.0;
        for (int k = 0; k < 3; ++k)
            p += face(element_face(e, k)).length;
        return p;
    }

    double diameter(Index e) const
    {
        double d = 0.0;
        for (int k = 0; k < 3; ++k)
            d = std::max(d, face(element_face(e, k)).length);
        return d;
    }

    /// H: the largest element diameter.
    double mesh_size() const
    {
        double h = 0.0;
        for (Index e = 0; e < element_count(); ++e)
            h = std::max(h, diameter(e));
        return h;
    }

    Point centroid(Index e) const
    {
        const auto& t = element(e);
        return (vertex(t[0]) + vertex(t[1]) + vertex(t[2])) / 3.0;
    }

    /// Elements sharing vertex v.
    const std::vector<Index>& vertex_elements(Index v) const { return vertex_elements_[std::size_t(v)]; }

    bool touches_boundary(Index e) const
    {
        for (int k = 0; k < 3; ++k)
            if (face(element_face(e, k)).on_boundary())
                return true;
        return false;
    }

    /// Circumradius / inradius.
    static double shape_ratio(const Point& a, const Point& b, const Point& c)
    {
        const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
        const double area = 0.5 * std::abs(cross(b - a, c - a));
        const double s = 0.5 * (la + lb + lc);
        const double circum = la * lb * lc / (4.0 * area);
        const double in = area / s;
        return circum / in;
    }

private:
    static double cross(const Point& u, const Point& v) { return u.x() * v.y() - u.y() * v.x(); }

    void orient_and_check(double shape_bound)
    {
        require(!elements_.empty(), ErrorKind::invalid_argument, "mesh has no elements");
        for (std::size_t e = 0; e < elements_.size(); ++e) {
            auto& t = elements_[e];
            for (Index v : t)
                require(v >= 0 && v < Index(vertices_.size()), ErrorKind::invalid_argument,
                        "element " + std::to_string(e) + " references unknown vertex " + std::to_string(v));
            const double twice_area = cross(vertex(t[1]) - vertex(t[0]), vertex(t[2]) - vertex(t[0]));
            const double scale = std::max({(vertex(t[1]) - vertex(t[0])).squaredNorm(),
                                           (vertex(t[2]) - vertex(t[0])).squaredNorm(), 1e-300});
            require(std::abs(twice_area) > 1e-12 * scale, ErrorKind::invalid_argument,
                    "element " + std::to_string(e) + " is degenerate");
            if (twice_area < 0)
                std::swap(t[1], t[2]);
            const double ratio = shape_ratio(vertex(t[0]), vertex(t[1]), vertex(t[2]));
            require(ratio <= shape_bound, ErrorKind::invalid_argument,
                    "element " + std::to_string(e) + " violates the shape-regularity bound (ratio " +
                        std::to_string(ratio) + ")");
        }
    }

    void build_faces()
    {
        std::map<std::pair<Index, Index>, Index> lookup;
        element_faces_.assign(elements_.size(), {-1, -1, -1});
        for (std::size_t e = 0; e < elements_.size(); ++e) {
            const auto& t = elements_[e];
            for (int k = 0; k < 3; ++k) {
                const Index a = t[std::size_t(k)], b = t[std::size_t((k + 1) % 3)];
                const auto key = std::minmax(a, b);
                auto it = lookup.find(key);
                if (it == lookup.end()) {
                    Face f;
                    f.vertices = {a, b};
                    f.left = Index(e);
                    const Point d = vertex(b) - vertex(a);
                    f.length = d.norm();
                    f.normal = Point(d.y(), -d.x()) / f.length;
                    lookup.emplace(key, Index(faces_.size()));
                    element_faces_[e][std::size_t(k)] = Index(faces_.size());
                    faces_.push_back(f);
                } else {
                    Face& f = faces_[std::size_t(it->second)];
                    require(!f.right.has_value(), ErrorKind::invalid_argument,
                            "face shared by more than two elements");
                    require(f.vertices[0] == b && f.vertices[1] == a, ErrorKind::invalid_argument,
                            "inconsistent element orientation across a shared face");
                    f.right = Index(e);
                    element_faces_[e][std::size_t(k)] = it->second;
                }
            }
        }
    }

    void build_vertex_adjacency()
    {
        vertex_elements_.assign(vertices_.size(), {});
        for (std::size_t e = 0; e < elements_.size(); ++e)
            for (Index v : elements_[e])
                vertex_elements_[std::size_t(v)].push_back(Index(e));
    }

    void check_connected() const
    {
        std::vector<char> seen(elements_.size(), 0);
        std::vector<Index> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            const Index e = stack.back();
            stack.pop_back();
            for (int k = 0; k < 3; ++k) {
                const Face& f = face(element_face(e, k));
                if (!f.right)
                    continue;
                const Index other = f.left == e ? *f.right : f.left;
                if (!seen[std::size_t(other)]) {
                    seen[std::size_t(other)] = 1;
                    ++count;
                    stack.push_back(other);
                }
            }
        }
        require(count == elements_.size(), ErrorKind::invalid_argument, "mesh is not face-connected");
    }

    std::vector<Point> vertices_;
    std::vector<std::array<Index, 3>> elements_;
    std::vector<Face> faces_;
    std::vector<std::array<Index, 3>> element_faces_;
    std::vector<std::vector<Index>> vertex_elements_;
};

/// nx by ny cells, each split along the (x0,y0)-(x1,y1) diagonal into two triangles.
inline CoarseMesh build_structured_mesh(Index nx, Index ny, const Rectangle& domain = {})
{
    require(nx >= 1 && ny >= 1, ErrorKind::invalid_argument, "structured mesh needs nx, ny >= 1");
    require(domain.width() > 0 && domain.height() > 0, ErrorKind::invalid_argument,
            "structured mesh needs positive side lengths");
    std::vector<Point> vertices;
    vertices.reserve(std::size_t((nx + 1) * (ny + 1)));
    for (Index j = 0; j <= ny; ++j)
        for (Index i = 0; i <= nx; ++i)
            vertices.emplace_back(domain.x0 + domain.width() * double(i) / double(nx),
                                  domain.y0 + domain.height() * double(j) / double(ny));
    auto id = [nx](Index i, Index j) { return j * (nx + 1) + i; };
    std::vector<std::array<Index, 3>> elements;
    elements.reserve(std::size_t(2 * nx * ny));
    for (Index j = 0; j < ny; ++j)
        for (Index i = 0; i < nx; ++i) {
            elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            elements.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return CoarseMesh(std::move(vertices), std::move(elements));
}

/// Line-oriented mesh file:
///
///     # comments and blank lines are ignored
///     vertices <count>
///     <x> <y>            (count lines)
///     elements <count>
///     <a> <b> <c>        (count lines, zero-based vertex indices)
inline CoarseMesh parse_mesh(std::istream& in, double shape_bound = CoarseMesh::default_shape_bound)
{
    std::vector<std::string> tokens;
    std::vector<int> token_lines;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            tokens.push_back(tok);
            token_lines.push_back(line_no);
        }
    }
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> Error {
        const int at = pos < token_lines.size() ? token_lines[pos] : line_no;
        return Error(ErrorKind::parse, "mesh file line " + std::to_string(at) + ": " + msg);
    };
    auto next = [&]() -> const std::string& {
        if (pos >= tokens.size())
            throw fail("unexpected end of file");
        return tokens[pos++];
    };
    auto number = [&]() {
        const std::string& t = next();
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size())
                throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            --pos;
            throw fail("expected a number, got '" + t + "'");
        }
    };
    auto count = [&]() {
        const double v = number();
        if (v < 0 || v != std::floor(v)) {
            --pos;
            throw fail("expected a non-negative integer");
        }
        return Index(v);
    };
    if (next() != "vertices") {
        --pos;
        throw fail("expected 'vertices'");
    }
    const Index nv = count();
    std::vector<Point> vertices(std::size_t(nv), Point::Zero());
    for (auto& p : vertices) {
        p.x() = number();
        p.y() = number();
    }
    if (next() != "elements") {
        --pos;
        throw fail("expected 'elements'");
    }
    const Index ne = count();
    std::vector<std::array<Index, 3>> elements(static_cast<std::size_t>(ne));
    for (auto& t : elements)
        for (auto& v : t)
            v = count();
    if (pos != tokens.size())
        throw fail("trailing content");
    return CoarseMesh(std::move(vertices), std::move(elements), shape_bound);
}

inline CoarseMesh load_mesh(const std::string& path, double shape_bound = CoarseMesh::default_shape_bound)
{
    std::ifstream in(path);
    require(bool(in), ErrorKind::io, "cannot open mesh file " + path);
    return parse_mesh(in, shape_bound);
}

inline void write_mesh(std::ostream& out, const CoarseMesh& mesh)
{
    out.precision(17);
    out << "vertices " << mesh.vertex_count() << '\n';
    for (const auto& p : mesh.vertices())
        out << p.x() << ' ' << p.y() << '\n';
    out << "elements " << mesh.element_count() << '\n';
    for (const auto& t : mesh.elements())
        out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

/// Uniform refinement of the reference triangle in barycentric lattice coordinates (i, j),
/// i + j <= n, mapped affinely onto each coarse element.
struct RefinementPattern {
    int level = 0;
    int n = 1;
    std::vector<std::array<int, 2>> lattice;
    std::vector<std::array<int, 3>> cells;
    /// Nodes along local edge k in local direction (n + 1 each).
    std::array<std::vector<int>, 3> edge_nodes;

    int node_count() const { return int(lattice.size()); }
    int cell_count() const { return int(cells.size()); }

    static RefinementPattern uniform(int level)
    {
        RefinementPattern p;
        p.level = level;
        p.n = 1 << level;
        const int n = p.n;
        std::vector<int> index((std::size_t(n) + 1) * (std::size_t(n) + 1), -1);
        auto at = [&](int i, int j) -> int& { return index[std::size_t(j) * std::size_t(n + 1) + std::size_t(i)]; };
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i + j <= n; ++i) {
                at(i, j) = int(p.lattice.size());
                p.lattice.push_back({i, j});
            }
        for (int j = 0; j < n; ++j)
            for (int i = 0; i + j < n; ++i) {
                p.cells.push_back({at(i, j), at(i + 1, j), at(i, j + 1)});
                if (i + j < n - 1)
                    p.cells.push_back({at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
            }
        for (int t = 0; t <= n; ++t) {
            p.edge_nodes[0].push_back(at(t, 0));
            p.edge_nodes[1].push_back(at(n - t, t));
            p.edge_nodes[2].push_back(at(0, n - t));
        }
        return p;
    }
};

/// Fine face partition F_h plus the interior triangulation of every coarse element.
///
/// Global fine face index: coarse face f, sub-face k (counted from f.vertices[0]) -> f * s + k.
/// Element slot q = 3-local-edge * s + t, t counted along the element's local edge direction.
class FinePartition {
public:
    FinePartition(const CoarseMesh& mesh, int face_level, int interior_level)
        : face_level_(face_level), interior_level_(interior_level), pattern_(RefinementPattern::uniform(interior_level))
    {
        require(face_level >= 0, ErrorKind::invalid_argument, "face refinement level must be >= 0");
        require(interior_level >= face_level + 1, ErrorKind::invalid_argument,
                "interior level must exceed the face level by at least one");
        subfaces_ = Index(1) << face_level;
        fine_face_length_.resize(std::size_t(mesh.face_count() * subfaces_));
        for (Index f = 0; f < mesh.face_count(); ++f)
            for (Index k = 0; k < subfaces_; ++k)
                fine_face_length_[std::size_t(f * subfaces_ + k)] = mesh.face(f).length / double(subfaces_);
        h_ = mesh.mesh_size() / double(subfaces_);
        const Index slots = 3 * subfaces_;
        slot_faces_.resize(std::size_t(mesh.element_count() * slots));
        slot_signs_.resize(slot_faces_.size());
        for (Index e = 0; e < mesh.element_count(); ++e)
            for (int k = 0; k < 3; ++k) {
                const Index f = mesh.element_face(e, k);
                const bool left = mesh.face(f).left == e;
                for (Index t = 0; t < subfaces_; ++t) {
                    const Index q = e * slots + k * subfaces_ + t;
                    slot_faces_[std::size_t(q)] = f * subfaces_ + (left ? t : subfaces_ - 1 - t);
                    slot_signs_[std::size_t(q)] = left ? 1.0 : -1.0;
                }
            }
    }

    int face_level() const { return face_level_; }
    int interior_level() const { return interior_level_; }
    /// Fine sub-faces per coarse face.
    Index subfaces() const { return subfaces_; }
    Index slots_per_element() const { return 3 * subfaces_; }
    Index fine_face_count() const { return Index(fine_face_length_.size()); }
    double fine_face_length(Index a) const { return fine_face_length_[std::size_t(a)]; }
    Index fine_face(Index coarse_face, Index k) const { return coarse_face * subfaces_ + k; }
    Index coarse_face_of(Index fine) const { return fine / subfaces_; }
    /// Largest fine sub-face diameter.
    double h() const { return h_; }
    const RefinementPattern& pattern() const { return pattern_; }

    Index slot_face(Index e, Index q) const { return slot_faces_[std::size_t(e * slots_per_element() + q)]; }
    double slot_sign(Index e, Index q) const { return slot_signs_[std::size_t(e * slots_per_element() + q)]; }

    /// Fine boundary segments (pattern node pairs) making up slot q, in local edge direction.
    std::vector<std::array<int, 2>> slot_segments(Index q) const
    {
        const int k = int(q / subfaces_);
        const int t = int(q % subfaces_);
        const int r = pattern_.n / int(subfaces_);
        std::vector<std::array<int, 2>> segs;
        const auto& nodes = pattern_.edge_nodes[std::size_t(k)];
        for (int s = t * r; s < (t + 1) * r; ++s)
            segs.push_back({nodes[std::size_t(s)], nodes[std::size_t(s + 1)]});
        return segs;
    }

    Point node_position(const CoarseMesh& mesh, Index e, int node) const
    {
        const auto& t = mesh.element(e);
        const auto& ij = pattern_.lattice[std::size_t(node)];
        const double a = double(ij[0]) / pattern_.n, b = double(ij[1]) / pattern_.n;
        return mesh.vertex(t[0]) + a * (mesh.vertex(t[1]) - mesh.vertex(t[0])) +
               b * (mesh.vertex(t[2]) - mesh.vertex(t[0]));
    }

    Eigen::MatrixX2d node_positions(const CoarseMesh& mesh, Index e) const
    {
        Eigen::MatrixX2d x(pattern_.node_count(), 2);
        for (int i = 0; i < pattern_.node_count(); ++i)
            x.row(i) = node_position(mesh, e, i).transpose();
        return x;
    }

    Point cell_centroid(const CoarseMesh& mesh, Index e, int cell) const
    {
        const auto& c = pattern_.cells[std::size_t(cell)];
        return (node_position(mesh, e, c[0]) + node_position(mesh, e, c[1]) + node_position(mesh, e, c[2])) / 3.0;
    }

private:
    int face_level_;
    int interior_level_;
    RefinementPattern pattern_;
    Index subfaces_ = 1;
    double h_ = 0.0;
    std::vector<double> fine_face_length_;
    std::vector<Index> slot_faces_;
    std::vector<double> slot_signs_;
};

/// Splits every coarse face into 2^level sub-faces; interiors are refined `interior_extra` levels deeper.
inline FinePartition refine_faces(const CoarseMesh& mesh, int level, int interior_extra = 1)
{
    require(level >= 0, ErrorKind::invalid_argument, "face refinement level must be >= 0");
    require(interior_extra >= 1, ErrorKind::invalid_argument, "interior refinement must be at least one level finer");
    return FinePartition(mesh, level, level + interior_extra);
}

/// A seed for layer queries and patch problems.
struct Seed {
    enum class Kind { element, face };
    Kind kind = Kind::element;
    Index id = 0;

    static Seed element(Index e) { return {Kind::element, e}; }
    static Seed face(Index f) { return {Kind::face, f}; }
    bool operator==(const Seed&) const = default;
};

inline std::string to_string(const Seed& s)
{
    return (s.kind == Seed::Kind::element ? "K" : "F") + std::to_string(s.id);
}

/// T_j(seed), sorted by element index.
struct ElementSet {
    Seed seed;
    int layers = 0;
    std::vector<Index> elements;

    bool contains(Index e) const { return std::binary_search(elements.begin(), elements.end(), e); }
    std::size_t size() const { return elements.size(); }
};

/// T_0 = {}, T_1(K) = {K}, T_1(F) = elements incident to F, and T_{j+1} adds every element whose
/// closure meets the closure of T_j (vertex neighbours included).
inline ElementSet element_layers(const CoarseMesh& mesh, Seed seed, int j)
{
    require(j >= 0, ErrorKind::invalid_argument, "layer count must be >= 0");
    ElementSet set{seed, j, {}};
    if (seed.kind == Seed::Kind::element)
        require(seed.id >= 0 && seed.id < mesh.element_count(), ErrorKind::invalid_argument,
                "unknown seed element " + std::to_string(seed.id));
    else
        require(seed.id >= 0 && seed.id < mesh.face_count(), ErrorKind::invalid_argument,
                "unknown seed face " + std::to_string(seed.id));
    if (j == 0)
        return set;
    std::vector<char> in(std::size_t(mesh.element_count()), 0);
    if (seed.kind == Seed::Kind::element) {
        in[std::size_t(seed.id)] = 1;
    } else {
        const Face& f = mesh.face(seed.id);
        in[std::size_t(f.left)] = 1;
        if (f.right)
            in[std::size_t(*f.right)] = 1;
    }
    for (int layer = 1; layer < j; ++layer) {
        std::vector<char> next = in;
        for (Index e = 0; e < mesh.element_count(); ++e) {
            if (!in[std::size_t(e)])
                continue;
            for (Index v : mesh.element(e))
                for (Index other : mesh.vertex_elements(v))
                    next[std::size_t(other)] = 1;
        }
        if (next == in)
            break;
        in.swap(next);
    }
    for (Index e = 0; e < mesh.element_count(); ++e)
        if (in[std::size_t(e)])
            set.elements.push_back(e);
    return set;
}

/// Smallest j with T_j(seed) = T_H.
inline int saturation_layer(const CoarseMesh& mesh, Seed seed)
{
    for (int j = 1;; ++j)
        if (Index(element_layers(mesh, seed, j).size()) == mesh.element_count())
            return j;
}

/// Smallest j that saturates every element and face seed of the mesh.
inline int mesh_saturation_layer(const CoarseMesh& mesh)
{
    int worst = 1;
    for (Index e = 0; e < mesh.element_count(); ++e)
        worst = std::max(worst, saturation_layer(mesh, Seed::element(e)));
    for (Index f = 0; f < mesh.face_count(); ++f)
        worst = std::max(worst, saturation_layer(mesh, Seed::face(f)));
    return worst;
}

/// Coarse faces none of whose incident elements lie outside `set`: the faces on which a
/// patch-local multiplier may be non-zero.
inline std::vector<Index> interior_faces_of(const CoarseMesh& mesh, const ElementSet& set)
{
    std::vector<Index> faces;
    std::vector<char> marked(std::size_t(mesh.face_count()), 0);
    for (Index e : set.elements)
        for (int k = 0; k < 3; ++k) {
            const Index f = mesh.element_face(e, k);
            if (marked[std::size_t(f)])
                continue;
            const Face& face = mesh.face(f);
            const bool inside = set.contains(face.left) && (!face.right || set.contains(*face.right));
            if (inside) {
                marked[std::size_t(f)] = 1;
                faces.push_back(f);
            }
        }
    std::sort(faces.begin(), faces.end());
    return faces;
}

} // namespace hlsd

#endif
