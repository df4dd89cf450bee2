#ifndef HLSD_ORACLES_HPP
#define HLSD_ORACLES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hlsd/error.hpp"
#include "hlsd/pipeline.hpp"

namespace hlsd {

struct HybridSolution {
    BrokenFunction u;
    TraceVector lambda;
};

/// Monolithic solve of the hybrid saddle system over broken P1 x Lambda_h:
///   (A grad u, grad v) - (lambda, v)_{dT_H} = (rho g, v),   -(mu, u)_{dT_H} = 0.
inline HybridSolution exact_hybrid_solve(const Problem& p, const BrokenFunction& g)
{
    const FinePartition& part = p.part();
    const Index ne = p.mesh().element_count();
    const Index nn = part.pattern().node_count();
    const Index nu = ne * nn;
    const Index n = nu + part.fine_face_count();
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (Index e = 0; e < ne; ++e) {
        const ElementCache& c = p.cache(e);
        for (Index i = 0; i < nn; ++i)
            for (Index j = 0; j < nn; ++j)
                if (c.stiffness()(i, j) != 0.0)
                    trip.emplace_back(e * nn + i, e * nn + j, c.stiffness()(i, j));
        for (Index q = 0; q < part.slots_per_element(); ++q) {
            const Index a = nu + part.slot_face(e, q);
            const double sg = part.slot_sign(e, q);
            for (Index i = 0; i < nn; ++i) {
                const double v = c.boundary_pairing(i, q);
                if (v != 0.0) {
                    trip.emplace_back(e * nn + i, a, -sg * v);
                    trip.emplace_back(a, e * nn + i, -sg * v);
                }
            }
        }
        rhs.segment(e * nn, nn) = c.mass * g[std::size_t(e)];
    }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(m);
    require(lu.info() == Eigen::Success, ErrorKind::singular, "monolithic hybrid system is singular");
    const Eigen::VectorXd x = lu.solve(rhs);
    require(lu.info() == Eigen::Success, ErrorKind::singular, "monolithic hybrid solve failed");
    HybridSolution out;
    out.u.resize(std::size_t(ne));
    for (Index e = 0; e < ne; ++e)
        out.u[std::size_t(e)] = x.segment(e * nn, nn);
    out.lambda = TraceVector(x.tail(part.fine_face_count()));
    return out;
}

/// Global node numbering of the union fine mesh (element nodes merged by position).
struct UnionMesh {
    Index node_count = 0;
    /// node_of[e][i]: global node of local node i of element e.
    std::vector<std::vector<Index>> node_of;
    std::vector<char> dirichlet;
};

inline UnionMesh union_mesh(const Problem& p)
{
    const FinePartition& part = p.part();
    const double tol = 1e-9 * p.mesh().mesh_size() / double(part.pattern().n);
    std::map<std::pair<long long, long long>, Index> index;
    UnionMesh u;
    u.node_of.resize(std::size_t(p.mesh().element_count()));
    for (Index e = 0; e < p.mesh().element_count(); ++e) {
        const ElementCache& c = p.cache(e);
        auto& map = u.node_of[std::size_t(e)];
        map.resize(std::size_t(c.node_count()));
        for (Index i = 0; i < c.node_count(); ++i) {
            const std::pair<long long, long long> key{std::llround(c.nodes(i, 0) / tol),
                                                      std::llround(c.nodes(i, 1) / tol)};
            auto [it, inserted] = index.emplace(key, u.node_count);
            if (inserted)
                ++u.node_count;
            map[std::size_t(i)] = it->second;
        }
    }
    u.dirichlet.assign(std::size_t(u.node_count), 0);
    for (Index f = 0; f < p.mesh().face_count(); ++f) {
        const Face& face = p.mesh().face(f);
        if (!face.on_boundary())
            continue;
        const int k = p.mesh().local_edge(face.left, f);
        for (int node : part.pattern().edge_nodes[std::size_t(k)])
            u.dirichlet[std::size_t(u.node_of[std::size_t(face.left)][std::size_t(node)])] = 1;
    }
    return u;
}

/// Conforming P1 solve with homogeneous Dirichlet data on the union of all interior triangulations.
inline BrokenFunction conforming_fine_solve(const Problem& p, const BrokenFunction& g)
{
    const UnionMesh um = union_mesh(p);
    std::vector<Index> dof(std::size_t(um.node_count), -1);
    Index n = 0;
    for (Index i = 0; i < um.node_count; ++i)
        if (!um.dirichlet[std::size_t(i)])
            dof[std::size_t(i)] = n++;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (Index e = 0; e < p.mesh().element_count(); ++e) {
        const ElementCache& c = p.cache(e);
        const auto& map = um.node_of[std::size_t(e)];
        const Eigen::VectorXd load = c.mass * g[std::size_t(e)];
        for (Index i = 0; i < c.node_count(); ++i) {
            const Index gi = dof[std::size_t(map[std::size_t(i)])];
            if (gi < 0)
                continue;
            rhs(gi) += load(i);
            for (Index j = 0; j < c.node_count(); ++j) {
                const Index gj = dof[std::size_t(map[std::size_t(j)])];
                if (gj >= 0 && c.stiffness()(i, j) != 0.0)
                    trip.emplace_back(gi, gj, c.stiffness()(i, j));
            }
        }
    }
    Eigen::SparseMatrix<double> k(n, n);
    k.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(k);
    require(solver.info() == Eigen::Success, ErrorKind::singular, "conforming fine system is singular");
    const Eigen::VectorXd x = solver.solve(rhs);
    BrokenFunction out(std::size_t(p.mesh().element_count()));
    for (Index e = 0; e < p.mesh().element_count(); ++e) {
        const auto& map = um.node_of[std::size_t(e)];
        Eigen::VectorXd v(Index(map.size()));
        for (std::size_t i = 0; i < map.size(); ++i) {
            const Index d = dof[std::size_t(map[i])];
            v(Index(i)) = d >= 0 ? x(d) : 0.0;
        }
        out[std::size_t(e)] = std::move(v);
    }
    return out;
}

/// Finds the element and fine cell of a problem containing a point.
class CellLocator {
public:
    explicit CellLocator(const Problem& p) : p_(&p)
    {
        const RefinementPattern& pat = p.part().pattern();
        for (const auto& c : pat.cells) {
            const auto& a = pat.lattice[std::size_t(c[0])];
            const auto& b = pat.lattice[std::size_t(c[1])];
            // up cells start at (i, j) -> (i + 1, j); down cells at (i + 1, j) -> (i + 1, j + 1).
            const bool up = b[1] == a[1];
            const int i = up ? a[0] : a[0] - 1;
            lookup_[{i, a[1], up ? 0 : 1}] = int(&c - pat.cells.data());
        }
        const CoarseMesh& mesh = p.mesh();
        lo_ = hi_ = mesh.vertex(0);
        for (Index v = 0; v < mesh.vertex_count(); ++v) {
            lo_ = lo_.cwiseMin(mesh.vertex(v));
            hi_ = hi_.cwiseMax(mesh.vertex(v));
        }
        bins_ = std::max<Index>(1, Index(std::sqrt(double(mesh.element_count()))));
        buckets_.resize(std::size_t(bins_ * bins_));
        for (Index e = 0; e < mesh.element_count(); ++e) {
            Point emin = mesh.vertex(mesh.element(e)[0]), emax = emin;
            for (Index v : mesh.element(e)) {
                emin = emin.cwiseMin(mesh.vertex(v));
                emax = emax.cwiseMax(mesh.vertex(v));
            }
            const auto [i0, j0] = bin(emin);
            const auto [i1, j1] = bin(emax);
            for (Index j = j0; j <= j1; ++j)
                for (Index i = i0; i <= i1; ++i)
                    buckets_[std::size_t(j * bins_ + i)].push_back(e);
        }
    }

    /// (element, cell) or (-1, -1) when outside.
    std::pair<Index, int> locate(const Point& x) const
    {
        const CoarseMesh& mesh = p_->mesh();
        const auto [bi, bj] = bin(x);
        for (Index e : buckets_[std::size_t(bj * bins_ + bi)]) {
            const auto& t = mesh.element(e);
            Eigen::Matrix2d jac;
            jac.col(0) = mesh.vertex(t[1]) - mesh.vertex(t[0]);
            jac.col(1) = mesh.vertex(t[2]) - mesh.vertex(t[0]);
            const Eigen::Vector2d ab = jac.lu().solve(x - mesh.vertex(t[0]));
            const double eps = 1e-12;
            if (ab(0) < -eps || ab(1) < -eps || ab(0) + ab(1) > 1 + eps)
                continue;
            const int n = p_->part().pattern().n;
            const double xs = ab(0) * n, ys = ab(1) * n;
            int i = std::clamp(int(std::floor(xs)), 0, n - 1);
            int j = std::clamp(int(std::floor(ys)), 0, n - 1 - i);
            const bool up = (xs - i) + (ys - j) <= 1.0 || i + j == n - 1;
            auto it = lookup_.find({i, j, up ? 0 : 1});
            if (it != lookup_.end())
                return {e, it->second};
        }
        return {-1, -1};
    }

private:
    std::pair<Index, Index> bin(const Point& x) const
    {
        auto one = [&](double v, double lo, double hi) {
            const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
            return std::clamp(Index(std::floor(t * double(bins_))), Index(0), bins_ - 1);
        };
        return {one(x.x(), lo_.x(), hi_.x()), one(x.y(), lo_.y(), hi_.y())};
    }

    const Problem* p_;
    std::map<std::array<int, 3>, int> lookup_;
    Point lo_, hi_;
    Index bins_ = 1;
    std::vector<std::vector<Index>> buckets_;
};

/// |u_ref - u|_{H1_A} with u_ref on `ref` and u on a coarser nested discretization `coarse`.
/// Uses the coefficient of `ref`.
inline double energy_error_nested(const Problem& ref, const BrokenFunction& u_ref, const Problem& coarse,
                                  const BrokenFunction& u)
{
    const CellLocator locator(coarse);
    const RefinementPattern& pat = ref.part().pattern();
    const RefinementPattern& cpat = coarse.part().pattern();
    double sum = 0.0;
    for (Index e = 0; e < ref.mesh().element_count(); ++e) {
        const ElementCache& c = ref.cache(e);
        for (int cell = 0; cell < pat.cell_count(); ++cell) {
            const auto& nodes = pat.cells[std::size_t(cell)];
            const Eigen::Vector3d loc(u_ref[std::size_t(e)](nodes[0]), u_ref[std::size_t(e)](nodes[1]),
                                      u_ref[std::size_t(e)](nodes[2]));
            const Eigen::Vector2d gr = c.cell_gradients[std::size_t(cell)] * loc;
            const Point x = ref.part().cell_centroid(ref.mesh(), e, cell);
            const auto [ce, cc] = locator.locate(x);
            require(ce >= 0, ErrorKind::invalid_argument, "reference mesh is not covered by the coarse mesh");
            const auto& cn = cpat.cells[std::size_t(cc)];
            const Eigen::Vector3d cloc(u[std::size_t(ce)](cn[0]), u[std::size_t(ce)](cn[1]), u[std::size_t(ce)](cn[2]));
            const Eigen::Vector2d gc = coarse.cache(ce).cell_gradients[std::size_t(cc)] * cloc;
            const Eigen::Vector2d d = gr - gc;
            sum += c.cell_areas[std::size_t(cell)] * d.dot(c.tensors[std::size_t(cell)] * d);
        }
    }
    return std::sqrt(std::max(0.0, sum));
}

} // namespace hlsd

#endif
