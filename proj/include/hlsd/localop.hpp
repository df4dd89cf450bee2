#ifndef HLSD_LOCALOP_HPP
#define HLSD_LOCALOP_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlsd/coeff.hpp"
#include "hlsd/error.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/parallel.hpp"
#include "hlsd/traces.hpp"

namespace hlsd {

/// P1 nodal values on the interior triangulation of one element.
struct LocalFunction {
    Eigen::VectorXd values;
    bool zero_average = false;
};

/// Solution operator data for one fixed stiffness on an element.
struct LocalSolver {
    Eigen::MatrixXd stiffness;
    /// LU of D S D, S = [K m; m^T 0], with the symmetric equilibration D stored in `scale`.
    Eigen::PartialPivLU<Eigen::MatrixXd> saddle;
    Eigen::VectorXd scale;

    /// Top block of S^{-1} [rhs; 0], column by column.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const
    {
        const Index n = rhs.rows();
        Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n + 1, rhs.cols());
        full.topRows(n) = scale.head(n).asDiagonal() * rhs;
        return scale.head(n).asDiagonal() * saddle.solve(full).topRows(n);
    }
    /// Columns: T applied to each element-side unit flux (nodes x slots).
    Eigen::MatrixXd flux_response;
    /// B(a, b) = (mu_a, T mu_b)_{d tau}.
    Eigen::MatrixXd flux_energy;
};

/// Per-element fine FEM data: stiffness, rho-mass, boundary pairing and cached local solves.
struct ElementCache {
    Index element = 0;
    Eigen::MatrixX2d nodes;
    Eigen::MatrixXd mass;
    /// m(i) = integral of rho * phi_i.
    Eigen::VectorXd mean_constraint;
    /// G(i, q) = integral of phi_i over slot q.
    Eigen::MatrixXd boundary_pairing;
    LocalSolver op;
    /// Same rho constraint with A = I.
    std::optional<LocalSolver> identity;
    std::vector<Tensor> tensors;
    std::vector<double> weights;
    std::vector<double> cell_areas;
    std::vector<Eigen::Matrix<double, 2, 3>> cell_gradients;
    /// Nodes not on the element boundary.
    std::vector<int> interior_nodes;
    double weighted_area = 0.0;

    Index node_count() const { return mass.rows(); }
    Index slot_count() const { return boundary_pairing.cols(); }
    const Eigen::MatrixXd& stiffness() const { return op.stiffness; }
    const Eigen::MatrixXd& flux_energy() const { return op.flux_energy; }
};

namespace detail {

/// Gradients of the three barycentric functions (columns) and the cell area.
inline double p1_gradients(const Point& p0, const Point& p1, const Point& p2, Eigen::Matrix<double, 2, 3>& grad)
{
    const double two_area = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
    grad(0, 0) = p1.y() - p2.y();
    grad(1, 0) = p2.x() - p1.x();
    grad(0, 1) = p2.y() - p0.y();
    grad(1, 1) = p0.x() - p2.x();
    grad(0, 2) = p0.y() - p1.y();
    grad(1, 2) = p1.x() - p0.x();
    grad /= two_area;
    return 0.5 * two_area;
}

inline LocalSolver make_solver(Eigen::MatrixXd stiffness, const Eigen::VectorXd& mean, const Eigen::MatrixXd& g,
                               Index element)
{
    const Index n = stiffness.rows();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n + 1, n + 1);
    s.topLeftCorner(n, n) = stiffness;
    s.col(n).head(n) = mean;
    s.row(n).head(n) = mean.transpose();
    LocalSolver out;
    // Unit diagonal on the stiffness block and a unit-norm constraint column.
    out.scale.resize(n + 1);
    for (Index i = 0; i < n; ++i)
        out.scale(i) = stiffness(i, i) > 0 ? 1.0 / std::sqrt(stiffness(i, i)) : 1.0;
    const double mn = (out.scale.head(n).asDiagonal() * mean).norm();
    out.scale(n) = mn > 0 ? 1.0 / mn : 1.0;
    s = out.scale.asDiagonal() * s * out.scale.asDiagonal();
    out.saddle.compute(s);
    const double rc = out.saddle.rcond();
    if (!(rc > 1e-15))
        throw Error(ErrorKind::spd_violation,
                    "local saddle system of element " + std::to_string(element) +
                        " is singular (rcond " + std::to_string(rc) + ")");
    out.flux_response = out.solve(g);
    out.flux_energy = g.transpose() * out.flux_response;
    out.stiffness = std::move(stiffness);
    return out;
}

} // namespace detail

/// Assembles all local matrices of element e and factorizes the constrained Neumann problem.
inline ElementCache assemble_element(const CoarseMesh& mesh, const FinePartition& part, const CoefficientField& field,
                                     const WeightField& rho, Index e, bool identity_twin = false)
{
    const RefinementPattern& pat = part.pattern();
    const Index n = pat.node_count();
    ElementCache c;
    c.element = e;
    c.nodes = part.node_positions(mesh, e);
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd ki;
    if (identity_twin)
        ki = Eigen::MatrixXd::Zero(n, n);
    c.mass = Eigen::MatrixXd::Zero(n, n);
    c.tensors = field.element_cells(e);
    c.weights.resize(std::size_t(pat.cell_count()));
    c.cell_areas.resize(std::size_t(pat.cell_count()));
    c.cell_gradients.resize(std::size_t(pat.cell_count()));
    require(c.tensors.size() == std::size_t(pat.cell_count()), ErrorKind::incomplete_field,
            "coefficient field does not cover element " + std::to_string(e));
    for (int cell = 0; cell < pat.cell_count(); ++cell) {
        const auto& v = pat.cells[std::size_t(cell)];
        Eigen::Matrix<double, 2, 3> grad;
        const double area = detail::p1_gradients(c.nodes.row(v[0]).transpose(), c.nodes.row(v[1]).transpose(),
                                                  c.nodes.row(v[2]).transpose(), grad);
        const Tensor& a = c.tensors[std::size_t(cell)];
        const double r = rho.cell(e, cell);
        const Eigen::Matrix3d local = area * grad.transpose() * a * grad;
        const Eigen::Matrix3d local_mass = (r * area / 12.0) * (Eigen::Matrix3d::Ones() + Eigen::Matrix3d::Identity());
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                k(v[i], v[j]) += local(i, j);
                c.mass(v[i], v[j]) += local_mass(i, j);
            }
        if (identity_twin) {
            const Eigen::Matrix3d li = area * grad.transpose() * grad;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    ki(v[i], v[j]) += li(i, j);
        }
        c.weights[std::size_t(cell)] = r;
        c.cell_areas[std::size_t(cell)] = area;
        c.cell_gradients[std::size_t(cell)] = grad;
    }
    c.mean_constraint = c.mass * Eigen::VectorXd::Ones(n);
    c.weighted_area = c.mean_constraint.sum();
    c.boundary_pairing = boundary_pairing_matrix(mesh, part, e);

    std::vector<char> on_boundary(std::size_t(n), 0);
    for (const auto& edge : pat.edge_nodes)
        for (int node : edge)
            on_boundary[std::size_t(node)] = 1;
    for (int i = 0; i < n; ++i)
        if (!on_boundary[std::size_t(i)])
            c.interior_nodes.push_back(i);

    c.op = detail::make_solver(std::move(k), c.mean_constraint, c.boundary_pairing, e);
    if (identity_twin)
        c.identity = detail::make_solver(std::move(ki), c.mean_constraint, c.boundary_pairing, e);
    return c;
}

/// Assembles every element; elements are independent, so the result does not depend on `threads`.
inline std::vector<ElementCache> assemble_all(const CoarseMesh& mesh, const FinePartition& part,
                                              const CoefficientField& field, const WeightField& rho, int threads = 1,
                                              bool identity_twin = false)
{
    field.check_covers(mesh, part);
    std::vector<ElementCache> caches(std::size_t(mesh.element_count()));
    parallel_for(caches.size(), threads, [&](std::size_t e) {
        caches[e] = assemble_element(mesh, part, field, rho, Index(e), identity_twin);
    });
    return caches;
}

/// Solves the constrained Neumann problem K u = rhs on zero-rho-average functions.
inline LocalFunction solve_constrained(const LocalSolver& s, const Eigen::VectorXd& rhs)
{
    return {s.solve(rhs), true};
}

/// T mu for element-side flux values mu (one per slot).
inline LocalFunction apply_T(const ElementCache& c, const Eigen::VectorXd& mu)
{
    require(mu.size() == c.slot_count(), ErrorKind::invalid_argument, "flux vector has the wrong size");
    return solve_constrained(c.op, c.boundary_pairing * mu);
}

/// T_I mu (A = I, same rho constraint).
inline LocalFunction apply_T_identity(const ElementCache& c, const Eigen::VectorXd& mu)
{
    require(c.identity.has_value(), ErrorKind::invalid_argument, "element cache has no A = I twin");
    return solve_constrained(*c.identity, c.boundary_pairing * mu);
}

/// T~ g for nodal values g.
inline LocalFunction apply_Ttilde(const ElementCache& c, const Eigen::VectorXd& g)
{
    require(g.size() == c.node_count(), ErrorKind::invalid_argument, "load vector has the wrong size");
    return solve_constrained(c.op, c.mass * g);
}

/// |v|^2 in the A-energy on the element.
inline double energy(const ElementCache& c, const Eigen::VectorXd& v) { return v.dot(c.stiffness() * v); }

/// (mu, v)_{d tau} for element-side flux values and nodal values.
inline double boundary_pairing(const ElementCache& c, const Eigen::VectorXd& mu, const Eigen::VectorXd& v)
{
    return mu.dot(c.boundary_pairing.transpose() * v);
}

/// integral of rho * u * v.
inline double weighted_inner(const ElementCache& c, const Eigen::VectorXd& u, const Eigen::VectorXd& v)
{
    return u.dot(c.mass * v);
}

/// A grad v on every fine cell (2 x cells).
inline Eigen::Matrix2Xd cell_fluxes(const ElementCache& c, const Eigen::VectorXd& v,
                                    const RefinementPattern& pat)
{
    Eigen::Matrix2Xd out(2, pat.cell_count());
    for (int cell = 0; cell < pat.cell_count(); ++cell) {
        const auto& n = pat.cells[std::size_t(cell)];
        const Eigen::Vector3d loc(v(n[0]), v(n[1]), v(n[2]));
        out.col(cell) = c.tensors[std::size_t(cell)] * (c.cell_gradients[std::size_t(cell)] * loc);
    }
    return out;
}

/// Element-side matrix of a global per-face basis: rows are the s slots of local edge k.
inline Eigen::MatrixXd face_basis_local(const FinePartition& part, Index e, int k, const Eigen::MatrixXd& global)
{
    const Index s = part.subfaces();
    Eigen::MatrixXd out(s, global.cols());
    for (Index t = 0; t < s; ++t) {
        const Index q = k * s + t;
        out.row(t) = part.slot_sign(e, q) * global.row(part.slot_face(e, q) % s);
    }
    return out;
}

/// Blocks of B_tau in the zero-mean bases of face F (edge k) and of the other two faces F^c.
struct FaceBlocks {
    Eigen::MatrixXd ff, ffc, fcf, fcfc;
    /// Schur complement ff - ffc fcfc^{-1} fcf.
    Eigen::MatrixXd hat;
};

/// `face_basis` is the s x m element-side basis of the zero-mean subspace on edge k.
inline FaceBlocks face_blocks(const ElementCache& c, const FinePartition& part, int k,
                              const Eigen::MatrixXd& face_basis)
{
    const Index s = part.subfaces();
    const Index m = face_basis.cols();
    FaceBlocks out;
    if (m == 0) {
        out.ff = out.hat = Eigen::MatrixXd(0, 0);
        out.ffc = Eigen::MatrixXd(0, 0);
        out.fcf = Eigen::MatrixXd(0, 0);
        out.fcfc = Eigen::MatrixXd(0, 0);
        return out;
    }
    const Eigen::MatrixXd z = zero_mean_basis(s);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3 * s, m);
    w.middleRows(k * s, s) = face_basis;
    Eigen::MatrixXd wc = Eigen::MatrixXd::Zero(3 * s, 2 * z.cols());
    int col = 0;
    for (int other = 0; other < 3; ++other) {
        if (other == k)
            continue;
        wc.block(other * s, col, s, z.cols()) = z;
        col += int(z.cols());
    }
    const Eigen::MatrixXd& b = c.flux_energy();
    out.ff = w.transpose() * b * w;
    out.ffc = w.transpose() * b * wc;
    out.fcf = wc.transpose() * b * w;
    out.fcfc = wc.transpose() * b * wc;
    const Eigen::MatrixXd sym = 0.5 * (out.fcfc + out.fcfc.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    require(llt.info() == Eigen::Success, ErrorKind::spd_violation,
            "complement face block of element " + std::to_string(c.element) + " is not positive definite");
    out.hat = out.ff - out.ffc * llt.solve(out.fcf);
    out.hat = 0.5 * (out.hat + out.hat.transpose());
    return out;
}

} // namespace hlsd

#endif
