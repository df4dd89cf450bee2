#ifndef HLSD_TRACES_HPP
#define HLSD_TRACES_HPP

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hlsd/error.hpp"
#include "hlsd/mesh.hpp"

namespace hlsd {

/// Element of Lambda_h: one value per fine face, measured against the face normal n_F.
/// The value seen from element tau is sign(tau, F) * value.
struct TraceVector {
    Eigen::VectorXd values;

    TraceVector() = default;
    explicit TraceVector(Eigen::VectorXd v) : values(std::move(v)) {}
    static TraceVector zero(const FinePartition& part) { return TraceVector(Eigen::VectorXd::Zero(part.fine_face_count())); }

    Index size() const { return values.size(); }
    double norm() const { return values.norm(); }
};

/// Element of V^0: one value per coarse element.
struct PiecewiseConstant {
    Eigen::VectorXd values;
};

/// Broken P1 function: nodal values on the interior triangulation of every element.
using BrokenFunction = std::vector<Eigen::VectorXd>;

inline BrokenFunction zero_function(const CoarseMesh& mesh, const FinePartition& part)
{
    return BrokenFunction(std::size_t(mesh.element_count()), Eigen::VectorXd::Zero(part.pattern().node_count()));
}

/// Samples a function at the interior nodes of every element.
template <class Fn>
BrokenFunction interpolate(const CoarseMesh& mesh, const FinePartition& part, Fn&& fn)
{
    BrokenFunction out(std::size_t(mesh.element_count()));
    for (Index e = 0; e < mesh.element_count(); ++e) {
        Eigen::VectorXd v(part.pattern().node_count());
        for (int i = 0; i < v.size(); ++i)
            v(i) = fn(part.node_position(mesh, e, i));
        out[std::size_t(e)] = std::move(v);
    }
    return out;
}

/// Orthonormal basis (s x (s-1)) of zero-sum vectors: normalized Helmert columns.
inline Eigen::MatrixXd zero_mean_basis(Index s)
{
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(s, std::max<Index>(s - 1, 0));
    for (Index k = 1; k < s; ++k) {
        const double scale = 1.0 / std::sqrt(double(k) * double(k + 1));
        q.col(k - 1).head(k).setConstant(scale);
        q(k, k - 1) = -double(k) * scale;
    }
    return q;
}

/// Values of a global trace seen from element e, in slot order.
inline Eigen::VectorXd element_side(const FinePartition& part, Index e, const Eigen::VectorXd& global)
{
    Eigen::VectorXd local(part.slots_per_element());
    for (Index q = 0; q < local.size(); ++q)
        local(q) = part.slot_sign(e, q) * global(part.slot_face(e, q));
    return local;
}

/// global += element-side values of element e mapped back to face orientation.
inline void scatter_side(const FinePartition& part, Index e, const Eigen::VectorXd& local, Eigen::VectorXd& global)
{
    for (Index q = 0; q < local.size(); ++q)
        global(part.slot_face(e, q)) += part.slot_sign(e, q) * local(q);
}

/// G_tau (nodes x slots): G(i, q) = integral of the P1 hat function i over fine face q.
/// Exact for P1 traces (trapezoid on each boundary segment).
inline Eigen::MatrixXd boundary_pairing_matrix(const CoarseMesh& mesh, const FinePartition& part, Index e)
{
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(part.pattern().node_count(), part.slots_per_element());
    for (Index q = 0; q < part.slots_per_element(); ++q)
        for (const auto& seg : part.slot_segments(q)) {
            const double len = (part.node_position(mesh, e, seg[1]) - part.node_position(mesh, e, seg[0])).norm();
            g(seg[0], q) += 0.5 * len;
            g(seg[1], q) += 0.5 * len;
        }
    return g;
}

/// Face-trace integrals of a broken function: r(a) = (e_a, v)_{dT_H} for every fine face a.
inline Eigen::VectorXd trace_functional(const CoarseMesh& mesh, const FinePartition& part, const BrokenFunction& v)
{
    Eigen::VectorXd r = Eigen::VectorXd::Zero(part.fine_face_count());
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Eigen::MatrixXd g = boundary_pairing_matrix(mesh, part, e);
        scatter_side(part, e, g.transpose() * v[std::size_t(e)], r);
    }
    return r;
}

/// (mu, v)_{dT_H} for a broken P1 function.
inline double pairing(const CoarseMesh& mesh, const FinePartition& part, const TraceVector& mu, const BrokenFunction& v)
{
    return mu.values.dot(trace_functional(mesh, part, v));
}

/// (mu, v0)_{dT_H} for a piecewise constant.
inline double pairing(const CoarseMesh& mesh, const FinePartition& part, const TraceVector& mu,
                      const PiecewiseConstant& v)
{
    double sum = 0.0;
    for (Index e = 0; e < mesh.element_count(); ++e)
        for (Index q = 0; q < part.slots_per_element(); ++q) {
            const Index a = part.slot_face(e, q);
            sum += v.values(e) * part.slot_sign(e, q) * mu.values(a) * part.fine_face_length(a);
        }
    return sum;
}

/// Per-element boundary integrals (mu, 1_tau)_{d tau}.
inline Eigen::VectorXd element_averages(const CoarseMesh& mesh, const FinePartition& part, const TraceVector& mu)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.element_count());
    for (Index e = 0; e < mesh.element_count(); ++e)
        for (Index q = 0; q < part.slots_per_element(); ++q) {
            const Index a = part.slot_face(e, q);
            out(e) += part.slot_sign(e, q) * mu.values(a) * part.fine_face_length(a);
        }
    return out;
}

/// Per-coarse-face integrals of mu over F.
inline Eigen::VectorXd face_integrals(const CoarseMesh& mesh, const FinePartition& part, const TraceVector& mu)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.face_count());
    for (Index a = 0; a < part.fine_face_count(); ++a)
        out(part.coarse_face_of(a)) += mu.values(a) * part.fine_face_length(a);
    return out;
}

/// lambda^0_i: element-side value +1 on all of d tau_i, -1 on the mating side of shared faces.
inline TraceVector lambda0_function(const CoarseMesh& /*mesh*/, const FinePartition& part, Index i)
{
    TraceVector mu = TraceVector::zero(part);
    for (Index q = 0; q < part.slots_per_element(); ++q)
        mu.values(part.slot_face(i, q)) = part.slot_sign(i, q);
    return mu;
}

inline std::vector<TraceVector> lambda0_basis(const CoarseMesh& mesh, const FinePartition& part)
{
    std::vector<TraceVector> basis;
    basis.reserve(std::size_t(mesh.element_count()));
    for (Index i = 0; i < mesh.element_count(); ++i)
        basis.push_back(lambda0_function(mesh, part, i));
    return basis;
}

/// Lambda_h = Lambda^0 (+) tilde Lambda^0 (+) tilde Lambda^f.
struct TraceComponents {
    Eigen::VectorXd lambda0_coefficients;
    TraceVector constant_part;   ///< in Lambda^0
    TraceVector face_constant;   ///< in tilde Lambda^0
    TraceVector face_fluctuation; ///< in tilde Lambda^f
};

/// Bases and solvers for the multiplier-space splitting.
class SpaceDecomposition {
public:
    SpaceDecomposition(const CoarseMesh& mesh, const FinePartition& part) : mesh_(&mesh), part_(&part)
    {
        const Index n = mesh.element_count();
        const Index nf = mesh.face_count();
        const Index s = part.subfaces();

        std::vector<Eigen::Triplet<double>> trip;
        for (Index e = 0; e < n; ++e)
            trip.emplace_back(e, e, mesh.perimeter(e));
        for (Index f = 0; f < nf; ++f) {
            const Face& face = mesh.face(f);
            if (face.right) {
                trip.emplace_back(face.left, *face.right, -face.length);
                trip.emplace_back(*face.right, face.left, -face.length);
            }
        }
        pairing_matrix_.resize(n, n);
        pairing_matrix_.setFromTriplets(trip.begin(), trip.end());
        pairing_solver_.compute(pairing_matrix_);
        require(pairing_solver_.info() == Eigen::Success, ErrorKind::singular,
                "lambda^0 pairing matrix is singular: the mesh is not connected");

        trip.clear();
        for (Index e = 0; e < n; ++e)
            for (Index q = 0; q < part.slots_per_element(); ++q)
                trip.emplace_back(part.slot_face(e, q), e, part.slot_sign(e, q));
        lambda0_.resize(part.fine_face_count(), n);
        lambda0_.setFromTriplets(trip.begin(), trip.end());

        trip.clear();
        for (Index f = 0; f < nf; ++f)
            for (Index k = 0; k < s; ++k)
                trip.emplace_back(part.fine_face(f, k), f, 1.0);
        face_indicators_.resize(part.fine_face_count(), nf);
        face_indicators_.setFromTriplets(trip.begin(), trip.end());

        // Null space of the element-average constraints restricted to face constants.
        Eigen::MatrixXd constraint_t = Eigen::MatrixXd::Zero(nf, n);
        for (Index f = 0; f < nf; ++f) {
            const Face& face = mesh.face(f);
            constraint_t(f, face.left) = face.length;
            if (face.right)
                constraint_t(f, *face.right) = -face.length;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(constraint_t);
        require(qr.rank() == n, ErrorKind::singular,
                "face-constant constraints have rank " + std::to_string(qr.rank()) + ", expected " + std::to_string(n));
        const Eigen::MatrixXd q = qr.householderQ();
        face_constant_basis_ = q.rightCols(nf - n);

        face_zero_mean_ = zero_mean_basis(s);
    }

    const CoarseMesh& mesh() const { return *mesh_; }
    const FinePartition& partition() const { return *part_; }

    /// N x N matrix with entries (lambda^0_i, v^0_j); symmetric.
    const Eigen::SparseMatrix<double>& pairing_matrix() const { return pairing_matrix_; }
    /// Columns lambda^0_i in fine-face coordinates.
    const Eigen::SparseMatrix<double>& lambda0() const { return lambda0_; }
    /// Columns chi_F (indicator of coarse face F) in fine-face coordinates.
    const Eigen::SparseMatrix<double>& face_indicators() const { return face_indicators_; }
    /// Coefficients over chi_F of a basis of tilde Lambda^0 (nF x (nF - N)).
    const Eigen::MatrixXd& face_constant_basis() const { return face_constant_basis_; }
    /// Orthonormal zero-mean basis on the s sub-faces of one coarse face.
    const Eigen::MatrixXd& face_zero_mean() const { return face_zero_mean_; }

    Index dim_lambda0() const { return mesh_->element_count(); }
    Index dim_tilde0() const { return face_constant_basis_.cols(); }
    Index dim_tilde_f() const { return mesh_->face_count() * (part_->subfaces() - 1); }

    /// Solves sum_i c_i (lambda^0_i, v^0_j) = rhs_j. The matrix is symmetric, so this is also the
    /// transposed system used for u^0.
    Eigen::VectorXd solve_pairing(const Eigen::VectorXd& rhs) const
    {
        require(rhs.size() == dim_lambda0(), ErrorKind::invalid_argument, "V0 pairing rhs has the wrong size");
        return pairing_solver_.solve(rhs);
    }

    TraceVector lambda0_combination(const Eigen::VectorXd& coefficients) const
    {
        return TraceVector(lambda0_ * coefficients);
    }

    TraceComponents decompose(const TraceVector& mu) const
    {
        TraceComponents out;
        out.lambda0_coefficients = solve_pairing(element_averages(*mesh_, *part_, mu));
        out.constant_part = lambda0_combination(out.lambda0_coefficients);
        const Eigen::VectorXd rest = mu.values - out.constant_part.values;
        Eigen::VectorXd means = face_integrals(*mesh_, *part_, TraceVector(rest));
        for (Index f = 0; f < mesh_->face_count(); ++f)
            means(f) /= mesh_->face(f).length;
        out.face_constant = TraceVector(face_indicators_ * means);
        out.face_fluctuation = TraceVector(rest - out.face_constant.values);
        return out;
    }

    /// mu in tilde Lambda_h: zero pairing with every piecewise constant.
    bool in_tilde_lambda(const TraceVector& mu, double tol) const
    {
        return element_averages(*mesh_, *part_, mu).cwiseAbs().maxCoeff() <= tol * scale(mu);
    }

    /// mu in tilde Lambda^f_h: zero mean on every coarse face.
    bool in_tilde_lambda_f(const TraceVector& mu, double tol) const
    {
        return face_integrals(*mesh_, *part_, mu).cwiseAbs().maxCoeff() <= tol * scale(mu);
    }

private:
    double scale(const TraceVector& mu) const
    {
        return std::max(1e-300, mu.values.cwiseAbs().maxCoeff() * mesh_->mesh_size());
    }

    const CoarseMesh* mesh_;
    const FinePartition* part_;
    Eigen::SparseMatrix<double> pairing_matrix_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> pairing_solver_;
    Eigen::SparseMatrix<double> lambda0_;
    Eigen::SparseMatrix<double> face_indicators_;
    Eigen::MatrixXd face_constant_basis_;
    Eigen::MatrixXd face_zero_mean_;
};

} // namespace hlsd

#endif
