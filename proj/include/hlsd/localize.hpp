#ifndef HLSD_LOCALIZE_HPP
#define HLSD_LOCALIZE_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hlsd/error.hpp"
#include "hlsd/localop.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/parallel.hpp"
#include "hlsd/spectral.hpp"
#include "hlsd/traces.hpp"

namespace hlsd {

/// plain: patch spaces inside tilde Lambda^f. delta: inside the span of the Delta face modes.
enum class Variant { plain, delta };

inline const char* to_string(Variant v) { return v == Variant::plain ? "plain" : "delta"; }

inline Variant parse_variant(const std::string& s)
{
    if (s == "plain")
        return Variant::plain;
    if (s == "delta")
        return Variant::delta;
    throw Error(ErrorKind::invalid_argument, "unknown variant '" + s + "' (expected plain or delta)");
}

/// Per-face flux modes spanning the active multiplier subspace, with per-element Gram blocks.
struct FluxBasis {
    Variant variant = Variant::plain;
    /// s x m_f modes of face f in fine-face coordinates.
    std::vector<Eigen::MatrixXd> modes;
    std::vector<Index> offset;
    Index dim = 0;
    /// Slot values (3s x local dofs) of the element's three faces' modes, edge order.
    std::vector<Eigen::MatrixXd> element_map;
    /// element_map^T B_tau element_map.
    std::vector<Eigen::MatrixXd> element_gram;

    Index face_dofs(Index f) const { return modes[std::size_t(f)].cols(); }

    TraceVector to_trace(const Eigen::VectorXd& x, const FinePartition& part) const
    {
        TraceVector out = TraceVector::zero(part);
        const Index s = part.subfaces();
        for (std::size_t f = 0; f < modes.size(); ++f)
            if (modes[f].cols() > 0)
                out.values.segment(Index(f) * s, s) += modes[f] * x.segment(offset[f], modes[f].cols());
        return out;
    }
};

inline FluxBasis make_flux_basis(const CoarseMesh& mesh, const FinePartition& part,
                                 const std::vector<ElementCache>& caches, Variant variant,
                                 const std::vector<FaceSpectrum>* spectra, int threads = 1)
{
    FluxBasis b;
    b.variant = variant;
    const Index s = part.subfaces();
    const Eigen::MatrixXd q = zero_mean_basis(s);
    b.modes.resize(std::size_t(mesh.face_count()));
    b.offset.resize(std::size_t(mesh.face_count()) + 1, 0);
    if (variant == Variant::delta)
        require(spectra != nullptr && spectra->size() == std::size_t(mesh.face_count()), ErrorKind::invalid_argument,
                "delta variant needs the face spectra");
    for (Index f = 0; f < mesh.face_count(); ++f) {
        if (variant == Variant::plain) {
            b.modes[std::size_t(f)] = q;
        } else {
            const FaceSpectrum& sp = (*spectra)[std::size_t(f)];
            b.modes[std::size_t(f)] = sp.fine_vectors.leftCols(sp.split);
        }
        b.offset[std::size_t(f) + 1] = b.offset[std::size_t(f)] + b.modes[std::size_t(f)].cols();
    }
    b.dim = b.offset.back();
    b.element_map.resize(caches.size());
    b.element_gram.resize(caches.size());
    parallel_for(caches.size(), threads, [&](std::size_t e) {
        Index cols = 0;
        for (int k = 0; k < 3; ++k)
            cols += b.face_dofs(mesh.element_face(Index(e), k));
        Eigen::MatrixXd map = Eigen::MatrixXd::Zero(3 * s, cols);
        Index c = 0;
        for (int k = 0; k < 3; ++k) {
            const Index f = mesh.element_face(Index(e), k);
            const Index m = b.face_dofs(f);
            if (m > 0)
                map.block(k * s, c, s, m) = face_basis_local(part, Index(e), k, b.modes[std::size_t(f)]);
            c += m;
        }
        b.element_gram[e] = map.transpose() * caches[e].flux_energy() * map;
        b.element_map[e] = std::move(map);
    });
    return b;
}

/// Per-element slot data of a linear functional on multipliers: value(mu) = sum_tau r_tau . side_tau(mu).
using SlotFunctional = std::vector<Eigen::VectorXd>;

/// r_tau = B_tau side_tau(lambda): the functional mu -> (mu, T lambda)_{dT_H}.
inline SlotFunctional energy_functional(const FinePartition& part, const std::vector<ElementCache>& caches,
                                        const TraceVector& lambda)
{
    SlotFunctional r(caches.size());
    for (std::size_t e = 0; e < caches.size(); ++e)
        r[e] = caches[e].flux_energy() * element_side(part, Index(e), lambda.values);
    return r;
}

/// r_tau = G_tau^T v_tau: the functional mu -> (mu, v)_{dT_H}.
inline SlotFunctional pairing_functional(const std::vector<ElementCache>& caches, const BrokenFunction& v)
{
    SlotFunctional r(caches.size());
    for (std::size_t e = 0; e < caches.size(); ++e)
        r[e] = caches[e].boundary_pairing.transpose() * v[e];
    return r;
}

/// Symmetric positive definite solver: dense Cholesky up to `dense_limit` unknowns, sparse beyond.
class SpdSolver {
public:
    static constexpr Index dense_limit = 4000;

    SpdSolver() = default;

    void compute(Index n, const std::vector<Eigen::Triplet<double>>& entries, const std::string& what)
    {
        n_ = n;
        dense_ = n <= dense_limit;
        if (n == 0)
            return;
        if (dense_) {
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
            for (const auto& t : entries)
                a(t.row(), t.col()) += t.value();
            dense_factor_.compute(a);
            require(dense_factor_.info() == Eigen::Success, ErrorKind::spd_violation, what + " is not positive definite");
        } else {
            Eigen::SparseMatrix<double> a(n, n);
            a.setFromTriplets(entries.begin(), entries.end());
            sparse_factor_ = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
            sparse_factor_->compute(a);
            require(sparse_factor_->info() == Eigen::Success, ErrorKind::spd_violation, what + " is not positive definite");
        }
    }

    Index size() const { return n_; }

    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const
    {
        if (n_ == 0)
            return Eigen::MatrixXd(0, rhs.cols());
        if (dense_)
            return dense_factor_.solve(rhs);
        return sparse_factor_->solve(rhs);
    }

private:
    Index n_ = 0;
    bool dense_ = true;
    Eigen::LLT<Eigen::MatrixXd> dense_factor_;
    std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> sparse_factor_;
};

/// Galerkin problem on the multipliers supported on the active faces of T_j(seed).
struct PatchProblem {
    Seed seed;
    int layers = 0;
    ElementSet elements;
    /// Active coarse faces, ascending.
    std::vector<Index> faces;
    /// Local dof offset of each active face (same order as `faces`).
    std::vector<Index> face_offset;
    Index dim = 0;
    SpdSolver solver;

    /// Local offset of face f, or -1 if inactive.
    Index local_offset(Index f) const
    {
        auto it = std::lower_bound(faces.begin(), faces.end(), f);
        if (it == faces.end() || *it != f)
            return -1;
        return face_offset[std::size_t(it - faces.begin())];
    }
};

namespace detail {

/// Rows of the element's local dofs that are active in the patch: (element-local column, patch row).
inline std::vector<std::pair<Index, Index>> active_columns(const CoarseMesh& mesh, const FluxBasis& basis,
                                                           const PatchProblem& p, Index e)
{
    std::vector<std::pair<Index, Index>> cols;
    Index c = 0;
    for (int k = 0; k < 3; ++k) {
        const Index f = mesh.element_face(e, k);
        const Index m = basis.face_dofs(f);
        const Index off = p.local_offset(f);
        if (off >= 0)
            for (Index i = 0; i < m; ++i)
                cols.emplace_back(c + i, off + i);
        c += m;
    }
    return cols;
}

/// Elements of T_j touching an active face.
inline std::vector<Index> contributing_elements(const CoarseMesh& mesh, const PatchProblem& p)
{
    std::vector<Index> out;
    for (Index e : p.elements.elements)
        for (int k = 0; k < 3; ++k)
            if (p.local_offset(mesh.element_face(e, k)) >= 0) {
                out.push_back(e);
                break;
            }
    return out;
}

} // namespace detail

inline PatchProblem build_patch(const CoarseMesh& mesh, const FluxBasis& basis, Seed seed, int j,
                                const std::vector<Index>* forced_faces = nullptr)
{
    PatchProblem p;
    p.seed = seed;
    p.layers = j;
    if (forced_faces) {
        p.elements.seed = seed;
        p.elements.layers = j;
        for (Index e = 0; e < mesh.element_count(); ++e)
            p.elements.elements.push_back(e);
    } else {
        p.elements = element_layers(mesh, seed, j);
    }
    const std::vector<Index> candidates = forced_faces ? *forced_faces : interior_faces_of(mesh, p.elements);
    for (Index f : candidates) {
        if (basis.face_dofs(f) == 0)
            continue;
        p.faces.push_back(f);
        p.face_offset.push_back(p.dim);
        p.dim += basis.face_dofs(f);
    }
    std::vector<Eigen::Triplet<double>> entries;
    for (Index e : detail::contributing_elements(mesh, p)) {
        const auto cols = detail::active_columns(mesh, basis, p, e);
        const Eigen::MatrixXd& g = basis.element_gram[std::size_t(e)];
        for (const auto& [ci, ri] : cols)
            for (const auto& [cj, rj] : cols)
                entries.emplace_back(ri, rj, g(ci, cj));
    }
    p.solver.compute(p.dim, entries, "patch Gram matrix of seed " + to_string(seed));
    return p;
}

/// Patch rhs from slot functionals of the given elements.
inline Eigen::VectorXd patch_rhs(const CoarseMesh& mesh, const FluxBasis& basis, const PatchProblem& p,
                                 const SlotFunctional& r)
{
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p.dim);
    for (Index e : detail::contributing_elements(mesh, p)) {
        if (r[std::size_t(e)].size() == 0)
            continue;
        const Eigen::VectorXd local = basis.element_map[std::size_t(e)].transpose() * r[std::size_t(e)];
        for (const auto& [c, row] : detail::active_columns(mesh, basis, p, e))
            rhs(row) += local(c);
    }
    return rhs;
}

/// Maps patch coordinates to a global trace.
inline void add_patch_trace(const FluxBasis& basis, const FinePartition& part, const PatchProblem& p,
                            const Eigen::VectorXd& x, Eigen::VectorXd& out)
{
    const Index s = part.subfaces();
    for (std::size_t i = 0; i < p.faces.size(); ++i) {
        const Index f = p.faces[i];
        out.segment(f * s, s) += basis.modes[std::size_t(f)] * x.segment(p.face_offset[i], basis.face_dofs(f));
    }
}

/// Galerkin solve on the patch for a functional given by slot data.
inline TraceVector solve_patch(const CoarseMesh& mesh, const FinePartition& part, const FluxBasis& basis,
                               const PatchProblem& p, const SlotFunctional& r)
{
    TraceVector out = TraceVector::zero(part);
    if (p.dim == 0)
        return out;
    const Eigen::VectorXd x = p.solver.solve(patch_rhs(mesh, basis, p, r));
    add_patch_trace(basis, part, p, x, out.values);
    return out;
}

/// Global projection: all faces active, one factorization.
class GlobalProjector {
public:
    GlobalProjector(const CoarseMesh& mesh, const FinePartition& part, const FluxBasis& basis)
        : mesh_(&mesh), part_(&part), basis_(&basis)
    {
        std::vector<Index> all(std::size_t(mesh.face_count()));
        for (Index f = 0; f < mesh.face_count(); ++f)
            all[std::size_t(f)] = f;
        patch_ = build_patch(mesh, basis, Seed::element(0), 0, &all);
    }

    const PatchProblem& problem() const { return patch_; }

    /// Coordinates of the solution (basis dof order).
    Eigen::VectorXd solve_coordinates(const SlotFunctional& r) const
    {
        if (patch_.dim == 0)
            return Eigen::VectorXd(0);
        return patch_.solver.solve(patch_rhs(*mesh_, *basis_, patch_, r));
    }

    TraceVector apply(const SlotFunctional& r) const { return solve_patch(*mesh_, *part_, *basis_, patch_, r); }

    /// P T lambda.
    TraceVector apply_PT(const std::vector<ElementCache>& caches, const TraceVector& lambda) const
    {
        return apply(energy_functional(*part_, caches, lambda));
    }

    /// P v.
    TraceVector apply_P(const std::vector<ElementCache>& caches, const BrokenFunction& v) const
    {
        return apply(pairing_functional(caches, v));
    }

private:
    const CoarseMesh* mesh_;
    const FinePartition* part_;
    const FluxBasis* basis_;
    PatchProblem patch_;
};

/// P T w or P w over the full space for either variant: the j = infinity reference.
inline TraceVector apply_P_global(const CoarseMesh& mesh, const FinePartition& part, const FluxBasis& basis,
                                  const SlotFunctional& r)
{
    return GlobalProjector(mesh, part, basis).apply(r);
}

struct LocalizeOptions {
    int layers = 1;
    int threads = 1;
    /// Build every patch even when j saturates the mesh.
    bool force_local = false;
};

/// Localized operators P^j T (face seeds) and tilde P^j (element seeds) with precomputed responses.
class LocalizedOperators {
public:
    LocalizedOperators(const CoarseMesh& mesh, const FinePartition& part, const std::vector<ElementCache>& caches,
                       const FluxBasis& basis, LocalizeOptions opt)
        : mesh_(&mesh), part_(&part), caches_(&caches), basis_(&basis), opt_(opt)
    {
        require(opt.layers >= 1, ErrorKind::invalid_argument, "layer count j must be >= 1");
        global_ = !opt.force_local && opt.layers >= mesh_saturation_layer(mesh);
        if (global_) {
            projector_ = std::make_unique<GlobalProjector>(mesh, part, basis);
            return;
        }
        const Index s = part.subfaces();
        face_patches_.resize(std::size_t(mesh.face_count()));
        face_response_.resize(face_patches_.size());
        parallel_for(face_patches_.size(), opt.threads, [&](std::size_t fi) {
            const Index f = Index(fi);
            PatchProblem p = build_patch(mesh, basis, Seed::face(f), opt.layers);
            const Face& face = mesh.face(f);
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(p.dim, s);
            std::vector<Index> incident{face.left};
            if (face.right)
                incident.push_back(*face.right);
            for (Index e : incident) {
                const int k = mesh.local_edge(e, f);
                // Slot values of lambda restricted to F, per unit value on each fine face of F.
                Eigen::MatrixXd side = Eigen::MatrixXd::Zero(3 * s, s);
                for (Index t = 0; t < s; ++t) {
                    const Index q = k * s + t;
                    side(q, part.slot_face(e, q) % s) = part.slot_sign(e, q);
                }
                const Eigen::MatrixXd local =
                    basis.element_map[std::size_t(e)].transpose() * (caches[std::size_t(e)].flux_energy() * side);
                for (const auto& [c, row] : detail::active_columns(mesh, basis, p, e))
                    rhs.row(row) += local.row(c);
            }
            face_response_[fi] = p.solver.solve(rhs);
            face_patches_[fi] = std::move(p);
        });
        element_patches_.resize(std::size_t(mesh.element_count()));
        element_response_.resize(element_patches_.size());
        parallel_for(element_patches_.size(), opt.threads, [&](std::size_t ei) {
            const Index e = Index(ei);
            PatchProblem p = build_patch(mesh, basis, Seed::element(e), opt.layers);
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(p.dim, 3 * s);
            const Eigen::MatrixXd& map = basis.element_map[ei];
            for (const auto& [c, row] : detail::active_columns(mesh, basis, p, e))
                rhs.row(row) += map.col(c).transpose();
            element_response_[ei] = p.solver.solve(rhs);
            element_patches_[ei] = std::move(p);
        });
    }

    bool uses_global() const { return global_; }
    int layers() const { return opt_.layers; }
    const FluxBasis& basis() const { return *basis_; }

    const PatchProblem& face_patch(Index f) const { return face_patches_.at(std::size_t(f)); }
    const PatchProblem& element_patch(Index e) const { return element_patches_.at(std::size_t(e)); }

    /// P^j T lambda = sum_F P^{F,j} T lambda^F.
    TraceVector apply_PjT(const TraceVector& lambda) const
    {
        if (global_)
            return projector_->apply_PT(*caches_, lambda);
        const Index s = part_->subfaces();
        TraceVector out = TraceVector::zero(*part_);
        for (std::size_t f = 0; f < face_patches_.size(); ++f) {
            const PatchProblem& p = face_patches_[f];
            if (p.dim == 0)
                continue;
            const Eigen::VectorXd x = face_response_[f] * lambda.values.segment(Index(f) * s, s);
            add_patch_trace(*basis_, *part_, p, x, out.values);
        }
        return out;
    }

    /// Column-wise P^j T for a fine-face matrix.
    Eigen::MatrixXd apply_PjT_columns(const Eigen::MatrixXd& cols) const
    {
        const Index s = part_->subfaces();
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cols.rows(), cols.cols());
        if (global_) {
            const PatchProblem& p = projector_->problem();
            if (p.dim == 0)
                return out;
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(p.dim, cols.cols());
            for (std::size_t e = 0; e < caches_->size(); ++e) {
                Eigen::MatrixXd side(3 * s, cols.cols());
                for (Index q = 0; q < 3 * s; ++q)
                    side.row(q) = part_->slot_sign(Index(e), q) * cols.row(part_->slot_face(Index(e), q));
                const Eigen::MatrixXd local =
                    basis_->element_map[e].transpose() * ((*caches_)[e].flux_energy() * side);
                for (const auto& [c, row] : detail::active_columns(*mesh_, *basis_, p, Index(e)))
                    rhs.row(row) += local.row(c);
            }
            const Eigen::MatrixXd x = p.solver.solve(rhs);
            for (std::size_t i = 0; i < p.faces.size(); ++i) {
                const Index f = p.faces[i];
                out.middleRows(f * s, s) += basis_->modes[std::size_t(f)] *
                                            x.middleRows(p.face_offset[i], basis_->face_dofs(f));
            }
            return out;
        }
        for (std::size_t f = 0; f < face_patches_.size(); ++f) {
            const PatchProblem& p = face_patches_[f];
            if (p.dim == 0)
                continue;
            const auto seg = cols.middleRows(Index(f) * s, s);
            std::vector<Index> nonzero;
            for (Index c = 0; c < cols.cols(); ++c)
                if (seg.col(c).squaredNorm() > 0.0)
                    nonzero.push_back(c);
            if (nonzero.empty())
                continue;
            Eigen::MatrixXd sub(s, Index(nonzero.size()));
            for (std::size_t i = 0; i < nonzero.size(); ++i)
                sub.col(Index(i)) = seg.col(nonzero[i]);
            const Eigen::MatrixXd x = face_response_[f] * sub;
            for (std::size_t k = 0; k < p.faces.size(); ++k) {
                const Index g = p.faces[k];
                const Eigen::MatrixXd vals =
                    basis_->modes[std::size_t(g)] * x.middleRows(p.face_offset[k], basis_->face_dofs(g));
                for (std::size_t i = 0; i < nonzero.size(); ++i)
                    out.col(nonzero[i]).segment(g * s, s) += vals.col(Index(i));
            }
        }
        return out;
    }

    /// tilde P^j for a functional given per element: sum_K P^{K,j} applied to the K part.
    TraceVector apply_Pj(const SlotFunctional& r) const
    {
        if (global_)
            return projector_->apply(r);
        TraceVector out = TraceVector::zero(*part_);
        for (std::size_t e = 0; e < element_patches_.size(); ++e) {
            const PatchProblem& p = element_patches_[e];
            if (p.dim == 0 || r[e].size() == 0)
                continue;
            const Eigen::VectorXd x = element_response_[e] * r[e];
            add_patch_trace(*basis_, *part_, p, x, out.values);
        }
        return out;
    }

    /// tilde P^j v = sum_K P^{K,j} v_K.
    TraceVector apply_Pj_function(const BrokenFunction& v) const { return apply_Pj(pairing_functional(*caches_, v)); }

private:
    const CoarseMesh* mesh_;
    const FinePartition* part_;
    const std::vector<ElementCache>* caches_;
    const FluxBasis* basis_;
    LocalizeOptions opt_;
    bool global_ = false;
    std::unique_ptr<GlobalProjector> projector_;
    std::vector<PatchProblem> face_patches_;
    std::vector<Eigen::MatrixXd> face_response_;
    std::vector<PatchProblem> element_patches_;
    std::vector<Eigen::MatrixXd> element_response_;
};

/// Broken energies of T mu per element: side(mu)^T B_tau side(mu).
inline Eigen::VectorXd element_energies(const FinePartition& part, const std::vector<ElementCache>& caches,
                                        const TraceVector& mu)
{
    Eigen::VectorXd out(Index(caches.size()));
    for (std::size_t e = 0; e < caches.size(); ++e) {
        const Eigen::VectorXd side = element_side(part, Index(e), mu.values);
        out(Index(e)) = side.dot(caches[e].flux_energy() * side);
    }
    return out;
}

/// (mu, T nu)_{dT_H}.
inline double energy_pairing(const FinePartition& part, const std::vector<ElementCache>& caches,
                             const TraceVector& mu, const TraceVector& nu)
{
    double sum = 0.0;
    for (std::size_t e = 0; e < caches.size(); ++e)
        sum += element_side(part, Index(e), mu.values).dot(caches[e].flux_energy() *
                                                           element_side(part, Index(e), nu.values));
    return sum;
}

inline double fit_geometric_ratio(const std::vector<double>& energies, double total, std::size_t first, int* used,
                                  std::size_t last = std::size_t(-1))
{
    std::vector<double> xs, ys;
    for (std::size_t r = first; r < energies.size() && r <= last; ++r)
        if (energies[r] > 1e-14 * total) {
            xs.push_back(double(r));
            ys.push_back(std::log(energies[r]));
        }
    if (used)
        *used = int(xs.size());
    if (xs.size() < 2)
        return 0.0;
    const double n = double(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return std::exp(slope);
}

struct RingProfile {
    Seed seed;
    /// energies[r]: ring 0 = T_1(seed), ring r = T_{r+1} minus T_r.
    std::vector<double> energies;
    double total = 0.0;
    /// exp(slope) of a least-squares line through log energies of rings >= 1.
    double ratio = 0.0;
    int fitted_rings = 0;

    /// Same fit restricted to rings [first, last].
    double ratio_between(std::size_t first, std::size_t last) const
    {
        return fit_geometric_ratio(energies, total, first, nullptr, last);
    }

    std::vector<double> cumulative_fraction() const
    {
        std::vector<double> out;
        double acc = 0.0;
        for (double e : energies) {
            acc += e;
            out.push_back(total > 0 ? acc / total : 0.0);
        }
        return out;
    }

    /// Energy fraction outside T_{r+1}.
    double tail_beyond(std::size_t r) const
    {
        double acc = 0.0;
        for (std::size_t i = r + 1; i < energies.size(); ++i)
            acc += energies[i];
        return total > 0 ? acc / total : 0.0;
    }
};

inline RingProfile ring_energies(const CoarseMesh& mesh, const FinePartition& part,
                                 const std::vector<ElementCache>& caches, const TraceVector& mu, Seed seed)
{
    RingProfile prof;
    prof.seed = seed;
    const Eigen::VectorXd per_element = element_energies(part, caches, mu);
    prof.total = per_element.sum();
    std::vector<int> ring(std::size_t(mesh.element_count()), -1);
    const int sat = saturation_layer(mesh, seed);
    std::vector<char> seen(ring.size(), 0);
    for (int j = 1; j <= sat; ++j) {
        const ElementSet set = element_layers(mesh, seed, j);
        for (Index e : set.elements)
            if (!seen[std::size_t(e)]) {
                seen[std::size_t(e)] = 1;
                ring[std::size_t(e)] = j - 1;
            }
    }
    prof.energies.assign(std::size_t(sat), 0.0);
    for (std::size_t e = 0; e < ring.size(); ++e)
        prof.energies[std::size_t(ring[e])] += per_element(Index(e));
    prof.ratio = fit_geometric_ratio(prof.energies, prof.total, 1, &prof.fitted_rings);
    return prof;
}

inline void write_ring_csv(std::ostream& out, const std::vector<RingProfile>& profiles, bool header = true)
{
    if (header)
        out << "seed,j,energy,cumulative_fraction\n";
    out.precision(17);
    for (const auto& p : profiles) {
        const auto cum = p.cumulative_fraction();
        for (std::size_t r = 0; r < p.energies.size(); ++r)
            out << to_string(p.seed) << ',' << r << ',' << p.energies[r] << ',' << cum[r] << '\n';
    }
}

} // namespace hlsd

#endif
