#ifndef HLSD_PIPELINE_HPP
#define HLSD_PIPELINE_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlsd/coeff.hpp"
#include "hlsd/error.hpp"
#include "hlsd/localize.hpp"
#include "hlsd/localop.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/spectral.hpp"
#include "hlsd/traces.hpp"

namespace hlsd {

/// Mesh, fine partition, coefficients and all element caches of one discretization.
/// Not movable: the decomposition keeps references to the mesh and partition.
class Problem {
public:
    using FieldFn = std::function<CoefficientField(const CoarseMesh&, const FinePartition&)>;
    /// Cellwise rho values in the field layout, used with WeightChoice::custom.
    using WeightFn = std::function<std::vector<std::vector<double>>(const CoarseMesh&, const FinePartition&)>;

    Problem(CoarseMesh mesh, int face_level, int interior_extra, const FieldFn& field_fn, WeightChoice weight,
            int threads = 1, bool identity_twin = false, const WeightFn& custom_weight = {})
        : mesh_(std::move(mesh)), part_(refine_faces(mesh_, face_level, interior_extra)),
          field_(field_fn(mesh_, part_)), rho_(build_weight(weight, custom_weight)),
          caches_(assemble_all(mesh_, part_, field_, rho_, threads, identity_twin)), dec_(mesh_, part_)
    {
    }

    Problem(const Problem&) = delete;
    Problem& operator=(const Problem&) = delete;

    const CoarseMesh& mesh() const { return mesh_; }
    const FinePartition& part() const { return part_; }
    const CoefficientField& field() const { return field_; }
    const WeightField& rho() const { return rho_; }
    const std::vector<ElementCache>& caches() const { return caches_; }
    const ElementCache& cache(Index e) const { return caches_[std::size_t(e)]; }
    const SpaceDecomposition& decomposition() const { return dec_; }

    /// Broken A-energy |v|^2 = sum_tau v^T K_tau v.
    double energy(const BrokenFunction& v) const
    {
        double sum = 0.0;
        for (std::size_t e = 0; e < caches_.size(); ++e)
            sum += hlsd::energy(caches_[e], v[e]);
        return sum;
    }

    double energy_norm(const BrokenFunction& v) const { return std::sqrt(std::max(0.0, energy(v))); }

    /// ||g||_{L2_rho}.
    double weighted_norm(const BrokenFunction& g) const
    {
        double sum = 0.0;
        for (std::size_t e = 0; e < caches_.size(); ++e)
            sum += weighted_inner(caches_[e], g[e], g[e]);
        return std::sqrt(std::max(0.0, sum));
    }

    template <class Fn>
    BrokenFunction interpolate(Fn&& fn) const
    {
        return hlsd::interpolate(mesh_, part_, std::forward<Fn>(fn));
    }

    BrokenFunction zero() const { return zero_function(mesh_, part_); }

private:
    WeightField build_weight(WeightChoice weight, const WeightFn& custom) const
    {
        if (weight != WeightChoice::custom)
            return make_weight(weight, field_);
        require(bool(custom), ErrorKind::invalid_argument, "custom weight needs a weight raster");
        const auto cells = custom(mesh_, part_);
        return make_weight(weight, field_, &cells);
    }

    CoarseMesh mesh_;
    FinePartition part_;
    CoefficientField field_;
    WeightField rho_;
    std::vector<ElementCache> caches_;
    SpaceDecomposition dec_;
};

inline BrokenFunction difference(const BrokenFunction& a, const BrokenFunction& b)
{
    BrokenFunction out(a.size());
    for (std::size_t e = 0; e < a.size(); ++e)
        out[e] = a[e] - b[e];
    return out;
}

struct MethodOptions {
    Variant variant = Variant::delta;
    double alpha_stab = 10.0;
    int layers = 2;
    bool force_local = false;
    int threads = 1;
};

struct Solution {
    Eigen::VectorXd u0;
    BrokenFunction u;
    TraceVector lambda;
    TraceVector lambda0;
    TraceVector lambda_tilde0pi;
    TraceVector lambda_delta;
    /// A grad (T lambda + T~ g) per element, one column per fine cell.
    std::vector<Eigen::Matrix2Xd> flux;
    /// max over elements of the interior equilibrium defect, relative to the load scale.
    double equilibrium_residual = 0.0;
    double energy = 0.0;
};

namespace detail {

/// Slot values (3s x k) of the columns of a fine-face matrix as seen from element e.
inline Eigen::MatrixXd element_side_columns(const FinePartition& part, Index e, const Eigen::MatrixXd& cols)
{
    Eigen::MatrixXd out(part.slots_per_element(), cols.cols());
    for (Index q = 0; q < out.rows(); ++q)
        out.row(q) = part.slot_sign(e, q) * cols.row(part.slot_face(e, q));
    return out;
}

/// Fine-face vector of the functional mu -> (mu, T lambda) for each column lambda.
inline Eigen::MatrixXd energy_columns(const FinePartition& part, const std::vector<ElementCache>& caches,
                                      const Eigen::MatrixXd& cols)
{
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cols.rows(), cols.cols());
    for (std::size_t e = 0; e < caches.size(); ++e) {
        const Eigen::MatrixXd loc = caches[e].flux_energy() * element_side_columns(part, Index(e), cols);
        for (Index q = 0; q < loc.rows(); ++q)
            out.row(part.slot_face(Index(e), q)) += part.slot_sign(Index(e), q) * loc.row(q);
    }
    return out;
}

} // namespace detail

/// lambda^0 from (lambda^0, v^0) = -(rho g, v^0) for all piecewise constants.
inline Eigen::VectorXd solve_lambda0(const Problem& p, const BrokenFunction& g)
{
    Eigen::VectorXd rhs(p.mesh().element_count());
    for (Index e = 0; e < rhs.size(); ++e)
        rhs(e) = -p.cache(e).mean_constraint.dot(g[std::size_t(e)]);
    return p.decomposition().solve_pairing(rhs);
}

/// Upscaled LSD method for one (variant, alpha_stab, j). Construction performs every
/// g-independent step; solve() runs the remaining steps for a given load.
class LsdMethod {
public:
    LsdMethod(const Problem& p, MethodOptions opt) : p_(&p), opt_(opt)
    {
        require(opt.layers >= 1, ErrorKind::invalid_argument, "j must be >= 1");
        require(opt.alpha_stab >= 1.0, ErrorKind::invalid_argument, "alpha_stab must be >= 1");
        const CoarseMesh& mesh = p.mesh();
        const FinePartition& part = p.part();
        const Index s = part.subfaces();

        spectra_ = face_spectra(mesh, part, p.caches(), opt.alpha_stab, opt.threads);
        basis_ = make_flux_basis(mesh, part, p.caches(), opt.variant,
                                 opt.variant == Variant::delta ? &spectra_ : nullptr, opt.threads);
        ops_ = std::make_unique<LocalizedOperators>(mesh, part, p.caches(), basis_,
                                                    LocalizeOptions{opt.layers, opt.threads, opt.force_local});

        // Generators: face indicators, then Pi modes of every face.
        const Index nf = mesh.face_count();
        Index npi = 0;
        if (opt.variant == Variant::delta)
            for (const auto& sp : spectra_)
                npi += sp.pi_count();
        pi_count_ = npi;
        generators_ = Eigen::MatrixXd::Zero(part.fine_face_count(), nf + npi);
        Index col = nf;
        for (Index f = 0; f < nf; ++f) {
            generators_.col(f).segment(f * s, s).setOnes();
            if (opt.variant == Variant::delta) {
                const auto& sp = spectra_[std::size_t(f)];
                for (Index k = sp.split; k < sp.size(); ++k)
                    generators_.col(col++).segment(f * s, s) = sp.fine_vectors.col(k);
            }
        }
        const Eigen::MatrixXd& z0 = p.decomposition().face_constant_basis();
        reduction_ = Eigen::MatrixXd::Zero(nf + npi, z0.cols() + npi);
        reduction_.topLeftCorner(nf, z0.cols()) = z0;
        reduction_.bottomRightCorner(npi, npi).setIdentity();

        psi_ = (generators_ - apply_PjT_columns(generators_)) * reduction_;
        energy_psi_ = detail::energy_columns(part, p.caches(), psi_);
        matrix_ = psi_.transpose() * energy_psi_;
        matrix_ = 0.5 * (matrix_ + matrix_.transpose()).eval();
        if (matrix_.rows() > 0) {
            factor_.compute(matrix_);
            require(factor_.info() == Eigen::Success, ErrorKind::spd_violation,
                    "upscaled matrix is not positive definite");
        }
    }

    const Problem& problem() const { return *p_; }
    const MethodOptions& options() const { return opt_; }
    const std::vector<FaceSpectrum>& spectra() const { return spectra_; }
    const FluxBasis& basis() const { return basis_; }
    const LocalizedOperators& operators() const { return *ops_; }
    /// Upscaled matrix in the reduced basis (tilde Lambda^0 basis, then Pi modes).
    const Eigen::MatrixXd& upscaled_matrix() const { return matrix_; }
    /// Fine-face coordinates of the reduced basis of tilde Lambda^{0,Pi}.
    Eigen::MatrixXd upscaled_basis() const { return generators_ * reduction_; }
    Index pi_count() const { return pi_count_; }
    Index upscaled_dim() const { return matrix_.rows(); }

    /// Column-wise P^{Delta,j} T.
    Eigen::MatrixXd apply_PjT_columns(const Eigen::MatrixXd& cols) const { return ops_->apply_PjT_columns(cols); }

    struct UpscaledSystem {
        Eigen::VectorXd rhs;
        Eigen::VectorXd coefficients;
        TraceVector solution;
    };

    /// Right-hand side and solution of the upscaled system for given lambda^0 and T~ g.
    UpscaledSystem solve_upscaled(const TraceVector& lambda0, const BrokenFunction& ttilde_g,
                                  const TraceVector& localized_ttilde) const
    {
        const FinePartition& part = p_->part();
        const Eigen::VectorXd r = trace_functional(p_->mesh(), part, ttilde_g);
        const Eigen::VectorXd psi0 = lambda0.values - ops_->apply_PjT(lambda0).values;
        Eigen::MatrixXd two(part.fine_face_count(), 2);
        two.col(0) = localized_ttilde.values;
        two.col(1) = psi0;
        const Eigen::MatrixXd b = detail::energy_columns(part, p_->caches(), two);
        UpscaledSystem sys;
        sys.rhs = -psi_.transpose() * (r - b.col(0) + b.col(1));
        sys.coefficients = matrix_.rows() > 0 ? Eigen::VectorXd(factor_.solve(sys.rhs)) : Eigen::VectorXd(0);
        sys.solution = TraceVector(upscaled_basis() * sys.coefficients);
        return sys;
    }

    Solution solve(const BrokenFunction& g) const
    {
        const Problem& p = *p_;
        require(g.size() == p.caches().size(), ErrorKind::invalid_argument, "load has the wrong number of elements");
        Solution sol;

        const Eigen::VectorXd c0 = solve_lambda0(p, g);
        sol.lambda0 = p.decomposition().lambda0_combination(c0);

        BrokenFunction tg(g.size());
        for (std::size_t e = 0; e < g.size(); ++e)
            tg[e] = apply_Ttilde(p.caches()[e], g[e]).values;
        const TraceVector ptg = ops_->apply_Pj_function(tg);

        sol.lambda_tilde0pi = solve_upscaled(sol.lambda0, tg, ptg).solution;

        const TraceVector sum0(sol.lambda0.values + sol.lambda_tilde0pi.values);
        sol.lambda_delta = TraceVector(-ops_->apply_PjT(sum0).values - ptg.values);
        sol.lambda = TraceVector(sum0.values + sol.lambda_delta.values);

        return reconstruct(p, sol, g, tg);
    }

    /// Steps after the multiplier: u^0, u, fluxes and equilibrium.
    static Solution reconstruct(const Problem& p, Solution sol, const BrokenFunction& g, const BrokenFunction& tg)
    {
        const FinePartition& part = p.part();
        BrokenFunction w(g.size());
        for (std::size_t e = 0; e < g.size(); ++e) {
            const Eigen::VectorXd side = element_side(part, Index(e), sol.lambda.values);
            w[e] = p.caches()[e].op.flux_response * side + tg[e];
        }
        const Eigen::VectorXd r = trace_functional(p.mesh(), part, w);
        sol.u0 = p.decomposition().solve_pairing(-(p.decomposition().lambda0().transpose() * r));

        sol.u.resize(g.size());
        sol.flux.resize(g.size());
        double defect = 0.0, scale = 0.0;
        for (std::size_t e = 0; e < g.size(); ++e) {
            const ElementCache& c = p.caches()[e];
            sol.u[e] = w[e].array() + sol.u0(Index(e));
            sol.flux[e] = cell_fluxes(c, w[e], part.pattern());
            const Eigen::VectorXd ku = c.stiffness() * sol.u[e];
            const Eigen::VectorXd mg = c.mass * g[e];
            const Eigen::VectorXd gl = c.boundary_pairing * element_side(part, Index(e), sol.lambda.values);
            scale = std::max({scale, ku.cwiseAbs().maxCoeff(), mg.cwiseAbs().maxCoeff(), gl.cwiseAbs().maxCoeff()});
            for (int i : c.interior_nodes)
                defect = std::max(defect, std::abs(ku(i) - mg(i)));
        }
        sol.equilibrium_residual = scale > 0 ? defect / scale : 0.0;
        sol.energy = p.energy(sol.u);
        return sol;
    }

private:
    const Problem* p_;
    MethodOptions opt_;
    std::vector<FaceSpectrum> spectra_;
    FluxBasis basis_;
    std::unique_ptr<LocalizedOperators> ops_;
    Eigen::MatrixXd generators_;
    Eigen::MatrixXd reduction_;
    Eigen::MatrixXd psi_;
    Eigen::MatrixXd energy_psi_;
    Eigen::MatrixXd matrix_;
    Eigen::LLT<Eigen::MatrixXd> factor_;
    Index pi_count_ = 0;
};

/// Elementwise equilibrium defect of (u, g): max |K u - M g| over interior nodes, relative.
inline double equilibrium_residual(const Problem& p, const Solution& sol, const BrokenFunction& g)
{
    double defect = 0.0, scale = 0.0;
    for (std::size_t e = 0; e < g.size(); ++e) {
        const ElementCache& c = p.caches()[e];
        const Eigen::VectorXd ku = c.stiffness() * sol.u[e];
        const Eigen::VectorXd mg = c.mass * g[e];
        scale = std::max({scale, ku.cwiseAbs().maxCoeff(), mg.cwiseAbs().maxCoeff()});
        for (int i : c.interior_nodes)
            defect = std::max(defect, std::abs(ku(i) - mg(i)));
    }
    return scale > 0 ? defect / scale : 0.0;
}

} // namespace hlsd

#endif
