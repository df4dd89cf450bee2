#ifndef HLSD_SPECTRAL_HPP
#define HLSD_SPECTRAL_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hlsd/error.hpp"
#include "hlsd/localop.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/parallel.hpp"
#include "hlsd/traces.hpp"

namespace hlsd {

struct EigenPairs {
    Eigen::VectorXd values;  ///< ascending
    Eigen::MatrixXd vectors; ///< B-orthonormal columns
};

/// Dense generalized symmetric eigenproblem A v = lambda B v with B SPD.
inline EigenPairs gensym_eig(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    const Index n = a.rows();
    require(a.cols() == n && b.rows() == n && b.cols() == n, ErrorKind::invalid_argument,
            "eigenproblem matrices must be square and of equal size");
    // Cholesky written out so the failing pivot can be reported.
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        double d = b(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > 0.0) || !std::isfinite(d))
            throw Error(ErrorKind::spd_violation,
                        "mass matrix is not positive definite: Cholesky pivot " + std::to_string(j) + " is " +
                            std::to_string(d));
        l(j, j) = std::sqrt(d);
        for (Index i = j + 1; i < n; ++i)
            l(i, j) = (0.5 * (b(i, j) + b(j, i)) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
    const auto tri = l.triangularView<Eigen::Lower>();
    Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::MatrixXd c = tri.solve(sym);
    c = tri.solve(c.transpose()).eval();
    c = 0.5 * (c + c.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    require(es.info() == Eigen::Success, ErrorKind::singular, "symmetric eigensolver did not converge");
    EigenPairs out;
    out.values = es.eigenvalues();
    out.vectors = l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
    return out;
}

/// Face eigenproblem result. Vectors are coefficients over the face's zero-mean basis;
/// `fine_vectors` holds the same modes in fine-face coordinates (face orientation).
struct FaceSpectrum {
    Index face = 0;
    Eigen::VectorXd alpha;
    Eigen::MatrixXd vectors;
    Eigen::MatrixXd fine_vectors;
    /// Modes [0, split) form the Delta block, [split, m) the Pi block.
    Index split = 0;
    double alpha_stab = 0.0;
    /// Right-hand side matrix of the eigenproblem (sum of Schur complements).
    Eigen::MatrixXd hat;
    Eigen::MatrixXd full;

    Index size() const { return alpha.size(); }
    Index delta_count() const { return split; }
    Index pi_count() const { return alpha.size() - split; }
};

inline Index split_index(const Eigen::VectorXd& alpha, double alpha_stab)
{
    Index split = 0;
    while (split < alpha.size() && !(alpha(split) >= alpha_stab))
        ++split;
    return split;
}

/// Solves the enrichment eigenproblem of coarse face f from the incident elements' caches.
inline FaceSpectrum face_spectrum(const CoarseMesh& mesh, const FinePartition& part,
                                  const std::vector<ElementCache>& caches, Index f, double alpha_stab)
{
    require(alpha_stab >= 1.0, ErrorKind::invalid_argument, "alpha_stab must be >= 1");
    const Index s = part.subfaces();
    const Eigen::MatrixXd q = zero_mean_basis(s);
    FaceSpectrum out;
    out.face = f;
    out.alpha_stab = alpha_stab;
    const Index m = q.cols();
    out.full = Eigen::MatrixXd::Zero(m, m);
    out.hat = Eigen::MatrixXd::Zero(m, m);
    if (m == 0) {
        out.alpha.resize(0);
        out.vectors.resize(0, 0);
        out.fine_vectors.resize(s, 0);
        return out;
    }
    const Face& face = mesh.face(f);
    std::vector<Index> elems{face.left};
    if (face.right)
        elems.push_back(*face.right);
    for (Index e : elems) {
        const int k = mesh.local_edge(e, f);
        const FaceBlocks blocks = face_blocks(caches[std::size_t(e)], part, k, face_basis_local(part, e, k, q));
        out.full += blocks.ff;
        out.hat += blocks.hat;
    }
    out.full = 0.5 * (out.full + out.full.transpose()).eval();
    EigenPairs pairs = gensym_eig(out.full, out.hat);
    out.alpha = pairs.values;
    out.vectors = pairs.vectors;
    out.fine_vectors = q * out.vectors;
    out.split = split_index(out.alpha, alpha_stab);
    return out;
}

inline std::vector<FaceSpectrum> face_spectra(const CoarseMesh& mesh, const FinePartition& part,
                                              const std::vector<ElementCache>& caches, double alpha_stab,
                                              int threads = 1)
{
    std::vector<FaceSpectrum> out(std::size_t(mesh.face_count()));
    parallel_for(out.size(), threads, [&](std::size_t f) {
        out[f] = face_spectrum(mesh, part, caches, Index(f), alpha_stab);
    });
    return out;
}

/// Re-applies a threshold to already computed spectra.
inline void resplit(std::vector<FaceSpectrum>& spectra, double alpha_stab)
{
    require(alpha_stab >= 1.0, ErrorKind::invalid_argument, "alpha_stab must be >= 1");
    for (auto& s : spectra) {
        s.alpha_stab = alpha_stab;
        s.split = split_index(s.alpha, alpha_stab);
    }
}

inline double max_alpha(const std::vector<FaceSpectrum>& spectra)
{
    double m = 1.0;
    for (const auto& s : spectra)
        if (s.alpha.size() > 0)
            m = std::max(m, s.alpha.maxCoeff());
    return m;
}

inline double min_alpha(const std::vector<FaceSpectrum>& spectra)
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : spectra)
        if (s.alpha.size() > 0)
            m = std::min(m, s.alpha.minCoeff());
    return m;
}

/// Neumann eigenpairs K v = sigma M v of one element with the truncation index J.
struct ElementSpectrum {
    Index element = 0;
    Eigen::VectorXd sigma;
    Eigen::MatrixXd vectors;
    Index J = 1;
    double c_J = 1.0;
    double target = 1.0;

    /// sigma_{J+1}^{-1/2}, or 0 when every mode is kept.
    double truncation_bound() const
    {
        return J < sigma.size() ? 1.0 / std::sqrt(sigma(J)) : 0.0;
    }
};

/// J = smallest J >= 1 with 1 / sigma_{J+1} <= c_J * target^2 (all modes if none qualifies).
inline Index select_J(const Eigen::VectorXd& sigma, double target, double c_J)
{
    const double threshold = 1.0 / (c_J * target * target);
    Index j = 1;
    while (j < sigma.size() && sigma(j) < threshold)
        ++j;
    return j;
}

inline ElementSpectrum element_spectrum(const ElementCache& cache, double target, double c_J = 1.0)
{
    require(target > 0 && c_J > 0, ErrorKind::invalid_argument, "target precision and c_J must be positive");
    ElementSpectrum out;
    out.element = cache.element;
    out.target = target;
    out.c_J = c_J;
    EigenPairs pairs = gensym_eig(cache.stiffness(), cache.mass);
    out.sigma = pairs.values;
    out.sigma(0) = std::max(0.0, out.sigma(0));
    out.vectors = pairs.vectors;
    out.J = select_J(out.sigma, target, c_J);
    return out;
}

inline std::vector<ElementSpectrum> element_spectra(const std::vector<ElementCache>& caches, double target,
                                                    double c_J = 1.0, int threads = 1)
{
    std::vector<ElementSpectrum> out(caches.size());
    parallel_for(out.size(), threads, [&](std::size_t e) { out[e] = element_spectrum(caches[e], target, c_J); });
    return out;
}

struct RhsProjection {
    BrokenFunction projected;
    /// ||g - Pi_J g||_{L2_rho(tau)} per element.
    std::vector<double> remainder;
    /// max over elements of sigma_{J+1}^{-1/2}.
    double bound_factor = 0.0;
};

/// Elementwise L2_rho projection onto the first J eigenfunctions.
inline RhsProjection project_rhs(const BrokenFunction& g, const std::vector<ElementSpectrum>& spectra,
                                 const std::vector<ElementCache>& caches)
{
    RhsProjection out;
    out.projected.resize(g.size());
    out.remainder.resize(g.size());
    for (std::size_t e = 0; e < g.size(); ++e) {
        const auto& sp = spectra[e];
        const auto& c = caches[e];
        const Eigen::MatrixXd v = sp.vectors.leftCols(sp.J);
        out.projected[e] = v * (v.transpose() * (c.mass * g[e]));
        const Eigen::VectorXd r = g[e] - out.projected[e];
        out.remainder[e] = std::sqrt(std::max(0.0, weighted_inner(c, r, r)));
        out.bound_factor = std::max(out.bound_factor, sp.truncation_bound());
    }
    return out;
}

inline nlohmann::json spectrum_json(const std::vector<FaceSpectrum>& faces, const std::vector<ElementSpectrum>* elements)
{
    nlohmann::json j;
    j["faces"] = nlohmann::json::array();
    for (const auto& s : faces) {
        std::vector<double> alpha(s.alpha.data(), s.alpha.data() + s.alpha.size());
        j["faces"].push_back({{"face", s.face}, {"alpha", alpha}, {"split", s.split}, {"alpha_stab", s.alpha_stab}});
    }
    if (elements) {
        j["elements"] = nlohmann::json::array();
        for (const auto& s : *elements) {
            const Index keep = std::min<Index>(s.sigma.size(), s.J + 1);
            std::vector<double> head(s.sigma.data(), s.sigma.data() + keep);
            j["elements"].push_back({{"element", s.element},
                                     {"J", s.J},
                                     {"sigma_head", head},
                                     {"truncation_bound", s.truncation_bound()}});
        }
    }
    return j;
}

} // namespace hlsd

#endif
