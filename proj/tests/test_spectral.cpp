#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace hlsd;
using hlsd::test::make_problem;
using hlsd::test::random_vector;
using hlsd::test::scalar_field;

namespace {

Eigen::MatrixXd random_spd(Index n, std::mt19937_64& rng, double shift)
{
    Eigen::MatrixXd x(n, n);
    for (Index j = 0; j < n; ++j)
        x.col(j) = random_vector(n, rng);
    return x * x.transpose() + shift * Eigen::MatrixXd::Identity(n, n);
}

Point face_midpoint(const CoarseMesh& mesh, Index f)
{
    const Face& face = mesh.face(f);
    return 0.5 * (mesh.vertex(face.vertices[0]) + mesh.vertex(face.vertices[1]));
}

} // namespace

TEST(GensymEig, MatchesReferenceSolver)
{
    std::mt19937_64 rng(1);
    for (Index n : {1, 3, 7, 12}) {
        const Eigen::MatrixXd a = random_spd(n, rng, 0.0) - 0.5 * Eigen::MatrixXd::Identity(n, n);
        const Eigen::MatrixXd b = random_spd(n, rng, 0.1);
        const EigenPairs p = gensym_eig(a, b);
        const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ref(a, b);
        EXPECT_LT((p.values - ref.eigenvalues()).norm(), 1e-9 * ref.eigenvalues().cwiseAbs().maxCoeff());
        EXPECT_LT((p.vectors.transpose() * b * p.vectors - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-9);
        EXPECT_LT((a * p.vectors - b * p.vectors * p.values.asDiagonal()).norm(), 1e-8 * a.norm());
        for (Index i = 1; i < n; ++i)
            EXPECT_LE(p.values(i - 1), p.values(i));
    }
}

TEST(GensymEig, ReportsTheFailingPivot)
{
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(4, 4);
    b(2, 2) = -1.0;
    try {
        gensym_eig(Eigen::MatrixXd::Identity(4, 4), b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::spd_violation);
        EXPECT_NE(std::string(e.what()).find("pivot 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(gensym_eig(Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Identity(2, 2)), Error);
}

TEST(FaceSpectrum, EigenvaluesAreAtLeastOneAndHatOrthonormal)
{
    const auto p = make_problem(4, 2, scalar_field(hlsd::test::mixed_a));
    const auto spectra = face_spectra(p->mesh(), p->part(), p->caches(), 10.0);
    ASSERT_EQ(Index(spectra.size()), p->mesh().face_count());
    for (const auto& sp : spectra) {
        ASSERT_EQ(sp.size(), p->part().subfaces() - 1);
        EXPECT_GE(sp.alpha.minCoeff(), 1.0 - 1e-9);
        const Eigen::MatrixXd gram = sp.vectors.transpose() * sp.hat * sp.vectors;
        EXPECT_LT((gram - Eigen::MatrixXd::Identity(sp.size(), sp.size())).norm(), 1e-8);
        // Rayleigh quotients reproduce the eigenvalues.
        for (Index k = 0; k < sp.size(); ++k) {
            const Eigen::VectorXd v = sp.vectors.col(k);
            EXPECT_NEAR(v.dot(sp.full * v) / v.dot(sp.hat * v), sp.alpha(k), 1e-8 * sp.alpha(k));
        }
        // Fine modes have zero mean on the face.
        EXPECT_LT(sp.fine_vectors.colwise().sum().cwiseAbs().maxCoeff(), 1e-10 * (1 + sp.fine_vectors.norm()));
        EXPECT_EQ(sp.split, split_index(sp.alpha, 10.0));
    }
    EXPECT_GE(min_alpha(spectra), 1.0 - 1e-9);
}

TEST(FaceSpectrum, InvariantUnderScalingAndWeight)
{
    const auto a = make_problem(3, 2, scalar_field(hlsd::test::mixed_a));
    const auto b = make_problem(3, 2, scalar_field([](const Point& x) { return 1e3 * hlsd::test::mixed_a(x); }),
                                WeightChoice::a_plus);
    const auto sa = face_spectra(a->mesh(), a->part(), a->caches(), 10.0);
    const auto sb = face_spectra(b->mesh(), b->part(), b->caches(), 10.0);
    for (std::size_t f = 0; f < sa.size(); ++f)
        EXPECT_LT((sa[f].alpha - sb[f].alpha).norm(), 1e-7 * sa[f].alpha.norm()) << "face " << f;
}

TEST(FaceSpectrum, PointReflectedFacesShareTheSpectrum)
{
    // The structured mesh and the coefficient are both symmetric under x -> (1,1) - x.
    auto sym = [](const Point& x) {
        auto bump = [](double u, double v) { return std::exp(-30.0 * ((u - 0.3) * (u - 0.3) + (v - 0.6) * (v - 0.6))); };
        return 1.0 + 400.0 * (bump(x.x(), x.y()) + bump(1 - x.x(), 1 - x.y()));
    };
    const auto p = make_problem(4, 2, scalar_field(sym));
    const auto spectra = face_spectra(p->mesh(), p->part(), p->caches(), 10.0);
    int matched = 0;
    for (Index f = 0; f < p->mesh().face_count(); ++f) {
        const Point m = face_midpoint(p->mesh(), f);
        for (Index g = 0; g < p->mesh().face_count(); ++g) {
            if ((face_midpoint(p->mesh(), g) - (Point(1, 1) - m)).norm() > 1e-12)
                continue;
            ++matched;
            const auto& a = spectra[std::size_t(f)].alpha;
            const auto& b = spectra[std::size_t(g)].alpha;
            EXPECT_LT((a - b).norm(), 1e-8 * a.norm()) << "faces " << f << " and " << g;
        }
    }
    EXPECT_EQ(matched, p->mesh().face_count());
}

TEST(FaceSpectrum, ResistiveChannelAcrossAFaceGivesLargeEigenvalues)
{
    // A low-conductivity strip across the domain, crossing vertical and diagonal faces. The eigenvalues
    // are invariant under scaling, so contrast 1e6 means a / 1e6 inside the strip.
    auto channel = [](const Point& x) { return std::abs(x.y() - 0.375) < 1.0 / 32.0 ? 1e-6 : 1.0; };
    const auto p = make_problem(4, 2, scalar_field(channel));
    const auto spectra = face_spectra(p->mesh(), p->part(), p->caches(), 10.0);
    Index best = -1;
    double top = 0.0;
    for (const auto& sp : spectra)
        if (sp.alpha.maxCoeff() > top) {
            top = sp.alpha.maxCoeff();
            best = sp.face;
        }
    EXPECT_GT(top, 1e3);
    EXPECT_NEAR(max_alpha(spectra), top, 0.0);
    // The top face is crossed by the strip.
    const Face& f = p->mesh().face(best);
    const double y0 = p->mesh().vertex(f.vertices[0]).y(), y1 = p->mesh().vertex(f.vertices[1]).y();
    EXPECT_LT(std::min(y0, y1), 0.375);
    EXPECT_GT(std::max(y0, y1), 0.375);
    // Rayleigh quotient of the top mode, recomputed from the element Schur complements.
    const auto& sp = spectra[std::size_t(best)];
    const Eigen::VectorXd v = sp.vectors.col(sp.size() - 1);
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(sp.size(), sp.size()), hat = full;
    const Eigen::MatrixXd q = zero_mean_basis(p->part().subfaces());
    for (Index e : {f.left, *f.right}) {
        const int k = p->mesh().local_edge(e, best);
        const FaceBlocks b = face_blocks(p->cache(e), p->part(), k, face_basis_local(p->part(), e, k, q));
        full += b.ff;
        hat += b.hat;
    }
    EXPECT_NEAR(v.dot(full * v) / v.dot(hat * v), top, 1e-6 * top);
    EXPECT_GT(sp.pi_count(), 0);

    // Without the channel nothing comes close.
    const auto flat = make_problem(4, 2, hlsd::test::unit_field());
    EXPECT_LT(max_alpha(face_spectra(flat->mesh(), flat->part(), flat->caches(), 10.0)), 1e2);
}

TEST(FaceSpectrum, SplitFollowsTheThreshold)
{
    const Eigen::VectorXd alpha = (Eigen::VectorXd(5) << 1.0, 2.0, 9.99, 10.0, 50.0).finished();
    EXPECT_EQ(split_index(alpha, 10.0), 3);
    EXPECT_EQ(split_index(alpha, 1.0), 0);
    EXPECT_EQ(split_index(alpha, 1e9), 5);
    const auto p = make_problem(3, 2, scalar_field(hlsd::test::mixed_a));
    auto spectra = face_spectra(p->mesh(), p->part(), p->caches(), 10.0);
    resplit(spectra, 1.0);
    for (const auto& sp : spectra)
        EXPECT_EQ(sp.delta_count(), 0);
    resplit(spectra, 1e12);
    for (const auto& sp : spectra)
        EXPECT_EQ(sp.pi_count(), 0);
    EXPECT_THROW(resplit(spectra, 0.5), Error);
    EXPECT_THROW(face_spectrum(p->mesh(), p->part(), p->caches(), 0, 0.9), Error);
}

TEST(FaceSpectrum, ParallelMatchesSequential)
{
    const auto p = make_problem(3, 2, scalar_field(hlsd::test::mixed_a));
    const auto a = face_spectra(p->mesh(), p->part(), p->caches(), 10.0, 1);
    const auto b = face_spectra(p->mesh(), p->part(), p->caches(), 10.0, 4);
    for (std::size_t f = 0; f < a.size(); ++f) {
        EXPECT_EQ(a[f].alpha, b[f].alpha);
        EXPECT_EQ(a[f].vectors, b[f].vectors);
    }
}

TEST(SelectJ, CountsModesBelowTheThreshold)
{
    const Eigen::VectorXd sigma = (Eigen::VectorXd(6) << 0.0, 0.5, 3.0, 3.9, 4.0, 100.0).finished();
    // threshold 1 / (c_J target^2) = 4 for target 0.5, c_J 1.
    EXPECT_EQ(select_J(sigma, 0.5, 1.0), 4);
    EXPECT_EQ(select_J(sigma, 10.0, 1.0), 1);
    EXPECT_EQ(select_J(sigma, 1e-3, 1.0), 6);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v{0.0};
        for (int i = 0; i < 9; ++i)
            v.push_back(u(rng));
        std::sort(v.begin(), v.end());
        const Eigen::VectorXd s = Eigen::Map<Eigen::VectorXd>(v.data(), Index(v.size()));
        const double target = 0.1 + 0.5 * u(rng) / 50.0, c = 0.5 + u(rng) / 25.0;
        Index brute = 0;
        for (double x : v)
            brute += x < 1.0 / (c * target * target);
        EXPECT_EQ(select_J(s, target, c), std::max<Index>(1, brute));
    }
}

TEST(ElementSpectrum, NeumannModesAndTruncation)
{
    const auto p = make_problem(2, 1, scalar_field(hlsd::test::mixed_a), WeightChoice::a_plus);
    const double target = p->mesh().mesh_size() / 4.0;
    const auto spectra = element_spectra(p->caches(), target);
    for (std::size_t e = 0; e < spectra.size(); ++e) {
        const auto& sp = spectra[e];
        const ElementCache& c = p->cache(Index(e));
        EXPECT_NEAR(sp.sigma(0), 0.0, 1e-8 * sp.sigma(1));
        EXPECT_GT(sp.sigma(1), 0.0);
        const Eigen::VectorXd v0 = sp.vectors.col(0);
        EXPECT_LT((v0.array() - v0(0)).abs().maxCoeff(), 1e-8 * std::abs(v0(0)));
        EXPECT_LT((sp.vectors.transpose() * c.mass * sp.vectors - Eigen::MatrixXd::Identity(sp.sigma.size(), sp.sigma.size())).norm(), 1e-8);
        EXPECT_EQ(sp.J, select_J(sp.sigma, target, 1.0));
        if (sp.J < sp.sigma.size())
            EXPECT_DOUBLE_EQ(sp.truncation_bound(), 1.0 / std::sqrt(sp.sigma(sp.J)));
    }
    const auto all = element_spectra(p->caches(), 1e-9);
    for (const auto& sp : all) {
        EXPECT_EQ(sp.J, sp.sigma.size());
        EXPECT_EQ(sp.truncation_bound(), 0.0);
    }
    EXPECT_THROW(element_spectrum(p->cache(0), 0.0), Error);
}

TEST(ProjectRhs, PoincareBoundAndProjectorProperties)
{
    const auto p = make_problem(3, 1, scalar_field(hlsd::test::mixed_a), WeightChoice::a_plus);
    const auto spectra = element_spectra(p->caches(), p->mesh().mesh_size() / 3.0);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const BrokenFunction g = hlsd::test::random_function(*p, rng);
        const RhsProjection pr = project_rhs(g, spectra, p->caches());
        const RhsProjection twice = project_rhs(pr.projected, spectra, p->caches());
        for (std::size_t e = 0; e < g.size(); ++e) {
            const ElementCache& c = p->cache(Index(e));
            const Eigen::VectorXd r = g[e] - pr.projected[e];
            // Idempotent, and the remainder is rho-orthogonal to the kept modes.
            EXPECT_LT((twice.projected[e] - pr.projected[e]).norm(), 1e-9 * (1 + pr.projected[e].norm()));
            EXPECT_LT((spectra[e].vectors.leftCols(spectra[e].J).transpose() * c.mass * r).norm(),
                      1e-9 * (1 + g[e].norm()));
            // ||g - Pi_J g||_rho <= sigma_{J+1}^{-1/2} |g - Pi_J g|_A <= sigma_{J+1}^{-1/2} |g|_A.
            EXPECT_LE(pr.remainder[e], spectra[e].truncation_bound() * std::sqrt(energy(c, r)) * (1 + 1e-9));
            EXPECT_LE(std::sqrt(energy(c, r)), std::sqrt(energy(c, g[e])) * (1 + 1e-9));
            EXPECT_LE(spectra[e].truncation_bound(), pr.bound_factor);
        }
    }
}
