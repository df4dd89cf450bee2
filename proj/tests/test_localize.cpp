#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace hlsd;
using hlsd::test::make_problem;
using hlsd::test::random_vector;
using hlsd::test::scalar_field;

namespace {

struct Space {
    std::unique_ptr<Problem> p;
    std::vector<FaceSpectrum> spectra;
    FluxBasis basis;

    Space(Index n, Variant v, double alpha_stab = 10.0, int threads = 1)
        : p(make_problem(n, 2, scalar_field(hlsd::test::mixed_a)))
    {
        spectra = face_spectra(p->mesh(), p->part(), p->caches(), alpha_stab);
        basis = make_flux_basis(p->mesh(), p->part(), p->caches(), v, &spectra, threads);
    }
};

/// Trace supported on coarse face f only.
TraceVector on_face(const FinePartition& part, Index f, std::mt19937_64& rng)
{
    TraceVector mu = TraceVector::zero(part);
    mu.values.segment(f * part.subfaces(), part.subfaces()) = random_vector(part.subfaces(), rng);
    return mu;
}

double energy_norm(const Problem& p, const TraceVector& mu)
{
    return std::sqrt(std::max(0.0, energy_pairing(p.part(), p.caches(), mu, mu)));
}

} // namespace

TEST(FluxBasis, DimensionsPerVariant)
{
    Space plain(3, Variant::plain), delta(3, Variant::delta);
    const Index s = plain.p->part().subfaces();
    EXPECT_EQ(plain.basis.dim, plain.p->mesh().face_count() * (s - 1));
    Index split = 0;
    for (const auto& sp : delta.spectra)
        split += sp.split;
    EXPECT_EQ(delta.basis.dim, split);
    EXPECT_LE(delta.basis.dim, plain.basis.dim);
    // A resistive strip produces Pi modes, which leave the active space.
    const auto strip = make_problem(4, 2, scalar_field([](const Point& x) {
        return std::abs(x.y() - 0.375) < 1.0 / 32.0 ? 1e-4 : 1.0;
    }));
    const auto sp = face_spectra(strip->mesh(), strip->part(), strip->caches(), 10.0);
    const FluxBasis b = make_flux_basis(strip->mesh(), strip->part(), strip->caches(), Variant::delta, &sp);
    Index pi = 0;
    for (const auto& x : sp)
        pi += x.pi_count();
    EXPECT_GT(pi, 0);
    EXPECT_EQ(b.dim + pi, strip->mesh().face_count() * (s - 1));
    EXPECT_THROW(make_flux_basis(plain.p->mesh(), plain.p->part(), plain.p->caches(), Variant::delta, nullptr), Error);
    EXPECT_EQ(parse_variant("plain"), Variant::plain);
    EXPECT_EQ(parse_variant("delta"), Variant::delta);
    EXPECT_THROW(parse_variant("pi"), Error);
}

TEST(GlobalProjector, GalerkinOrthogonalityAndInvariance)
{
    for (Variant v : {Variant::plain, Variant::delta}) {
        Space s(3, v);
        const Problem& p = *s.p;
        const GlobalProjector proj(p.mesh(), p.part(), s.basis);
        std::mt19937_64 rng(1);
        const TraceVector lambda(random_vector(p.part().fine_face_count(), rng));
        const TraceVector pl = proj.apply_PT(p.caches(), lambda);
        const TraceVector rest(lambda.values - pl.values);
        for (Index k = 0; k < s.basis.dim; ++k) {
            Eigen::VectorXd x = Eigen::VectorXd::Zero(s.basis.dim);
            x(k) = 1.0;
            const TraceVector mode = s.basis.to_trace(x, p.part());
            EXPECT_LT(std::abs(energy_pairing(p.part(), p.caches(), mode, rest)),
                      1e-9 * energy_norm(p, mode) * energy_norm(p, lambda));
        }
        // Elements of the active space are reproduced.
        const TraceVector mu = hlsd::test::random_in_basis(s.basis, p.part(), rng);
        EXPECT_LT((proj.apply_PT(p.caches(), mu).values - mu.values).norm(), 1e-9 * mu.norm());
        // Best approximation: no random competitor does better.
        const double best = energy_norm(p, rest);
        for (int t = 0; t < 5; ++t) {
            const TraceVector other(pl.values + 1e-3 * hlsd::test::random_in_basis(s.basis, p.part(), rng).values);
            EXPECT_GE(energy_norm(p, TraceVector(lambda.values - other.values)), best * (1 - 1e-12));
        }
    }
}

TEST(GlobalProjector, PairingFunctionalRepresentation)
{
    // P v is the Galerkin representer of mu -> (mu, v): (mu, T P v) = (mu, v) for active mu.
    Space s(3, Variant::delta);
    const Problem& p = *s.p;
    const GlobalProjector proj(p.mesh(), p.part(), s.basis);
    std::mt19937_64 rng(2);
    const BrokenFunction v = hlsd::test::random_function(p, rng);
    const TraceVector pv = proj.apply_P(p.caches(), v);
    for (int t = 0; t < 5; ++t) {
        const TraceVector mu = hlsd::test::random_in_basis(s.basis, p.part(), rng);
        const double lhs = energy_pairing(p.part(), p.caches(), mu, pv);
        const double rhs = pairing(p.mesh(), p.part(), mu, v);
        EXPECT_NEAR(lhs, rhs, 1e-9 * (std::abs(rhs) + energy_norm(p, mu) * energy_norm(p, pv)));
    }
}

TEST(LocalizedOperators, SaturatedPatchesEqualTheGlobalProjector)
{
    for (Variant v : {Variant::plain, Variant::delta}) {
        Space s(3, v);
        const Problem& p = *s.p;
        const int sat = mesh_saturation_layer(p.mesh());
        const LocalizedOperators local(p.mesh(), p.part(), p.caches(), s.basis, {sat, 1, true});
        const LocalizedOperators global(p.mesh(), p.part(), p.caches(), s.basis, {sat, 1, false});
        EXPECT_FALSE(local.uses_global());
        EXPECT_TRUE(global.uses_global());
        std::mt19937_64 rng(3);
        const TraceVector lambda(random_vector(p.part().fine_face_count(), rng));
        const TraceVector a = local.apply_PjT(lambda), b = global.apply_PjT(lambda);
        EXPECT_LT((a.values - b.values).norm(), 1e-9 * b.norm());
        const BrokenFunction g = hlsd::test::random_function(p, rng);
        const TraceVector c = local.apply_Pj_function(g), d = global.apply_Pj_function(g);
        EXPECT_LT((c.values - d.values).norm(), 1e-9 * d.norm());
        EXPECT_LT((d.values - GlobalProjector(p.mesh(), p.part(), s.basis).apply_P(p.caches(), g).values).norm(),
                  1e-12 * d.norm());
    }
}

TEST(LocalizedOperators, FacePatchResponsesStayOnTheActiveFaces)
{
    Space s(4, Variant::plain);
    const Problem& p = *s.p;
    for (int j : {1, 2}) {
        const LocalizedOperators ops(p.mesh(), p.part(), p.caches(), s.basis, {j, 1, false});
        ASSERT_FALSE(ops.uses_global());
        std::mt19937_64 rng(4);
        for (Index f : {Index(0), Index(7), p.mesh().face_count() - 1}) {
            const TraceVector out = ops.apply_PjT(on_face(p.part(), f, rng));
            const PatchProblem& patch = ops.face_patch(f);
            for (Index g = 0; g < p.mesh().face_count(); ++g) {
                const bool active = patch.local_offset(g) >= 0;
                const double norm = out.values.segment(g * p.part().subfaces(), p.part().subfaces()).norm();
                if (!active)
                    EXPECT_EQ(norm, 0.0) << "face " << g << " outside T_" << j << "(F" << f << ")";
            }
            // Active faces are exactly those with every neighbour inside the layer set.
            for (Index g = 0; g < p.mesh().face_count(); ++g) {
                const Face& face = p.mesh().face(g);
                const bool inside = patch.elements.contains(face.left) && (!face.right || patch.elements.contains(*face.right));
                EXPECT_EQ(patch.local_offset(g) >= 0, inside);
            }
        }
    }
}

TEST(LocalizedOperators, FacePatchSolveIsGalerkinOnThePatch)
{
    Space s(4, Variant::delta);
    const Problem& p = *s.p;
    const LocalizedOperators ops(p.mesh(), p.part(), p.caches(), s.basis, {1, 1, false});
    std::mt19937_64 rng(5);
    const Index f = 9;
    const TraceVector lf = on_face(p.part(), f, rng);
    const TraceVector rest(lf.values - ops.apply_PjT(lf).values);
    const PatchProblem& patch = ops.face_patch(f);
    const Index sub = p.part().subfaces();
    for (Index g : patch.faces)
        for (Index k = 0; k < s.basis.face_dofs(g); ++k) {
            TraceVector mode = TraceVector::zero(p.part());
            mode.values.segment(g * sub, sub) = s.basis.modes[std::size_t(g)].col(k);
            EXPECT_LT(std::abs(energy_pairing(p.part(), p.caches(), mode, rest)), 1e-9 * energy_norm(p, lf) * energy_norm(p, mode));
        }
}

TEST(LocalizedOperators, ColumnApplicationMatchesVectorApplication)
{
    Space s(3, Variant::delta);
    const Problem& p = *s.p;
    std::mt19937_64 rng(6);
    Eigen::MatrixXd cols(p.part().fine_face_count(), 4);
    for (Index c = 0; c < cols.cols(); ++c)
        cols.col(c) = random_vector(cols.rows(), rng);
    cols.col(2).setZero();
    for (int j : {1, 2, 100}) {
        const LocalizedOperators ops(p.mesh(), p.part(), p.caches(), s.basis, {j, 1, false});
        const Eigen::MatrixXd out = ops.apply_PjT_columns(cols);
        for (Index c = 0; c < cols.cols(); ++c)
            EXPECT_LT((out.col(c) - ops.apply_PjT(TraceVector(cols.col(c))).values).norm(),
                      1e-10 * (1 + cols.col(c).norm()));
    }
}

TEST(LocalizedOperators, LocalizationErrorShrinksWithLayers)
{
    Space s(6, Variant::delta);
    const Problem& p = *s.p;
    std::mt19937_64 rng(7);
    const TraceVector lambda(random_vector(p.part().fine_face_count(), rng));
    const TraceVector exact = GlobalProjector(p.mesh(), p.part(), s.basis).apply_PT(p.caches(), lambda);
    std::vector<double> err;
    const int sat = mesh_saturation_layer(p.mesh());
    for (int j = 1; j <= sat; ++j) {
        const LocalizedOperators ops(p.mesh(), p.part(), p.caches(), s.basis, {j, 1, true});
        err.push_back(energy_norm(p, TraceVector(ops.apply_PjT(lambda).values - exact.values)));
    }
    EXPECT_GT(err.front(), 100 * err.back());
    EXPECT_LT(err.back(), 1e-8 * energy_norm(p, exact));
    EXPECT_LT(err[2], err[0]);
    EXPECT_THROW(LocalizedOperators(p.mesh(), p.part(), p.caches(), s.basis, {0, 1, false}), Error);
}

TEST(LocalizedOperators, ThreadCountDoesNotChangeResults)
{
    Space a(4, Variant::delta, 10.0, 1), b(4, Variant::delta, 10.0, 3);
    const Problem& p = *a.p;
    std::mt19937_64 rng(8);
    const TraceVector lambda(random_vector(p.part().fine_face_count(), rng));
    const LocalizedOperators one(p.mesh(), p.part(), p.caches(), a.basis, {2, 1, false});
    const LocalizedOperators many(p.mesh(), p.part(), p.caches(), b.basis, {2, 3, false});
    EXPECT_EQ(one.apply_PjT(lambda).values, many.apply_PjT(lambda).values);
}

TEST(RingProfile, EnergiesSumAndGeometricFit)
{
    Space s(5, Variant::delta);
    const Problem& p = *s.p;
    std::mt19937_64 rng(9);
    const TraceVector mu(random_vector(p.part().fine_face_count(), rng));
    const RingProfile prof = ring_energies(p.mesh(), p.part(), p.caches(), mu, Seed::element(12));
    double sum = 0.0;
    for (double e : prof.energies)
        sum += e;
    EXPECT_NEAR(sum, prof.total, 1e-10 * prof.total);
    EXPECT_NEAR(prof.total, energy_pairing(p.part(), p.caches(), mu, mu), 1e-10 * prof.total);
    EXPECT_NEAR(prof.cumulative_fraction().back(), 1.0, 1e-12);
    EXPECT_NEAR(prof.tail_beyond(0), 1.0 - prof.energies[0] / prof.total, 1e-12);
    EXPECT_EQ(int(prof.energies.size()), saturation_layer(p.mesh(), Seed::element(12)));

    std::vector<double> geo;
    for (int r = 0; r < 8; ++r)
        geo.push_back(3.0 * std::pow(0.25, r));
    int used = 0;
    EXPECT_NEAR(fit_geometric_ratio(geo, 4.0, 1, &used), 0.25, 1e-12);
    EXPECT_EQ(used, 7);
    EXPECT_NEAR(fit_geometric_ratio(geo, 4.0, 2, &used, 4), 0.25, 1e-12);
    EXPECT_EQ(used, 3);
    EXPECT_EQ(fit_geometric_ratio({1.0}, 1.0, 0, &used), 0.0);
}
