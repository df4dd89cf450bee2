#ifndef HLSD_TESTS_SUPPORT_HPP
#define HLSD_TESTS_SUPPORT_HPP

#include <functional>
#include <memory>
#include <random>

#include "hlsd/hlsd.hpp"

namespace hlsd::test {

inline Problem::FieldFn scalar_field(std::function<double(const Point&)> a)
{
    return [a](const CoarseMesh& m, const FinePartition& p) { return CoefficientField::sample_scalar(m, p, a); };
}

inline Problem::FieldFn unit_field()
{
    return scalar_field([](const Point&) { return 1.0; });
}

inline std::unique_ptr<Problem> make_problem(Index n, int level, const Problem::FieldFn& field,
                                             WeightChoice w = WeightChoice::one, bool twin = false)
{
    return std::make_unique<Problem>(build_structured_mesh(n, n), level, 1, field, w, 1, twin);
}

inline double smooth_a(const Point& x)
{
    return 1.0 + 0.5 * std::sin(2 * std::numbers::pi * x.x()) * std::sin(2 * std::numbers::pi * x.y());
}

/// Scalar field mixing a smooth part, a jump across x = 0.5 and a high-contrast inclusion.
inline double mixed_a(const Point& x)
{
    double a = smooth_a(x) * (x.x() < 0.5 ? 1.0 : 50.0);
    if (std::abs(x.x() - 0.3) < 0.06 && std::abs(x.y() - 0.6) < 0.06)
        a *= 1e4;
    return a;
}

inline double smooth_g(const Point& x) { return std::sin(3 * x.x()) + x.y() * x.y(); }

inline Eigen::VectorXd random_vector(Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> d;
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i)
        v(i) = d(rng);
    return v;
}

inline BrokenFunction random_function(const Problem& p, std::mt19937_64& rng)
{
    BrokenFunction v = p.zero();
    for (auto& ve : v)
        ve = random_vector(ve.size(), rng);
    return v;
}

/// Random element of tilde Lambda^f_h: zero mean on every coarse face.
inline TraceVector random_tilde_f(const FinePartition& part, std::mt19937_64& rng)
{
    TraceVector mu(random_vector(part.fine_face_count(), rng));
    const Index s = part.subfaces();
    for (Index a = 0; a < mu.size(); a += s)
        mu.values.segment(a, s).array() -= mu.values.segment(a, s).mean();
    return mu;
}

/// Random combination of the given flux basis modes.
inline TraceVector random_in_basis(const FluxBasis& b, const FinePartition& part, std::mt19937_64& rng)
{
    return b.to_trace(random_vector(b.dim, rng), part);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

} // namespace hlsd::test

#endif
