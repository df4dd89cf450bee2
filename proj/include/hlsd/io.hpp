#ifndef HLSD_IO_HPP
#define HLSD_IO_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlsd/error.hpp"
#include "hlsd/localop.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/pipeline.hpp"
#include "hlsd/traces.hpp"

namespace hlsd {

// Trace binary layout: 8-byte magic "HLSDTRC1", uint64 count, then count little-endian
// doubles ordered by global fine-face index (coarse face f, sub-face k at f * subfaces + k).

inline constexpr char trace_magic[8] = {'H', 'L', 'S', 'D', 'T', 'R', 'C', '1'};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v)
{
    static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& in)
{
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    require(bool(in), ErrorKind::io, "truncated binary input");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

} // namespace detail

inline void write_trace_binary(std::ostream& out, const TraceVector& mu)
{
    out.write(trace_magic, sizeof trace_magic);
    detail::put_le<std::uint64_t>(out, std::uint64_t(mu.size()));
    for (Index i = 0; i < mu.size(); ++i)
        detail::put_le<double>(out, mu.values(i));
}

inline TraceVector read_trace_binary(std::istream& in)
{
    char magic[8];
    in.read(magic, sizeof magic);
    require(bool(in) && std::memcmp(magic, trace_magic, sizeof magic) == 0, ErrorKind::parse,
            "not a trace file (bad magic)");
    const auto n = detail::get_le<std::uint64_t>(in);
    TraceVector mu(Eigen::VectorXd(static_cast<Index>(n)));
    for (std::uint64_t i = 0; i < n; ++i)
        mu.values(Index(i)) = detail::get_le<double>(in);
    return mu;
}

/// CSV: fine_face,coarse_face,sub_face,value.
inline void write_trace_csv(std::ostream& out, const FinePartition& part, const TraceVector& mu)
{
    out << "fine_face,coarse_face,sub_face,value\n" << std::setprecision(17);
    for (Index a = 0; a < mu.size(); ++a)
        out << a << ',' << part.coarse_face_of(a) << ',' << a % part.subfaces() << ',' << mu.values(a) << '\n';
}

/// CSV: element,node,x,y,value.
inline void write_broken_csv(std::ostream& out, const CoarseMesh& mesh, const FinePartition& part,
                             const BrokenFunction& v)
{
    out << "element,node,x,y,value\n" << std::setprecision(17);
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Eigen::MatrixX2d x = part.node_positions(mesh, e);
        for (Index i = 0; i < x.rows(); ++i)
            out << e << ',' << i << ',' << x(i, 0) << ',' << x(i, 1) << ',' << v[std::size_t(e)](i) << '\n';
    }
}

/// CSV: element,cell,x,y,flux_x,flux_y (cell centroid and A grad of the non-constant part).
inline void write_flux_csv(std::ostream& out, const CoarseMesh& mesh, const FinePartition& part,
                           const std::vector<Eigen::Matrix2Xd>& flux)
{
    out << "element,cell,x,y,flux_x,flux_y\n" << std::setprecision(17);
    for (Index e = 0; e < Index(flux.size()); ++e)
        for (Index c = 0; c < flux[std::size_t(e)].cols(); ++c) {
            const Point x = part.cell_centroid(mesh, e, int(c));
            out << e << ',' << c << ',' << x.x() << ',' << x.y() << ',' << flux[std::size_t(e)](0, c) << ','
                << flux[std::size_t(e)](1, c) << '\n';
        }
}

namespace detail {

inline void put_matrix(std::ostream& out, const Eigen::MatrixXd& m)
{
    put_le<std::uint64_t>(out, std::uint64_t(m.rows()));
    put_le<std::uint64_t>(out, std::uint64_t(m.cols()));
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i)
            put_le<double>(out, m(i, j));
}

inline Eigen::MatrixXd get_matrix(std::istream& in)
{
    const auto r = get_le<std::uint64_t>(in);
    const auto c = get_le<std::uint64_t>(in);
    Eigen::MatrixXd m(static_cast<Index>(r), static_cast<Index>(c));
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i)
            m(i, j) = get_le<double>(in);
    return m;
}

} // namespace detail

inline constexpr char cache_magic[8] = {'H', 'L', 'S', 'D', 'E', 'C', 'H', '1'};

/// Spills the stiffness and flux-energy matrix of one element, keyed by element id and config hash.
inline void write_cache_blob(std::ostream& out, const ElementCache& c, const std::string& config_hash)
{
    out.write(cache_magic, sizeof cache_magic);
    detail::put_le<std::uint64_t>(out, std::uint64_t(c.element));
    detail::put_le<std::uint64_t>(out, std::uint64_t(config_hash.size()));
    out.write(config_hash.data(), std::streamsize(config_hash.size()));
    detail::put_matrix(out, c.stiffness());
    detail::put_matrix(out, c.flux_energy());
}

struct CacheBlob {
    Index element = 0;
    std::string config_hash;
    Eigen::MatrixXd stiffness;
    Eigen::MatrixXd flux_energy;
};

inline CacheBlob read_cache_blob(std::istream& in)
{
    char magic[8];
    in.read(magic, sizeof magic);
    require(bool(in) && std::memcmp(magic, cache_magic, sizeof magic) == 0, ErrorKind::parse,
            "not an element cache blob (bad magic)");
    CacheBlob b;
    b.element = Index(detail::get_le<std::uint64_t>(in));
    const auto n = detail::get_le<std::uint64_t>(in);
    require(n < 4096, ErrorKind::parse, "cache blob key too long");
    b.config_hash.resize(std::size_t(n));
    in.read(b.config_hash.data(), std::streamsize(n));
    require(bool(in), ErrorKind::io, "truncated cache blob");
    b.stiffness = detail::get_matrix(in);
    b.flux_energy = detail::get_matrix(in);
    return b;
}

inline std::ofstream open_output(const std::string& path, bool binary = false)
{
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    require(bool(out), ErrorKind::io, "cannot write '" + path + "'");
    return out;
}

} // namespace hlsd

#endif
