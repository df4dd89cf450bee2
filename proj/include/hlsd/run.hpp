#ifndef HLSD_RUN_HPP
#define HLSD_RUN_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hlsd/coeff.hpp"
#include "hlsd/error.hpp"
#include "hlsd/mesh.hpp"
#include "hlsd/oracles.hpp"
#include "hlsd/pipeline.hpp"
#include "hlsd/presets.hpp"
#include "hlsd/spectral.hpp"

namespace hlsd {

struct MeshSpec {
    Index nx = 4, ny = 4;
    Rectangle domain;
    /// When set, the mesh is read from this file instead of generated.
    std::string file;
};

/// Load g, interpolated into the broken P1 space.
struct RhsSpec {
    /// constant | sine | smooth | random
    std::string kind = "smooth";
    double value = 1.0;
    std::uint64_t seed = 1;
};

struct SolverConfig {
    MeshSpec mesh;
    int face_level = 2;
    int interior_extra = 1;
    /// Exactly one of preset / raster is used; the raster path wins when set.
    PresetSpec preset;
    std::string raster;
    WeightChoice weight = WeightChoice::one;
    std::string weight_raster;
    RhsSpec rhs;
    Variant variant = Variant::delta;
    double alpha_stab = 10.0;
    int layers = 2;
    bool force_local = false;
    /// Target precision H~; 0 means the coarse mesh size H.
    double target = 0.0;
    double c_J = 1.0;
    bool rhs_reduction = false;
    bool monolithic_oracle = false;
    bool conforming_oracle = false;
    double equilibrium_tol = 1e-10;
    int threads = 1;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t offset)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Reads typed values out of a parsed config and reports problems at the key's location.
class ConfigReader {
public:
    ConfigReader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const
    {
        const std::size_t at = text_.find("\"" + key + "\"");
        const auto [line, col] = line_col(text_, at == std::string::npos ? 0 : at);
        throw Error(ErrorKind::parse,
                    source_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }

    template <class T>
    void get(const nlohmann::json& obj, const char* key, T& out) const
    {
        if (!obj.contains(key))
            return;
        try {
            out = obj.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            fail(key, std::string("bad value for '") + key + "': " + e.what());
        }
    }

    void check_keys(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> allowed) const
    {
        if (!obj.is_object())
            fail(where, "'" + where + "' must be an object");
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& item : obj.items())
            if (!ok.count(item.key()))
                fail(item.key(), "unknown key '" + item.key() + "' in " + where);
    }

private:
    const std::string& text_;
    std::string source_;
};

} // namespace detail

/// Parses the JSON config text. Syntax and schema errors carry "source:line:col".
inline SolverConfig parse_config(const std::string& text, const std::string& source = "config")
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        throw Error(ErrorKind::parse, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
    const detail::ConfigReader rd(text, source);
    SolverConfig c;
    rd.check_keys(j, "config",
                  {"mesh", "face_level", "interior_extra", "coefficient", "weight", "rhs", "method", "rhs_reduction",
                   "oracles", "tolerances", "threads", "experiment"});
    if (j.contains("mesh")) {
        const auto& m = j["mesh"];
        rd.check_keys(m, "mesh", {"nx", "ny", "domain", "file"});
        rd.get(m, "nx", c.mesh.nx);
        rd.get(m, "ny", c.mesh.ny);
        rd.get(m, "file", c.mesh.file);
        if (m.contains("domain")) {
            std::vector<double> d;
            rd.get(m, "domain", d);
            if (d.size() != 4)
                rd.fail("domain", "domain must be [x0, y0, x1, y1]");
            c.mesh.domain = Rectangle{d[0], d[1], d[2], d[3]};
        }
    }
    rd.get(j, "face_level", c.face_level);
    rd.get(j, "interior_extra", c.interior_extra);
    rd.get(j, "threads", c.threads);
    if (j.contains("coefficient")) {
        const auto& a = j["coefficient"];
        rd.check_keys(a, "coefficient", {"preset", "raster"});
        rd.get(a, "raster", c.raster);
        if (a.contains("preset")) {
            const auto& p = a["preset"];
            rd.check_keys(p, "preset", {"name", "contrast", "width", "position", "low", "count", "resolution"});
            try {
                c.preset = preset_from_json(p);
            } catch (const nlohmann::json::exception& e) {
                rd.fail("preset", std::string("bad preset: ") + e.what());
            }
        }
    }
    if (j.contains("weight")) {
        const auto& w = j["weight"];
        std::string choice = "one";
        if (w.is_string()) {
            choice = w.get<std::string>();
        } else {
            rd.check_keys(w, "weight", {"choice", "raster"});
            rd.get(w, "choice", choice);
            rd.get(w, "raster", c.weight_raster);
        }
        try {
            c.weight = parse_weight_choice(choice);
        } catch (const Error& e) {
            rd.fail("weight", e.what());
        }
    }
    if (j.contains("rhs")) {
        const auto& r = j["rhs"];
        rd.check_keys(r, "rhs", {"kind", "value", "seed"});
        rd.get(r, "kind", c.rhs.kind);
        rd.get(r, "value", c.rhs.value);
        rd.get(r, "seed", c.rhs.seed);
    }
    if (j.contains("method")) {
        const auto& m = j["method"];
        rd.check_keys(m, "method", {"variant", "alpha_stab", "layers", "force_local"});
        std::string v = to_string(c.variant);
        rd.get(m, "variant", v);
        try {
            c.variant = parse_variant(v);
        } catch (const Error& e) {
            rd.fail("variant", e.what());
        }
        rd.get(m, "alpha_stab", c.alpha_stab);
        rd.get(m, "layers", c.layers);
        rd.get(m, "force_local", c.force_local);
    }
    if (j.contains("rhs_reduction")) {
        const auto& r = j["rhs_reduction"];
        rd.check_keys(r, "rhs_reduction", {"enabled", "target", "c_J"});
        rd.get(r, "enabled", c.rhs_reduction);
        rd.get(r, "target", c.target);
        rd.get(r, "c_J", c.c_J);
    }
    if (j.contains("oracles")) {
        const auto& o = j["oracles"];
        rd.check_keys(o, "oracles", {"monolithic", "conforming"});
        rd.get(o, "monolithic", c.monolithic_oracle);
        rd.get(o, "conforming", c.conforming_oracle);
    }
    if (j.contains("tolerances")) {
        const auto& t = j["tolerances"];
        rd.check_keys(t, "tolerances", {"equilibrium"});
        rd.get(t, "equilibrium", c.equilibrium_tol);
    }

    {
        const auto names = preset_names();
        if (std::find(names.begin(), names.end(), c.preset.name) == names.end())
            rd.fail("name", "unknown preset '" + c.preset.name + "'");
        const std::set<std::string> kinds{"constant", "sine", "smooth", "random"};
        if (!kinds.count(c.rhs.kind))
            rd.fail("kind", "unknown rhs kind '" + c.rhs.kind + "'");
    }
    if (c.mesh.file.empty() && (c.mesh.nx < 1 || c.mesh.ny < 1))
        rd.fail("nx", "mesh dimensions must be >= 1");
    if (c.face_level < 0)
        rd.fail("face_level", "face_level must be >= 0");
    if (c.interior_extra < 1)
        rd.fail("interior_extra", "interior_extra must be >= 1");
    if (c.layers < 1)
        rd.fail("layers", "j must be >= 1");
    if (!(c.alpha_stab >= 1.0))
        rd.fail("alpha_stab", "alpha_stab must be >= 1");
    if (c.target < 0)
        rd.fail("target", "target precision must be positive (0 selects H)");
    if (!(c.c_J > 0))
        rd.fail("c_J", "c_J must be positive");
    if (c.threads < 1)
        rd.fail("threads", "threads must be >= 1");
    return c;
}

inline SolverConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    require(bool(in), ErrorKind::io, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

inline nlohmann::json config_to_json(const SolverConfig& c)
{
    nlohmann::json j;
    j["mesh"] = {{"nx", c.mesh.nx},
                 {"ny", c.mesh.ny},
                 {"domain", {c.mesh.domain.x0, c.mesh.domain.y0, c.mesh.domain.x1, c.mesh.domain.y1}},
                 {"file", c.mesh.file}};
    j["face_level"] = c.face_level;
    j["interior_extra"] = c.interior_extra;
    j["coefficient"] = {{"preset", preset_to_json(c.preset)}, {"raster", c.raster}};
    j["weight"] = {{"choice", to_string(c.weight)}, {"raster", c.weight_raster}};
    j["rhs"] = {{"kind", c.rhs.kind}, {"value", c.rhs.value}, {"seed", c.rhs.seed}};
    j["method"] = {{"variant", to_string(c.variant)},
                   {"alpha_stab", c.alpha_stab},
                   {"layers", c.layers},
                   {"force_local", c.force_local}};
    j["rhs_reduction"] = {{"enabled", c.rhs_reduction}, {"target", c.target}, {"c_J", c.c_J}};
    j["oracles"] = {{"monolithic", c.monolithic_oracle}, {"conforming", c.conforming_oracle}};
    j["tolerances"] = {{"equilibrium", c.equilibrium_tol}};
    j["threads"] = c.threads;
    return j;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& data)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of the canonical config echo; threads are excluded since they do not change results.
inline std::string config_hash(const SolverConfig& c)
{
    nlohmann::json j = config_to_json(c);
    j.erase("threads");
    return fnv1a_hex(j.dump());
}

/// Runs fn and tags any untagged library error with `stage`.
template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const Error& e) {
        if (!e.stage().empty())
            throw;
        throw e.with_stage(stage);
    }
}

inline CoarseMesh build_mesh(const MeshSpec& m)
{
    if (!m.file.empty())
        return load_mesh(m.file);
    require(m.domain.width() > 0 && m.domain.height() > 0, ErrorKind::invalid_argument,
            "domain must have positive side lengths");
    return build_structured_mesh(m.nx, m.ny, m.domain);
}

inline Problem::FieldFn field_source(const SolverConfig& c, const Rectangle& domain)
{
    Raster raster;
    if (!c.raster.empty()) {
        raster = load_raster(c.raster);
    } else {
        PresetSpec spec = c.preset;
        spec.domain = domain;
        raster = make_preset(spec);
    }
    return [raster](const CoarseMesh& mesh, const FinePartition& part) { return raster.to_field(mesh, part); };
}

inline Problem::WeightFn weight_source(const SolverConfig& c)
{
    if (c.weight != WeightChoice::custom)
        return {};
    require(!c.weight_raster.empty(), ErrorKind::invalid_argument, "custom weight needs weight.raster");
    const Raster r = load_raster(c.weight_raster);
    require(!r.tensor, ErrorKind::invalid_argument, "weight raster must be scalar");
    return [r](const CoarseMesh& mesh, const FinePartition& part) {
        std::vector<std::vector<double>> cells(std::size_t(mesh.element_count()));
        for (Index e = 0; e < mesh.element_count(); ++e)
            for (int k = 0; k < part.pattern().cell_count(); ++k)
                cells[std::size_t(e)].push_back(r.values[std::size_t(r.cell_at(part.cell_centroid(mesh, e, k)))]);
        return cells;
    };
}

inline std::unique_ptr<Problem> build_problem(const SolverConfig& c, int interior_extra_override = 0,
                                              bool identity_twin = false)
{
    CoarseMesh mesh = staged("mesh", [&] { return build_mesh(c.mesh); });
    Rectangle domain{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const Point& p : mesh.vertices()) {
        domain.x0 = std::min(domain.x0, p.x());
        domain.y0 = std::min(domain.y0, p.y());
        domain.x1 = std::max(domain.x1, p.x());
        domain.y1 = std::max(domain.y1, p.y());
    }
    const auto field = staged("coefficient", [&] { return field_source(c, domain); });
    const auto weight = staged("weight", [&] { return weight_source(c); });
    const int extra = interior_extra_override > 0 ? interior_extra_override : c.interior_extra;
    return staged("assembly", [&] {
        return std::make_unique<Problem>(std::move(mesh), c.face_level, extra, field, c.weight, c.threads,
                                         identity_twin, weight);
    });
}

/// g as a function of position for the analytic kinds.
inline std::function<double(const Point&)> rhs_function(const RhsSpec& r)
{
    const double a = r.value;
    if (r.kind == "constant")
        return [a](const Point&) { return a; };
    if (r.kind == "sine")
        return [a](const Point& x) {
            return a * std::sin(std::numbers::pi * x.x()) * std::sin(std::numbers::pi * x.y());
        };
    if (r.kind == "smooth")
        return [a](const Point& x) { return a * (std::sin(3.0 * x.x()) + x.y() * x.y()); };
    throw Error(ErrorKind::invalid_argument, "unknown rhs kind '" + r.kind + "'");
}

inline BrokenFunction make_rhs(const Problem& p, const RhsSpec& r)
{
    if (r.kind == "random") {
        std::mt19937_64 rng(r.seed);
        std::uniform_real_distribution<double> dist(-r.value, r.value);
        BrokenFunction g = p.zero();
        for (auto& ge : g)
            for (Index i = 0; i < ge.size(); ++i)
                ge(i) = dist(rng);
        return g;
    }
    return p.interpolate(rhs_function(r));
}

inline double target_precision(const SolverConfig& c, const CoarseMesh& mesh)
{
    return c.target > 0 ? c.target : mesh.mesh_size();
}

struct PipelineResult {
    Solution solution;
    BrokenFunction g;
    /// Load actually used by the method (Pi_J g when reduction is on).
    BrokenFunction g_used;
    nlohmann::json report;
};

/// Mesh, rho, optional rhs reduction, spaces, lambda^0, localized operators, upscaled solve,
/// Delta recovery, u^0 and reconstruction, with a JSON report of every diagnostic.
inline PipelineResult full_pipeline(const SolverConfig& cfg, std::unique_ptr<Problem>* keep = nullptr)
{
    using clock = std::chrono::steady_clock;
    nlohmann::json timings;
    auto timed = [&](const char* stage, auto&& fn) {
        const auto t0 = clock::now();
        auto out = staged(stage, fn);
        timings[stage] = std::chrono::duration<double>(clock::now() - t0).count();
        return out;
    };

    PipelineResult res;
    nlohmann::json& rep = res.report;
    rep["config"] = config_to_json(cfg);
    rep["config_hash"] = config_hash(cfg);

    std::unique_ptr<Problem> owned = timed("setup", [&] { return build_problem(cfg); });
    const Problem& p = *owned;
    const double target = target_precision(cfg, p.mesh());

    res.g = timed("rhs", [&] { return make_rhs(p, cfg.rhs); });
    res.g_used = res.g;
    nlohmann::json reduction = {{"enabled", cfg.rhs_reduction}};
    if (cfg.rhs_reduction) {
        const auto proj = timed("rhs_reduction", [&] {
            const auto spectra = element_spectra(p.caches(), target, cfg.c_J, cfg.threads);
            std::vector<Index> js;
            for (const auto& s : spectra)
                js.push_back(s.J);
            reduction["J_min"] = *std::min_element(js.begin(), js.end());
            reduction["J_max"] = *std::max_element(js.begin(), js.end());
            return project_rhs(res.g, spectra, p.caches());
        });
        res.g_used = proj.projected;
        const double gn = p.weighted_norm(res.g);
        reduction["target"] = target;
        reduction["c_J"] = cfg.c_J;
        reduction["bound_factor"] = proj.bound_factor;
        reduction["error_bound"] = proj.bound_factor * gn;
        double rem = 0.0;
        for (double r : proj.remainder)
            rem += r * r;
        reduction["remainder_norm"] = std::sqrt(rem);
    }

    MethodOptions opt;
    opt.variant = cfg.variant;
    opt.alpha_stab = cfg.alpha_stab;
    opt.layers = cfg.layers;
    opt.force_local = cfg.force_local;
    opt.threads = cfg.threads;
    auto method = timed("localize", [&] { return std::make_unique<LsdMethod>(p, opt); });
    res.solution = timed("solve", [&] { return method->solve(res.g_used); });
    const Solution& sol = res.solution;

    const SpaceDecomposition& dec = p.decomposition();
    const ContrastStats cs = local_bounds(p.field(), p.mesh(), p.part());
    rep["dimensions"] = {{"elements", p.mesh().element_count()},
                         {"faces", p.mesh().face_count()},
                         {"fine_faces", p.part().fine_face_count()},
                         {"nodes_per_element", p.part().pattern().node_count()},
                         {"lambda0", dec.dim_lambda0()},
                         {"tilde_lambda0", dec.dim_tilde0()},
                         {"tilde_lambda_f", dec.dim_tilde_f()},
                         {"pi_modes", method->pi_count()},
                         {"upscaled", method->upscaled_dim()}};
    rep["mesh"] = {{"H", p.mesh().mesh_size()},
                   {"h", p.part().h()},
                   {"saturation_layer", mesh_saturation_layer(p.mesh())},
                   {"uses_global_projector", method->operators().uses_global()}};
    rep["contrast"] = {{"a_min", p.field().a_min()},
                       {"a_max", p.field().a_max()},
                       {"kappa", cs.global_kappa},
                       {"beta", cs.beta},
                       {"rho_min", p.rho().rho_min},
                       {"rho_max", p.rho().rho_max}};
    rep["spectrum"] = {{"max_alpha", max_alpha(method->spectra())},
                       {"min_alpha", min_alpha(method->spectra())},
                       {"alpha_stab", cfg.alpha_stab}};
    rep["rhs_reduction"] = reduction;
    rep["solution"] = {{"energy", sol.energy},
                       {"g_weighted_norm", p.weighted_norm(res.g)},
                       {"equilibrium_residual", sol.equilibrium_residual},
                       {"equilibrium_ok", sol.equilibrium_residual <= cfg.equilibrium_tol}};

    nlohmann::json oracles = nlohmann::json::object();
    if (cfg.monolithic_oracle) {
        timed("oracle_monolithic", [&] {
            const HybridSolution ex = exact_hybrid_solve(p, res.g);
            const double ref = p.energy_norm(ex.u);
            const double err = p.energy_norm(difference(sol.u, ex.u));
            oracles["monolithic"] = {{"reference", "monolithic hybrid saddle solve, unreduced g"},
                                     {"config_hash", rep["config_hash"]},
                                     {"energy_error", err},
                                     {"energy_error_relative", ref > 0 ? err / ref : err}};
            if (cfg.rhs_reduction) {
                const HybridSolution exj = exact_hybrid_solve(p, res.g_used);
                const double d = p.energy_norm(difference(ex.u, exj.u));
                oracles["monolithic"]["reduction_error"] = d;
                oracles["monolithic"]["reduction_bound_holds"] =
                    d <= rep["rhs_reduction"]["error_bound"].get<double>() * (1 + 1e-9) + 1e-14;
            }
            return 0;
        });
    }
    if (cfg.conforming_oracle) {
        timed("oracle_conforming", [&] {
            const BrokenFunction uc = conforming_fine_solve(p, res.g);
            const double err = p.energy_norm(difference(sol.u, uc));
            const double gn = p.weighted_norm(res.g);
            oracles["conforming"] = {{"reference", "conforming P1 solve on the union fine mesh"},
                                     {"config_hash", rep["config_hash"]},
                                     {"energy_error", err},
                                     {"measured_precision", gn > 0 ? err / gn : 0.0},
                                     {"target", target}};
            return 0;
        });
    }
    rep["oracles"] = oracles;
    rep["timings"] = timings;
    if (keep)
        *keep = std::move(owned);
    return res;
}

} // namespace hlsd

#endif
