#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "flow_engine.hpp"
#include "holder_metrics.hpp"
#include "integrability.hpp"
#include "kernel_engine.hpp"
#include "proxy_solver.hpp"
#include "spectral_models.hpp"

namespace stablab::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* tool_version = "stablab 0.1.0";

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"kernel", "pbeta", "kolokoltsov", "flow", "proxy", "solve", "schauder", "fracop"};
    return k;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------------------------
// Config reading: every key is consumed explicitly, leftovers are errors.

class Block {
public:
    Block(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) throw ValidationError((path_.empty() ? std::string("config") : path_) + ": expected an object");
    }

    bool has(const std::string& k) const { return j_->contains(k); }
    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    [[noreturn]] void fail(const std::string& k, const std::string& msg) const { throw ValidationError(key(k) + ": " + msg); }

    double num(const std::string& k) {
        const json& v = at(k);
        if (!v.is_number()) fail(k, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(k, "not finite");
        return x;
    }
    double num(const std::string& k, double def) { return has(k) ? num(k) : def; }
    double positive(const std::string& k, double def) {
        const double x = num(k, def);
        if (!(x > 0)) fail(k, "must be positive");
        return x;
    }
    std::size_t count(const std::string& k, std::size_t def) {
        if (!has(k)) return def;
        const json& v = at(k);
        if (!v.is_number_integer() || v.get<long long>() <= 0) fail(k, "expected a positive integer");
        return static_cast<std::size_t>(v.get<long long>());
    }
    std::string str(const std::string& k) {
        const json& v = at(k);
        if (!v.is_string()) fail(k, "expected a string");
        return v.get<std::string>();
    }
    std::string str(const std::string& k, const std::string& def) { return has(k) ? str(k) : def; }
    std::string choice(const std::string& k, const std::string& def, const std::vector<std::string>& allowed) {
        const std::string s = str(k, def);
        if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) fail(k, "unknown value '" + s + "'");
        return s;
    }
    std::vector<double> nums(const std::string& k) {
        const json& v = at(k);
        if (!v.is_array() || v.empty()) fail(k, "expected a non-empty array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(k, "expected a non-empty array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<double> nums(const std::string& k, std::vector<double> def) { return has(k) ? nums(k) : def; }
    Point point(const std::string& k, int dim, Point def = {0, 0}) {
        if (!has(k)) return def;
        const auto v = nums(k);
        if (static_cast<int>(v.size()) != dim) fail(k, "expected " + std::to_string(dim) + " components");
        return {v[0], dim == 2 ? v[1] : 0.0};
    }
    Block child(const std::string& k) {
        const json& v = at(k);
        if (!v.is_object()) fail(k, "expected an object");
        return Block(v, key(k));
    }
    void mark(const std::string& k) { at(k); }
    void close() const {
        for (const auto& it : j_->items())
            if (!seen_.count(it.key())) throw ValidationError(key(it.key()) + ": unknown key");
    }

private:
    const json& at(const std::string& k) {
        if (!has(k)) fail(k, "missing");
        seen_.insert(k);
        return j_->at(k);
    }
    const json* j_;
    std::string path_;
    std::set<std::string> seen_;
};

struct GridBlock {
    bool given = false;  // half_extent set explicitly; kernel runs otherwise use the admissible box
    double half_extent = M_PI;
    std::size_t n = 0;  // 0: kind default
};

struct TimeBlock {
    std::vector<double> t;
    double T = 0.25;
    std::vector<double> lags;
};

struct Params {
    double beta = 0.5, gamma = 0.5, theta = 0.7, K = 1;
    double tau = 0, h = 1e-3, time_step = 1e-3, tol = 1e-6;
    Point xi{};
    std::vector<double> offsets{0, 10, 100}, eps_ladder{0.04, 0.02, 0.01};
    std::string solver = "both", source = "cos", terminal = "bump";
    std::size_t slices = 32, nodes = 64, pairs = 200, probe_n = std::size_t{1} << 18;
};

struct Tolerances {
    double normalization = 1e-3, slope = 0.05, variation = 0.2, residual = 1e-2, gap = 1e-2;
    std::optional<double> refinement;  // kind default when absent
};

struct ExperimentConfig {
    std::string kind;
    std::uint64_t seed = 1;
    std::string output;
    json effective;  // hashed form: parsed file with overrides applied, output removed
    std::optional<StableModel> model;
    std::optional<DriftField> drift;
    std::string drift_kind;
    GridBlock grid;
    TimeBlock time;
    Params params;
    Tolerances tol;
    int dim = 1;

    std::string hash() const { return hex64(fnv1a(effective.dump())); }
};

namespace detail {

inline StableModel parse_model(Block b) {
    const std::string kname = b.str("kind");
    Kind kind;
    try {
        kind = parse_kind(kname);
    } catch (const ValidationError& e) {
        b.fail("kind", e.what());
    }
    const double alpha = b.num("alpha");
    const int dim = static_cast<int>(b.count("dim", 1));
    if (dim != 1 && dim != 2) b.fail("dim", "must be 1 or 2");
    StableModel m;
    try {
        switch (kind) {
            case Kind::IsotropicFractional:
                if (b.has("spectral") && b.str("spectral") != "uniform") b.fail("spectral", "IsotropicFractional takes 'uniform'");
                m = isotropic(alpha, dim);
                break;
            case Kind::SmoothSpectralDensity:
                if (!b.has("spectral")) b.fail("spectral", "missing (table of the angular density)");
                m = smooth_density(alpha, dim, b.nums("spectral"));
                break;
            case Kind::Cylindrical:
                if (b.has("spectral") && b.str("spectral") != "atoms") b.fail("spectral", "Cylindrical takes 'atoms'");
                m = cylindrical(alpha, dim, b.nums("atoms", {}));
                break;
            case Kind::Truncated: m = truncated(alpha, dim, b.num("trunc_radius")); break;
            case Kind::Relativistic: m = relativistic(alpha, dim, b.num("mass")); break;
        }
    } catch (const ValidationError& e) {
        const std::string w = e.what();
        if (w.rfind("model.", 0) == 0) throw;
        throw ValidationError("model: " + w);
    }
    b.close();
    return m;
}

inline DriftField parse_drift(Block b, int dim, std::string& kind) {
    kind = b.choice("kind", "zero", {"zero", "constant", "linear", "holder_bump", "holder_cusp", "power", "shifted_sin"});
    DriftField F;
    try {
        if (kind == "zero") {
            F = zero_drift(dim);
        } else if (kind == "constant") {
            const auto v = b.nums("vector");
            if (static_cast<int>(v.size()) != dim) b.fail("vector", "expected " + std::to_string(dim) + " components");
            F = constant_drift(v);
        } else if (kind == "linear") {
            const auto A = b.nums("matrix");
            if (static_cast<int>(A.size()) != dim * dim) b.fail("matrix", "expected " + std::to_string(dim * dim) + " entries");
            F = linear_drift(A, b.num("beta", 0.5));
        } else if (kind == "holder_bump" || kind == "holder_cusp") {
            const double K0 = b.num("K0", 1), beta = b.num("beta", 0.5);
            const Point c = b.point("center", dim);
            F = kind == "holder_bump" ? holder_bump(K0, beta, c, dim) : holder_cusp(K0, beta, c, dim);
        } else if (kind == "power") {
            F = power_drift(b.num("K0", 1), b.num("beta", 0.5), dim);
        } else {
            F = shifted_sin(b.num("offset", 0), b.num("amplitude", 1), b.num("beta", 0.5), dim);
        }
    } catch (const ValidationError& e) {
        const std::string w = e.what();
        if (w.rfind("drift.", 0) == 0) throw;
        throw ValidationError("drift: " + w);
    }
    b.close();
    return F;
}

inline void parse_params(Block b, Params& p, int dim) {
    p.beta = b.num("beta", p.beta);
    p.gamma = b.num("gamma", p.gamma);
    p.theta = b.num("theta", p.theta);
    p.K = b.positive("K", p.K);
    p.tau = b.num("tau", p.tau);
    p.xi = b.point("xi", dim, p.xi);
    p.h = b.positive("h", p.h);
    p.time_step = b.positive("time_step", p.time_step);
    p.tol = b.positive("tol", p.tol);
    p.offsets = b.nums("offsets", p.offsets);
    p.eps_ladder = b.nums("eps_ladder", p.eps_ladder);
    p.solver = b.choice("solver", p.solver, {"duhamel", "viscosity", "both"});
    p.source = b.choice("source", p.source, {"cos", "zero", "one"});
    p.terminal = b.choice("terminal", p.terminal, {"bump", "cos", "zero", "one"});
    p.slices = b.count("slices", p.slices);
    p.nodes = b.count("nodes", p.nodes);
    p.pairs = b.count("pairs", p.pairs);
    p.probe_n = b.count("probe_n", p.probe_n);
    b.close();
}

inline void parse_tolerances(Block b, Tolerances& t) {
    t.normalization = b.positive("normalization", t.normalization);
    t.slope = b.positive("slope", t.slope);
    t.variation = b.positive("variation", t.variation);
    t.residual = b.positive("residual", t.residual);
    t.gap = b.positive("gap", t.gap);
    if (b.has("refinement")) t.refinement = b.positive("refinement", 1);
    b.close();
}

}  // namespace detail

/// Parses a config tree. Overrides (seed, output) are applied by the caller on the json first.
inline ExperimentConfig parse_config(const json& j, const std::string& kind_hint = "") {
    Block root(j, "");
    ExperimentConfig c;
    c.kind = root.has("kind") ? root.choice("kind", "", experiment_kinds()) : kind_hint;
    if (c.kind.empty()) root.fail("kind", "missing");
    if (!kind_hint.empty() && c.kind != kind_hint)
        root.fail("kind", "config is for '" + c.kind + "' but the command is '" + kind_hint + "'");
    if (root.has("seed")) {
        const json& s = j.at("seed");
        if (!s.is_number_integer() || s.get<long long>() < 0) root.fail("seed", "expected a non-negative integer");
        c.seed = s.get<std::uint64_t>();
        root.mark("seed");
    }
    c.output = root.str("output", "");

    static const std::map<std::string, std::pair<std::set<std::string>, std::set<std::string>>> blocks{
        // kind -> (required, optional)
        {"kernel", {{"model"}, {"time", "grid", "tolerances"}}},
        {"pbeta", {{"model"}, {"params", "time", "grid", "tolerances"}}},
        {"kolokoltsov", {{"model"}, {"params", "time", "grid", "tolerances"}}},
        {"flow", {{"model", "drift"}, {"params", "time", "tolerances"}}},
        {"proxy", {{"model", "drift"}, {"params", "time", "grid", "tolerances"}}},
        {"solve", {{"model", "drift"}, {"params", "time", "grid", "tolerances"}}},
        {"schauder", {{"model", "drift"}, {"params", "time", "grid", "tolerances"}}},
        {"fracop", {{}, {"model", "params", "grid", "tolerances"}}},
    };
    const auto& [req, opt] = blocks.at(c.kind);
    for (const char* name : {"model", "drift", "params", "time", "grid", "tolerances"}) {
        const bool present = root.has(name);
        if (req.count(name) && !present) root.fail(name, "required for kind '" + c.kind + "'");
        if (present && !req.count(name) && !opt.count(name)) root.fail(name, "not used by kind '" + c.kind + "'");
    }

    if (root.has("model")) {
        c.model = detail::parse_model(root.child("model"));
        c.dim = c.model->dim;
    }
    if (root.has("grid")) {
        Block g = root.child("grid");
        c.grid.given = g.has("half_extent");
        c.grid.half_extent = g.positive("half_extent", M_PI);
        c.grid.n = g.count("n", 0);
        if (c.grid.n && (c.grid.n < 64 || (c.grid.n & (c.grid.n - 1)))) g.fail("n", "must be a power of two >= 64");
        g.close();
    }
    if (root.has("time")) {
        Block t = root.child("time");
        c.time.t = t.nums("t", {});
        for (double v : c.time.t)
            if (!(v > 0)) t.fail("t", "times must be positive");
        c.time.T = t.positive("T", c.time.T);
        c.time.lags = t.nums("lags", {});
        for (double v : c.time.lags)
            if (!(v > 0)) t.fail("lags", "lags must be positive");
        t.close();
    }
    if (root.has("params")) detail::parse_params(root.child("params"), c.params, c.dim);
    if (root.has("drift")) c.drift = detail::parse_drift(root.child("drift"), c.dim, c.drift_kind);
    if (root.has("tolerances")) detail::parse_tolerances(root.child("tolerances"), c.tol);
    root.close();

    const bool solver_kind = c.kind == "proxy" || c.kind == "solve" || c.kind == "schauder";
    if (solver_kind) {
        if (!(c.params.beta > 0 && c.params.beta < 1)) throw ValidationError("params.beta: must lie in (0,1)");
        if (c.model->alpha + c.params.beta <= 1)
            throw ValidationError("params.beta: alpha + beta must exceed 1 (alpha = " + std::to_string(c.model->alpha) + ")");
        if (c.model->kind == Kind::Relativistic || c.model->kind == Kind::Truncated)
            throw ValidationError("model.kind: solvers take symmetric stable models");
    }
    if (c.kind == "schauder" && c.drift_kind != "shifted_sin" && j.contains("params") && j.at("params").contains("offsets"))
        throw ValidationError("params.offsets: only meaningful for a shifted_sin drift");
    if (c.kind == "pbeta" && !(c.params.beta > 0 && c.params.beta < 1))
        throw ValidationError("params.beta: must lie in (0,1)");

    c.effective = j;
    c.effective.erase("output");
    c.effective["kind"] = c.kind;
    c.effective["seed"] = c.seed;
    return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::string& kind_hint = "",
                                    std::optional<std::uint64_t> seed = std::nullopt) {
    std::ifstream is(path);
    require(static_cast<bool>(is), "config: cannot open " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ValidationError("config: " + path + ": " + e.what());
    }
    if (seed && j.is_object()) j["seed"] = *seed;
    return parse_config(j, kind_hint);
}

// ---------------------------------------------------------------------------------------------
// Manifest

struct Check {
    std::string name;
    std::string verdict;    // PASS, FAIL or DIVERGENT
    double value = 0, threshold = 0;
    std::string invariant;  // the property under test
};

struct RunManifest {
    std::string kind, config_hash, version = tool_version;
    std::uint64_t seed = 1;
    double wall_seconds = 0;  // written to timing.json, not to the manifest
    std::vector<Check> checks;
    std::map<std::string, double> metrics;
    std::vector<std::string> artifacts;  // relative to the output directory

    // non-finite numbers are stored as null (no threshold, undefined slope)
    static json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
    static double real(const json& v) { return v.is_null() ? NAN : v.get<double>(); }

    bool any_fail() const {
        return std::any_of(checks.begin(), checks.end(), [](const Check& c) { return c.verdict == "FAIL"; });
    }

    json to_json() const {
        json j;
        j["tool"] = version;
        j["kind"] = kind;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["checks"] = json::array();
        for (const auto& c : checks)
            j["checks"].push_back({{"name", c.name}, {"verdict", c.verdict}, {"value", number(c.value)},
                                   {"threshold", number(c.threshold)}, {"invariant", c.invariant}});
        j["metrics"] = json::object();
        for (const auto& [k, v] : metrics) j["metrics"][k] = number(v);
        j["artifacts"] = artifacts;
        return j;
    }

    static RunManifest from_json(const json& j) {
        RunManifest m;
        try {
            m.version = j.at("tool").get<std::string>();
            m.kind = j.at("kind").get<std::string>();
            m.config_hash = j.at("config_hash").get<std::string>();
            m.seed = j.at("seed").get<std::uint64_t>();
            for (const auto& c : j.at("checks"))
                m.checks.push_back({c.at("name"), c.at("verdict"), real(c.at("value")), real(c.at("threshold")), c.at("invariant")});
            for (const auto& [k, v] : j.at("metrics").items()) m.metrics[k] = real(v);
            m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ValidationError(std::string("manifest: ") + e.what());
        }
        return m;
    }
};

inline RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), "manifest: cannot open " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest: " + path + ": " + e.what());
    }
    return RunManifest::from_json(j);
}

// ---------------------------------------------------------------------------------------------
// Static plots

struct Series {
    std::string label;
    std::vector<double> x, y;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

inline const char* palette(std::size_t i) {
    static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return c[i % 6];
}

}  // namespace detail

/// Line plot; with loglog both axes are log10 and non-positive points are dropped.
inline void write_line_svg(const std::string& path, const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<Series>& series, bool loglog = false) {
    const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    auto tx = [loglog](double v) { return loglog ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (loglog && (s.x[i] <= 0 || s.y[i] <= 0)) continue;
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, tx(s.y[i]));
            y1 = std::max(y1, tx(s.y[i]));
        }
    if (!(x1 > x0)) x0 -= 1, x1 += 1;
    if (!(y1 > y0)) y0 -= 1, y1 += 1;
    auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double v) { return H - mb - (tx(v) - y0) / (y1 - y0) * (H - mt - mb); };
    std::ofstream os(path);
    require(static_cast<bool>(os), "plot: cannot open " + path);
    using detail::fmt;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title) << "</text>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    const std::string pre = loglog ? "log10 " : "";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << pre
       << detail::escape(xlabel) << " [" << fmt(x0) << ", " << fmt(x1) << "]</text>\n"
       << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
       << ")\" text-anchor=\"middle\">" << pre << detail::escape(ylabel) << " [" << fmt(y0) << ", " << fmt(y1) << "]</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (loglog && (s.x[i] <= 0 || s.y[i] <= 0)) continue;
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            os << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
        }
        os << "\"/>\n<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 16 * (k + 1) << "\" font-size=\"12\" fill=\""
           << detail::palette(k) << "\">" << detail::escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
}

inline void write_bar_svg(const std::string& path, const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
    require(labels.size() == values.size() && !values.empty(), "plot: bar labels and values differ");
    const double W = 640, H = 420, ml = 60, mb = 60, mt = 40;
    double vmax = 0;
    for (double v : values)
        if (std::isfinite(v)) vmax = std::max(vmax, v);
    if (vmax <= 0) vmax = 1;
    const double bw = (W - ml - 20) / values.size();
    std::ofstream os(path);
    require(static_cast<bool>(os), "plot: cannot open " + path);
    using detail::fmt;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title) << "</text>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::isfinite(values[i]) ? values[i] : 0;
        const double h = v / vmax * (H - mt - mb);
        const double x = ml + i * bw + 0.1 * bw;
        os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(H - mb - h) << "\" width=\"" << fmt(0.8 * bw) << "\" height=\""
           << fmt(h) << "\" fill=\"" << detail::palette(0) << "\"/>\n"
           << "<text x=\"" << fmt(x + 0.4 * bw) << "\" y=\"" << fmt(H - mb - h - 4) << "\" text-anchor=\"middle\" font-size=\"11\">"
           << fmt(values[i]) << "</text>\n"
           << "<text x=\"" << fmt(x + 0.4 * bw) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << detail::escape(labels[i]) << "</text>\n";
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------------------------
// Running

namespace detail {

/// Output directory held for one run; a lock file rejects concurrent runs into it.
class RunDir {
public:
    explicit RunDir(const std::string& dir) : dir_(dir) {
        require(!dir.empty(), "output: no output directory (set 'output' or --out)");
        fs::create_directories(dir_);
        lock_ = dir_ / ".stablab.lock";
        std::FILE* f = std::fopen(lock_.c_str(), "wx");
        if (!f) throw ValidationError("output: directory is locked by another run: " + dir_.string());
        std::fclose(f);
    }
    ~RunDir() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }
    RunDir(const RunDir&) = delete;
    RunDir& operator=(const RunDir&) = delete;

    /// Path for an artifact; records it in the manifest list.
    std::string add(RunManifest& m, const std::string& name) const {
        m.artifacts.push_back(name);
        return (dir_ / name).string();
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
    fs::path dir_, lock_;
};

inline std::ofstream csv(const std::string& path) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot open " + path);
    os.precision(17);
    return os;
}

inline std::string tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline void check(RunManifest& m, const std::string& name, bool ok, double value, double threshold, const std::string& inv) {
    m.checks.push_back({name, ok ? "PASS" : "FAIL", value, threshold, inv});
}

/// Runs body; numerical guards are reported with the scenario id.
template <class Fn>
auto scenario(const std::string& id, Fn&& body) {
    try {
        return body();
    } catch (const NumericalGuard& e) {
        throw NumericalGuard("scenario '" + id + "': " + e.what());
    }
}

inline Problem make_problem(const ExperimentConfig& c) {
    Problem P;
    P.model = *c.model;
    P.drift = *c.drift;
    P.beta = c.params.beta;
    P.T = c.time.T;
    P.grid = GridSpec(c.dim, c.grid.half_extent, c.grid.n ? c.grid.n : 512);
    const int dim = c.dim;
    if (c.params.source == "cos") P.f = cos_source(1.0);
    else if (c.params.source == "one") P.f = [](double, const Point&) { return 1.0; };
    else P.f = [](double, const Point&) { return 0.0; };
    if (c.params.terminal == "bump") P.g = smoothed_bump(1.0, {0, 0}, dim);
    else if (c.params.terminal == "cos") P.g = [](const Point& x) { return std::cos(x[0]); };
    else if (c.params.terminal == "one") P.g = [](const Point&) { return 1.0; };
    else P.g = [](const Point&) { return 0.0; };
    return P;
}

inline void write_snapshots(const SpaceTimeField& u, const RunDir& d, RunManifest& m, const std::string& stem) {
    const std::size_t K = u.u.size() - 1;
    const std::size_t ks[3] = {0, K / 2, K};
    {
        auto os = csv(d.add(m, stem + "_snapshots.csv"));
        os << "x";
        for (std::size_t k : ks) os << ",u_t" << tag(u.times[k]);
        os << '\n';
        const std::size_t N = u.grid.n;
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t i = u.grid.dim == 1 ? j : j * N + N / 2;
            os << u.grid.coord(j);
            for (std::size_t k : ks) os << ',' << u.u[k][i];
            os << '\n';
        }
    }
    std::vector<Series> ser;
    for (std::size_t k : ks) {
        Series s{"t=" + tag(u.times[k]), {}, {}};
        const std::size_t N = u.grid.n;
        for (std::size_t j = 0; j < N; ++j) {
            s.x.push_back(u.grid.coord(j));
            s.y.push_back(u.u[k][u.grid.dim == 1 ? j : j * N + N / 2]);
        }
        ser.push_back(std::move(s));
    }
    write_line_svg(d.add(m, stem + "_snapshots.svg"), "solution snapshots", "x", "u", ser);
    write_space_time(u, d.add(m, stem + ".sips"));
}

inline void run_kernel(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const StableModel& mod = *c.model;
    const auto ts = c.time.t.empty() ? std::vector<double>{1.0} : c.time.t;
    const std::size_t n = c.grid.n ? c.grid.n : (c.dim == 1 ? 4096 : 256);
    std::vector<Series> prof;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double t = ts[i];
        const std::string id = "kernel/t=" + tag(t);
        const DensityField f = scenario(id, [&] {
            const GridSpec g = c.grid.given ? GridSpec(c.dim, c.grid.half_extent, n) : admissible_grid(mod, t, n);
            return density(mod, t, g);
        });
        const std::string stem = "density_t" + tag(t);
        write_density(f, d.add(m, stem + ".bin"));
        write_radial_csv(f, d.add(m, stem + "_radial.csv"));
        const double err = std::abs(f.total_mass() - 1);
        m.metrics["normalization_error_t" + tag(t)] = err;
        m.metrics["tail_mass_t" + tag(t)] = f.tail_mass_estimate;
        check(m, "normalization_t" + tag(t), err <= c.tol.normalization, err, c.tol.normalization,
              "kernel_engine: the density integrates to one");
        Series s{"t=" + tag(t), {}, {}};
        const std::size_t N = f.grid.n;
        for (std::size_t j = N / 2; j < N; ++j) {
            s.x.push_back(f.grid.coord(j));
            s.y.push_back(f.p[f.grid.dim == 1 ? j : j * N + N / 2]);
        }
        prof.push_back(std::move(s));
    }
    write_line_svg(d.add(m, "density_profiles.svg"), std::string(kind_name(mod.kind)) + " radial profiles", "r", "p", prof);
}

inline void run_pbeta(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    PBetaOptions opt;
    if (!c.time.t.empty()) opt.t_values = c.time.t;
    opt.n = c.grid.n;
    opt.tolerance = c.tol.slope;
    const auto rep = scenario("pbeta/beta=" + tag(c.params.beta), [&] { return pbeta_report(*c.model, c.params.beta, opt); });
    const std::string v = verdict_name(rep.verdict);
    const double dev = rep.verdict == Verdict::Divergent
                           ? NAN
                           : std::max(std::abs(rep.first.fitted_slope - rep.first.theoretical_slope),
                                      std::abs(rep.second.fitted_slope - rep.second.theoretical_slope));
    m.checks.push_back({"pbeta_exponents", v, dev, c.tol.slope,
                        "integrability: moment integrals scale like t^{(beta-k)/alpha}, or diverge"});
    if (rep.verdict == Verdict::Divergent) {
        auto os = csv(d.add(m, "divergence.csv"));
        os << "extent,integral\n";
        for (std::size_t i = 0; i < rep.divergence.extents.size(); ++i)
            os << rep.divergence.extents[i] << ',' << rep.divergence.integrals[i] << '\n';
        write_line_svg(d.add(m, "divergence.svg"), "truncated moment vs box", "extent", "integral",
                       {{"k=1", rep.divergence.extents, rep.divergence.integrals}}, true);
        return;
    }
    write_probe_csv(rep.first, d.add(m, "probe_k1.csv"));
    write_probe_csv(rep.second, d.add(m, "probe_k2.csv"));
    for (const auto* pr : {&rep.first, &rep.second}) {
        const std::string k = std::to_string(pr->derivative_order);
        m.metrics["slope_k" + k] = pr->fitted_slope;
        m.metrics["theory_k" + k] = pr->theoretical_slope;
    }
    write_line_svg(d.add(m, "pbeta_slopes.svg"), "moment integrals", "t", "I_k",
                   {{"k=1", rep.first.t_values, rep.first.integrals}, {"k=2", rep.second.t_values, rep.second.integrals}}, true);
}

inline void run_kolokoltsov(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const auto ts = c.time.t.empty() ? std::vector<double>{0.25, 0.5, 1.0} : c.time.t;
    const std::size_t n = c.grid.n ? c.grid.n : (c.dim == 1 ? 2048 : 256);
    const auto st = scenario("kolokoltsov", [&] { return kolokoltsov_stability(*c.model, c.params.K, ts, n); });
    {
        auto os = csv(d.add(m, "envelopes.csv"));
        os << "t,gradient,hess_near,hess_far,gradient_fine,hess_near_fine,hess_far_fine\n";
        for (std::size_t i = 0; i < ts.size(); ++i)
            os << ts[i] << ',' << st.coarse[i].gradient << ',' << st.coarse[i].hess_near << ',' << st.coarse[i].hess_far << ','
               << st.fine[i].gradient << ',' << st.fine[i].hess_near << ',' << st.fine[i].hess_far << '\n';
    }
    Series a{"gradient", ts, {}}, b{"hess_near", ts, {}}, e{"hess_far", ts, {}};
    for (const auto& r : st.coarse) {
        a.y.push_back(r.gradient);
        b.y.push_back(r.hess_near);
        e.y.push_back(r.hess_far);
    }
    write_line_svg(d.add(m, "envelopes.svg"), "pointwise envelopes", "t", "constant", {a, b, e}, true);
    const double ref = c.tol.refinement.value_or(0.05);
    m.metrics["across_t"] = st.across_t;
    m.metrics["refinement"] = st.refinement;
    check(m, "envelopes_across_t", st.across_t <= c.tol.variation, st.across_t, c.tol.variation,
          "integrability: envelope constants do not depend on t");
    check(m, "envelopes_refinement", st.refinement <= ref, st.refinement, ref,
          "integrability: envelope constants are grid converged");
}

inline void run_flow(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const auto& F = *c.drift;
    const double until = c.params.tau + c.time.T;
    const auto tr = scenario("flow/trajectory", [&] { return integrate_flow(F, c.params.tau, c.params.xi, until, c.params.h); });
    write_trajectory_csv(tr, c.dim, d.add(m, "trajectory.csv"));
    Series s{"theta_0", tr.times, {}};
    for (const auto& p : tr.points) s.y.push_back(p[0]);
    std::vector<Series> ser{s};
    if (c.dim == 2) {
        Series s1{"theta_1", tr.times, {}};
        for (const auto& p : tr.points) s1.y.push_back(p[1]);
        ser.push_back(s1);
    }
    write_line_svg(d.add(m, "trajectory.svg"), "flow of " + F.name, "s", "theta", ser);
    m.metrics["flow_error_estimate"] = tr.error();
    const auto pairs = random_flow_pairs(c.params.pairs, c.dim, c.seed);
    const auto st = scenario("flow/stability", [&] { return flow_stability_check(F, c.model->alpha, pairs); });
    {
        auto os = csv(d.add(m, "stability_ratios.csv"));
        os << "t,s,x0,xp0,ratio\n";
        for (std::size_t i = 0; i < pairs.size(); ++i)
            os << pairs[i].t << ',' << pairs[i].s << ',' << pairs[i].x[0] << ',' << pairs[i].xp[0] << ',' << st.ratios[i] << '\n';
    }
    const double ref = c.tol.refinement.value_or(0.1);
    m.metrics["max_ratio"] = st.max_ratio;
    m.metrics["relative_change"] = st.relative_change;
    check(m, "flow_stability_finite", std::isfinite(st.max_ratio), st.max_ratio, INFINITY,
          "flow_engine: flows are Hoelder in the start point at the stable scale");
    check(m, "flow_stability_step", st.relative_change <= ref, st.relative_change, ref,
          "flow_engine: stability ratio is converged in the ODE step");
}

inline void run_proxy(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const Problem P = make_problem(c);
    const FreezingPair pair{c.params.tau, c.params.xi};
    auto lags = c.time.lags;
    if (lags.empty())
        for (int j = 8; j >= 2; --j) lags.push_back(std::ldexp(1.0, -j));
    const GridSpec pg(c.dim, c.grid.half_extent, c.params.probe_n);
    const double b = c.params.beta;
    const auto phi = sample(pg, [b](const Point& x) { return std::pow(std::abs(std::sin(x[0])), b); });
    const auto sm = scenario("proxy/smoothing", [&] { return smoothing_probe(P.model, P.drift, pair, b, lags, phi, pg); });
    // the probe's own thresholds: 0.05 on the first derivative, 0.07 on the second
    m.checks.push_back({"frozen_smoothing_exponents", verdict_name(sm.verdict), std::abs(sm.slope1 - sm.theory1), 0.05,
                        "proxy_solver: frozen semigroup gains t^{(beta-l)/alpha} on C^beta data"});
    if (!sm.sup_d1.empty()) {
        auto os = csv(d.add(m, "smoothing.csv"));
        os << "lag,sup_d1,sup_d2\n";
        for (std::size_t i = 0; i < sm.lags.size(); ++i) os << sm.lags[i] << ',' << sm.sup_d1[i] << ',' << sm.sup_d2[i] << '\n';
        write_line_svg(d.add(m, "smoothing.svg"), "frozen smoothing", "lag", "sup |D^l P phi|",
                       {{"l=1", sm.lags, sm.sup_d1}, {"l=2", sm.lags, sm.sup_d2}}, true);
        m.metrics["slope1"] = sm.slope1;
        m.metrics["slope2"] = sm.slope2;
    }
    TimeMesh mesh;
    mesh.slices = c.params.slices;
    mesh.nodes = c.params.nodes;
    mesh.h_flow = c.params.h;
    const auto u = scenario("proxy/duhamel", [&] { return duhamel_proxy(P, pair, mesh); });
    ResidualOptions ro;
    ro.frozen = pair;
    ro.h_flow = c.params.h;
    const auto res = scenario("proxy/residual", [&] { return residual_check(u, P, ro); });
    m.metrics["frozen_residual"] = res.sup;
    check(m, "frozen_residual", res.sup <= c.tol.residual, res.sup, c.tol.residual,
          "proxy_solver: the Duhamel proxy solves the frozen equation");
    write_snapshots(u, d, m, "proxy");
}

inline void run_solve(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const Problem P = make_problem(c);
    const std::string& which = c.params.solver;
    std::optional<SpaceTimeField> full, visc;
    ViscosityOptions vo{c.params.slices, c.params.time_step};
    if (which != "viscosity") {
        FullOptions fo;
        fo.slices = c.params.slices;
        fo.nodes = c.params.nodes;
        fo.tol = c.params.tol;
        const auto sol = scenario("solve/duhamel", [&] { return solve_full(P, fo); });
        full = sol.u;
        m.metrics["picard_subintervals"] = static_cast<double>(sol.subintervals);
        m.metrics["picard_iterations"] = static_cast<double>(sol.iterations.back());
        const auto r = scenario("solve/duhamel/residual", [&] { return residual_check(*full, P); });
        m.metrics["residual_duhamel"] = r.sup;
        check(m, "residual_duhamel", r.sup <= c.tol.residual, r.sup, c.tol.residual,
              "proxy_solver: the Picard solution satisfies the integral identity");
        write_snapshots(*full, d, m, "duhamel");
        m.metrics["u0_sup_duhamel"] = full->sup.front();
    }
    if (which != "duhamel") {
        if (c.params.eps_ladder.size() == 1) {
            const double eps = c.params.eps_ladder[0];
            visc = scenario("solve/viscosity/eps=" + tag(eps), [&] { return solve_viscosity(P, eps, vo); });
            ResidualOptions ro;
            ro.eps = eps;
            const auto r = scenario("solve/viscosity/residual", [&] { return residual_check(*visc, P, ro); });
            m.metrics["residual_viscosity"] = r.sup;
            check(m, "residual_viscosity", r.sup <= c.tol.residual, r.sup, c.tol.residual,
                  "proxy_solver: the viscous solution satisfies its integral identity");
        } else {
            const auto lad = scenario("solve/viscosity", [&] { return viscosity_extrapolation(P, c.params.eps_ladder, vo); });
            visc = lad.extrapolations.back();
            m.metrics["extrapolation_last_change"] = lad.last_change;
            check(m, "viscosity_extrapolation_converged", lad.last_change <= c.tol.gap, lad.last_change, c.tol.gap,
                  "proxy_solver: the eps -> 0 extrapolation is stable along the ladder");
            const auto r = scenario("solve/viscosity/residual", [&] { return residual_check(*visc, P); });
            m.metrics["residual_viscosity"] = r.sup;
            check(m, "residual_viscosity", r.sup <= c.tol.residual, r.sup, c.tol.residual,
                  "proxy_solver: the extrapolated solution satisfies the integral identity");
        }
        write_snapshots(*visc, d, m, "viscosity");
        m.metrics["u0_sup_viscosity"] = visc->sup.front();
    }
    if (full && visc) {
        const double gap = sup_gap(*full, *visc);
        m.metrics["solver_gap"] = gap;
        check(m, "solver_agreement", gap <= c.tol.gap, gap, c.tol.gap,
              "proxy_solver: the Picard and vanishing-viscosity solutions coincide");
    }
}

inline void run_schauder(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const ViscosityOptions vo{c.params.slices, c.params.time_step};
    HolderOptions ho;
    ho.seed = c.seed;
    std::vector<std::string> labels;
    std::vector<double> ratios;
    auto os = csv(d.add(m, "schauder.csv"));
    os << "scenario,u_norm,g_norm,f_norm,ratio\n";
    auto one = [&](const std::string& id, const Problem& P) {
        const auto r = scenario(id, [&] { return schauder_ratio(solve_viscosity(P, 0, vo), P, ho); });
        os << id << ',' << r.u_norm << ',' << r.g_norm << ',' << r.f_norm << ',' << r.ratio << '\n';
        labels.push_back(id.substr(id.find('/') + 1));
        ratios.push_back(r.ratio);
        m.metrics["ratio_" + labels.back()] = r.ratio;
    };
    if (c.drift_kind == "shifted_sin") {
        for (double off : c.params.offsets) {
            Problem P = make_problem(c);
            P.drift = shifted_sin(off, c.drift->K0, c.drift->beta, c.dim);
            one("schauder/c=" + tag(off), P);
        }
    } else {
        one("schauder/" + c.drift_kind, make_problem(c));
    }
    write_bar_svg(d.add(m, "schauder_ratios.svg"), "empirical Schauder ratios", labels, ratios);
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    const bool finite = std::all_of(ratios.begin(), ratios.end(), [](double r) { return std::isfinite(r) && r > 0; });
    check(m, "schauder_ratio_finite", finite, *hi, INFINITY, "holder_metrics: the Schauder ratio is finite");
    if (ratios.size() > 1) {
        const double var = *hi / *lo - 1;
        m.metrics["variation"] = var;
        check(m, "schauder_ratio_uniform", var <= c.tol.variation, var, c.tol.variation,
              "holder_metrics: the Schauder ratio does not depend on the sup of the drift");
    }
}

inline void run_fracop(const ExperimentConfig& c, const RunDir& d, RunManifest& m) {
    const GridSpec g(c.dim, c.grid.half_extent, c.grid.n ? c.grid.n : 512);
    HolderOptions ho;
    ho.seed = c.seed;
    const double theta = c.model ? c.model->alpha : c.params.theta;
    const auto fam = frac_op_family(theta + c.params.gamma);
    const auto r = scenario("fracop/theta=" + tag(theta), [&] {
        return c.model ? frac_op_holder_check(*c.model, c.params.gamma, g, fam, ho)
                       : frac_op_holder_check(theta, c.params.gamma, g, fam, ho);
    });
    {
        auto os = csv(d.add(m, "fracop.csv"));
        os << "function,ratio,ratio_fine\n";
        for (std::size_t i = 0; i < r.names.size(); ++i) os << r.names[i] << ',' << r.ratios[i] << ',' << r.ratios_fine[i] << '\n';
    }
    write_bar_svg(d.add(m, "fracop_ratios.svg"), "operator Hoelder ratios", r.names, r.ratios);
    const double ref = c.tol.refinement.value_or(0.15);
    m.metrics["max_ratio"] = r.max_ratio;
    m.metrics["max_ratio_fine"] = r.max_ratio_fine;
    m.metrics["refinement_delta"] = r.refinement_delta;
    check(m, "fracop_ratio_finite", std::isfinite(r.max_ratio), r.max_ratio, INFINITY,
          "holder_metrics: the operator maps C^{gamma+theta} into C^gamma");
    check(m, "fracop_refinement", r.refinement_delta <= ref, r.refinement_delta, ref,
          "holder_metrics: the operator bound is grid converged");
}

}  // namespace detail

/// Executes one experiment into out_dir (the config's output when empty). Writes manifest.json
/// and timing.json; the manifest is byte-identical for identical (config, seed).
inline RunManifest run(const ExperimentConfig& c, const std::string& out_dir = "") {
    const auto start = std::chrono::steady_clock::now();
    detail::RunDir dir(out_dir.empty() ? c.output : out_dir);
    RunManifest m;
    m.kind = c.kind;
    m.config_hash = c.hash();
    m.seed = c.seed;
    {
        std::ofstream os(dir.add(m, "config.json"));
        os << c.effective.dump(2) << '\n';
    }
    if (c.kind == "kernel") detail::run_kernel(c, dir, m);
    else if (c.kind == "pbeta") detail::run_pbeta(c, dir, m);
    else if (c.kind == "kolokoltsov") detail::run_kolokoltsov(c, dir, m);
    else if (c.kind == "flow") detail::run_flow(c, dir, m);
    else if (c.kind == "proxy") detail::run_proxy(c, dir, m);
    else if (c.kind == "solve") detail::run_solve(c, dir, m);
    else if (c.kind == "schauder") detail::run_schauder(c, dir, m);
    else detail::run_fracop(c, dir, m);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string timing = dir.add(m, "timing.json");
    {
        std::ofstream os(dir.path("manifest.json"));
        os << m.to_json().dump(2) << '\n';
    }
    std::ofstream os(timing);
    os << json{{"wall_seconds", m.wall_seconds}, {"config_hash", m.config_hash}}.dump(2) << '\n';
    return m;
}

// ---------------------------------------------------------------------------------------------
// Compare

struct DiffRow {
    std::string name;
    std::string a, b;  // verdicts for checks, values for metrics
    double delta = 0;  // b - a for metrics
};

struct DiffReport {
    std::vector<DiffRow> checks, metrics;
    std::optional<double> solution_sup_delta;  // sup |u_a - u_b| when both runs exported one
    bool pass_flipped = false;

    bool empty() const { return checks.empty() && metrics.empty() && (!solution_sup_delta || *solution_sup_delta == 0); }

    json to_json() const {
        json j;
        j["checks"] = json::array();
        for (const auto& r : checks) j["checks"].push_back({{"name", r.name}, {"a", r.a}, {"b", r.b}});
        j["metrics"] = json::array();
        for (const auto& r : metrics) j["metrics"].push_back({{"name", r.name}, {"a", r.a}, {"b", r.b}, {"delta", r.delta}});
        j["solution_sup_delta"] = solution_sup_delta ? json(*solution_sup_delta) : json(nullptr);
        j["pass_flipped"] = pass_flipped;
        return j;
    }

    std::string table() const {
        std::ostringstream os;
        os.precision(6);
        if (empty()) return "no differences\n";
        for (const auto& r : checks) os << "check   " << r.name << ": " << r.a << " -> " << r.b << '\n';
        for (const auto& r : metrics) os << "metric  " << r.name << ": " << r.a << " -> " << r.b << "  (delta " << r.delta << ")\n";
        if (solution_sup_delta) os << "solution sup-norm delta: " << *solution_sup_delta << '\n';
        return os.str();
    }
};

/// Diffs two manifests. Solutions stored under the same artifact name are compared in sup norm
/// when their meshes agree. Rejects manifests of different kinds.
inline DiffReport compare(const std::string& manifest_a, const std::string& manifest_b) {
    const RunManifest a = read_manifest(manifest_a), b = read_manifest(manifest_b);
    require(a.kind == b.kind, "compare: incompatible experiment kinds '" + a.kind + "' and '" + b.kind + "'");
    DiffReport r;
    std::map<std::string, std::string> va, vb;
    for (const auto& c : a.checks) va[c.name] = c.verdict;
    for (const auto& c : b.checks) vb[c.name] = c.verdict;
    std::set<std::string> names;
    for (const auto& [k, v] : va) names.insert(k);
    for (const auto& [k, v] : vb) names.insert(k);
    for (const auto& n : names) {
        const std::string x = va.count(n) ? va[n] : "-", y = vb.count(n) ? vb[n] : "-";
        if (x == y) continue;
        r.checks.push_back({n, x, y, 0});
        if (x == "PASS") r.pass_flipped = true;
    }
    std::set<std::string> keys;
    for (const auto& [k, v] : a.metrics) keys.insert(k);
    for (const auto& [k, v] : b.metrics) keys.insert(k);
    for (const auto& k : keys) {
        const bool ia = a.metrics.count(k), ib = b.metrics.count(k);
        const double x = ia ? a.metrics.at(k) : NAN, y = ib ? b.metrics.at(k) : NAN;
        if (ia && ib && (x == y || (std::isnan(x) && std::isnan(y)))) continue;
        r.metrics.push_back({k, ia ? detail::tag(x) : "-", ib ? detail::tag(y) : "-", y - x});
    }
    const fs::path da = fs::path(manifest_a).parent_path(), db = fs::path(manifest_b).parent_path();
    for (const auto& art : a.artifacts) {
        if (art.size() < 5 || art.substr(art.size() - 5) != ".sips") continue;
        if (std::find(b.artifacts.begin(), b.artifacts.end(), art) == b.artifacts.end()) continue;
        const auto ua = read_space_time((da / art).string()), ub = read_space_time((db / art).string());
        if (ua.u.size() != ub.u.size() || ua.grid.size() != ub.grid.size()) continue;
        r.solution_sup_delta = std::max(r.solution_sup_delta.value_or(0.0), sup_gap(ua, ub));
    }
    return r;
}

}  // namespace stablab::cli
