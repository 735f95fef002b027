#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "nlreg/barrier.hpp"
#include "nlreg/covering.hpp"
#include "nlreg/errors.hpp"
#include "nlreg/kernel.hpp"
#include "nlreg/nonlocal_op.hpp"
#include "nlreg/parallel.hpp"
#include "nlreg/solver.hpp"

namespace nlreg::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Typed access to one JSON object; unknown keys are rejected by finish().
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_null() && !j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        seen_.insert(key);
        if (j_.is_null() || !j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path_ + "." + key + " has the wrong type");
        }
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        static const json null_json;
        if (j_.is_null() || !j_.contains(key)) return Section(null_json, path_ + "." + key);
        return Section(j_.at(key), path_ + "." + key);
    }

    void finish() const {
        if (j_.is_null()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool cond, const std::string& what) {
    if (!cond) throw ConfigError(what);
}

struct KernelConf {
    std::string type = "frac_laplacian";
    int d = 1;
    double scale = 1;
    std::uint64_t seed = 0;  // 0 means the run seed
};

struct QuadConf {
    double r_min = std::ldexp(1.0, -12), r_max = 64;
    int n_radial = 64, n_angular = 32;
};

struct EvalConf {
    std::string op = "linear";
    std::string mode = "symmetric";
    std::string function = "bump";
    std::vector<std::vector<double>> points;  // the origin when absent
};

struct BarrierConf {
    double r = 0.5, margin = 1.5;
    std::vector<double> alpha_samples;
    int n_x = 41, n_t = 24;
    double verify_tol = 1e-2;
};

struct SolveConf {
    int d = 1;
    double R = 2, hx = 1.0 / 64, t0 = -1.5, t1 = 0, active_radius = 1;
    std::vector<double> record_times;
    std::string op = "linear";
    std::string initial = "bump";
    double height = 1, far = 0, drift_C0 = 0;
    int subcells = 16;
};

struct HolderConf {
    std::vector<double> radii{0.5, 0.25, 0.125, 0.0625};
    std::vector<double> base{0.0, 0.0};  // x..., t
};

struct EnsembleConf {
    int members = 20;
    double A = 1.5, eps = 0.5, C = 0, hx = 1.0 / 64, t0 = -1.5;
};

struct CoveringConf {
    int d = 1;
    double alpha = 1, mu = 0.5, m = 2;
    int nx = 128, nt = 96;
    int interval_instances = 10000;
    int families = 20, family_size = 50;
};

struct Config {
    std::uint64_t seed = 1;
    double tol = 1e-3;
    ClassParams params;
    KernelConf kernel;
    QuadConf quad;
    EvalConf eval;
    BarrierConf barrier;
    SolveConf solve;
    HolderConf holder;
    EnsembleConf ensemble;
    CoveringConf covering;
    std::vector<double> moment_radii{0.0625, 0.25, 1.0, 4.0};
};

Config parse_config(const json& root) {
    Config c;
    Section top(root, "config");
    c.seed = top.get<std::uint64_t>("seed", c.seed);
    c.tol = top.get("tol", c.tol);

    Section p = top.child("params");
    c.params.alpha = p.get("alpha", c.params.alpha);
    c.params.alpha0 = p.get("alpha0", c.params.alpha0);
    c.params.lambda = p.get("lambda", c.params.lambda);
    c.params.Lambda = p.get("Lambda", c.params.Lambda);
    c.params.mu = p.get("mu", c.params.mu);
    c.params.C0 = p.get("C0", c.params.C0);
    p.finish();

    Section k = top.child("kernel");
    c.kernel.type = k.get("type", c.kernel.type);
    c.kernel.d = k.get("d", c.kernel.d);
    c.kernel.scale = k.get("scale", c.kernel.scale);
    c.kernel.seed = k.get<std::uint64_t>("seed", c.kernel.seed);
    k.finish();
    require(c.kernel.d == 1 || c.kernel.d == 2, "kernel.d must be 1 or 2");
    require(c.kernel.type == "frac_laplacian" || c.kernel.type == "line" || c.kernel.type == "line_plus_frac" ||
                c.kernel.type == "random",
            "kernel.type must be frac_laplacian, line, line_plus_frac or random");
    require(c.kernel.scale > 0, "kernel.scale must be positive");

    Section q = top.child("quad");
    c.quad.r_min = q.get("r_min", c.quad.r_min);
    c.quad.r_max = q.get("r_max", c.quad.r_max);
    c.quad.n_radial = q.get("n_radial", c.quad.n_radial);
    c.quad.n_angular = q.get("n_angular", c.quad.n_angular);
    q.finish();
    require(c.quad.r_min > 0 && c.quad.r_max > c.quad.r_min, "quad needs 0 < r_min < r_max");
    require(c.quad.n_radial > 0 && c.quad.n_angular > 0, "quad cell counts must be positive");

    Section e = top.child("eval");
    c.eval.op = e.get("operator", c.eval.op);
    c.eval.mode = e.get("mode", c.eval.mode);
    c.eval.function = e.get("function", c.eval.function);
    c.eval.points = e.get("points", std::vector<std::vector<double>>{std::vector<double>(c.kernel.d, 0.0)});
    e.finish();
    require(c.eval.op == "linear" || c.eval.op == "minus" || c.eval.op == "plus",
            "eval.operator must be linear, minus or plus");
    require(c.eval.mode == "symmetric" || c.eval.mode == "general", "eval.mode must be symmetric or general");
    require(c.eval.function == "cos" || c.eval.function == "gauss" || c.eval.function == "bump",
            "eval.function must be cos, gauss or bump");
    for (const auto& pt : c.eval.points)
        require(int(pt.size()) == c.kernel.d, "eval.points entries must have kernel.d coordinates");

    Section b = top.child("barrier");
    c.barrier.r = b.get("r", c.barrier.r);
    c.barrier.margin = b.get("margin", c.barrier.margin);
    c.barrier.alpha_samples = b.get("alpha_samples", c.barrier.alpha_samples);
    c.barrier.n_x = b.get("n_x", c.barrier.n_x);
    c.barrier.n_t = b.get("n_t", c.barrier.n_t);
    c.barrier.verify_tol = b.get("verify_tol", c.barrier.verify_tol);
    b.finish();
    require(c.barrier.r > 0 && c.barrier.r < 1, "barrier.r must lie in (0,1)");
    require(c.barrier.margin >= 1, "barrier.margin must be at least 1");
    require(c.barrier.n_x > 1 && c.barrier.n_t > 1, "barrier sample counts must exceed 1");

    Section s = top.child("solve");
    c.solve.d = s.get("d", c.solve.d);
    c.solve.R = s.get("R", c.solve.R);
    c.solve.hx = s.get("hx", c.solve.hx);
    c.solve.t0 = s.get("t0", c.solve.t0);
    c.solve.t1 = s.get("t1", c.solve.t1);
    c.solve.active_radius = s.get("active_radius", c.solve.active_radius);
    c.solve.record_times = s.get("record_times", c.solve.record_times);
    c.solve.op = s.get("operator", c.solve.op);
    c.solve.initial = s.get("initial", c.solve.initial);
    c.solve.height = s.get("height", c.solve.height);
    c.solve.far = s.get("far", c.solve.far);
    c.solve.drift_C0 = s.get("drift_C0", c.solve.drift_C0);
    c.solve.subcells = s.get("subcells", c.solve.subcells);
    s.finish();
    require(c.solve.d == 1 || c.solve.d == 2, "solve.d must be 1 or 2");
    require(c.solve.hx > 0 && c.solve.R > 0, "solve.hx and solve.R must be positive");
    require(c.solve.op == "linear" || c.solve.op == "minus" || c.solve.op == "plus",
            "solve.operator must be linear, minus or plus");
    require(c.solve.initial == "bump" || c.solve.initial == "random" || c.solve.initial == "constant",
            "solve.initial must be bump, random or constant");

    Section h = top.child("holder");
    c.holder.radii = h.get("radii", c.holder.radii);
    c.holder.base = h.get("base", c.holder.base);
    h.finish();
    require(!c.holder.radii.empty(), "holder.radii must not be empty");
    require(int(c.holder.base.size()) == c.solve.d + 1, "holder.base must hold solve.d coordinates and a time");

    Section en = top.child("ensemble");
    c.ensemble.members = en.get("members", c.ensemble.members);
    c.ensemble.A = en.get("A", c.ensemble.A);
    c.ensemble.eps = en.get("eps", c.ensemble.eps);
    c.ensemble.C = en.get("C", c.ensemble.C);
    c.ensemble.hx = en.get("hx", c.ensemble.hx);
    c.ensemble.t0 = en.get("t0", c.ensemble.t0);
    en.finish();
    require(c.ensemble.members > 0, "ensemble.members must be positive");
    require(c.ensemble.eps > 0, "ensemble.eps must be positive");

    Section cv = top.child("covering");
    c.covering.d = cv.get("d", c.covering.d);
    c.covering.alpha = cv.get("alpha", c.covering.alpha);
    c.covering.mu = cv.get("mu", c.covering.mu);
    c.covering.m = cv.get("m", c.covering.m);
    c.covering.nx = cv.get("nx", c.covering.nx);
    c.covering.nt = cv.get("nt", c.covering.nt);
    c.covering.interval_instances = cv.get("interval_instances", c.covering.interval_instances);
    c.covering.families = cv.get("families", c.covering.families);
    c.covering.family_size = cv.get("family_size", c.covering.family_size);
    cv.finish();
    require(c.covering.d == 1 || c.covering.d == 2, "covering.d must be 1 or 2");
    require(c.covering.nx > 0 && c.covering.nt > 0, "covering raster sizes must be positive");

    c.moment_radii = top.get("moment_radii", c.moment_radii);
    top.finish();
    require(c.tol > 0, "tol must be positive");
    return c;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Single-writer CSV with a one-line header.
class Csv {
public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : os_(path) {
        if (!os_) throw std::runtime_error("cannot open " + path.string());
        row_strings(header);
    }
    template <class... T>
    void row(const T&... v) {
        std::vector<std::string> cells{cell(v)...};
        row_strings(cells);
    }

private:
    static std::string cell(double v) { return fmt(v); }
    template <class T>
        requires std::is_integral_v<T>
    static std::string cell(T v) {
        return std::to_string(v);
    }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << '\n';
    }
    std::ofstream os_;
};

KernelSpec make_kernel(const Config& c) {
    if (c.kernel.type == "frac_laplacian") return make_frac_laplacian(c.kernel.d, c.params.alpha, c.kernel.scale);
    if (c.kernel.type == "line") return make_line_kernel(c.kernel.d, c.params.alpha, c.kernel.scale);
    if (c.kernel.type == "line_plus_frac") return make_line_plus_frac(c.kernel.d, c.params.alpha);
    return make_random_admissible(c.params, c.kernel.seed ? c.kernel.seed : c.seed, c.kernel.d);
}

AnnulusGrid make_quad(const Config& c, int d) {
    return AnnulusGrid(d, c.quad.r_min, c.quad.r_max, c.quad.n_radial, c.quad.n_angular);
}

Field test_function(const std::string& name, int d) {
    Field f;
    f.d = d;
    if (name == "cos") {
        f.value = [d](const Vec& x) { return std::cos(x[0]) + (d == 2 ? std::cos(x[1]) : 0.0); };
        f.sup_bound = double(d);
    } else if (name == "gauss") {
        f.value = [](const Vec& x) { return std::exp(-dot(x, x)); };
        f.sup_bound = 1.0;
    } else {
        f.value = [](const Vec& x) {
            const double r2 = dot(x, x);
            return r2 < 1 ? std::pow(1 - r2, 4) : 0.0;
        };
        f.far_value = 0.0;
        f.far_radius = 1.0;
        f.sup_bound = 1.0;
    }
    return f;
}

struct Run {
    Config cfg;
    fs::path out;
    std::string command;
};

void write_manifest(const Run& r, const std::string& config_text) {
    fs::create_directories(r.out);
    json m;
    m["tool"] = "nlreg";
    m["version"] = kVersion;
    m["command"] = r.command;
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, fnv1a(config_text));
    m["config_hash"] = hash;
    m["seed"] = r.cfg.seed;
    m["tol"] = r.cfg.tol;
    m["threads"] = thread_count();
#if defined(__clang__)
    m["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    m["compiler"] = std::string("gcc ") + __VERSION__;
#endif
    std::ofstream(r.out / "manifest.json") << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------------------------
// Subcommands

int cmd_check_kernel(const Run& r) {
    const Config& c = r.cfg;
    const KernelSpec K = make_kernel(c);
    const AssumptionReport rep = check_assumptions(K, c.params, make_quad(c, c.kernel.d), c.tol);
    Csv a(r.out / "assumptions.csv", {"r", "a1", "mass", "mass_bound", "a2", "floor_measure", "floor_required", "a3",
                                      "odd_norm", "odd_bound", "a4", "pass"});
    for (const auto& g : rep.rings)
        a.row(g.r, g.a1, g.mass, g.mass_bound, g.a2, g.floor_measure, g.floor_required, g.a3, g.odd_norm, g.odd_bound,
              g.a4, g.pass());
    Csv m(r.out / "moments.csv", {"r", "name", "value", "bound", "applicable", "holds"});
    for (double rad : c.moment_radii) {
        const MomentBoundsReport mb = moment_bounds_report(K, c.params, rad);
        for (const MomentEntry* e : {&mb.second_inner, &mb.first_inner, &mb.first_outer, &mb.tail})
            m.row(rad, e->name, e->value, e->bound, e->applicable, e->holds());
    }
    Csv s(r.out / "summary.csv", {"a1", "a2", "a3", "a4", "all_pass"});
    s.row(rep.a1, rep.a2, rep.a3, rep.a4, rep.all_pass());
    std::cout << "kernel " << K.name << ": A1 " << rep.a1 << " A2 " << rep.a2 << " A3 " << rep.a3 << " A4 " << rep.a4
              << '\n';
    return ok;
}

int cmd_eval_op(const Run& r) {
    const Config& c = r.cfg;
    const int d = c.kernel.d;
    const Field u = test_function(c.eval.function, d);
    const AnnulusGrid quad = make_quad(c, d);
    EvalOptions opt;
    opt.tol = c.tol;
    opt.keep_certificate = false;
    const KernelSpec K = make_kernel(c);
    const ExtremalMode mode = c.eval.mode == "general" ? ExtremalMode::general : ExtremalMode::symmetric;
    std::vector<std::tuple<Vec, OperatorValue>> rows;
    for (const auto& pt : c.eval.points) {
        const Vec x{pt[0], d == 2 ? pt[1] : 0.0};
        OperatorValue v;
        if (c.eval.op == "linear")
            v = eval_linear(K, u, x, quad, c.params.alpha, opt);
        else
            v = eval_extremal(c.params, u, x, c.eval.op == "minus" ? Sign::minus : Sign::plus, mode, quad, opt);
        rows.emplace_back(x, v);
    }
    Csv out(r.out / "values.csv", {"x0", "x1", "value", "error_bar", "rings"});
    for (const auto& [x, v] : rows) out.row(x[0], x[1], v.value, v.error_bar, v.ring_count);
    return ok;
}

int cmd_build_barrier(const Run& r) {
    const Config& c = r.cfg;
    const AnnulusGrid quad = make_quad(c, 1);
    BarrierBuildOptions bo;
    bo.margin = c.barrier.margin;
    bo.search.alpha_samples = c.barrier.alpha_samples;
    const BarrierBuild b = build_barrier(c.barrier.r, c.params, quad, bo);
    const BarrierParams& bp = b.params;
    json j;
    j["d"] = bp.d;
    j["r"] = bp.r;
    j["alpha"] = bp.alpha;
    j["C0"] = bp.C0;
    j["gamma1"] = bp.gamma1;
    j["q1"] = bp.q1;
    j["c1"] = bp.c1;
    j["c2"] = bp.c2;
    j["q0"] = bp.q0;
    j["C5"] = bp.C5;
    j["eps0"] = bp.eps0;
    j["C"] = bp.C;
    j["T"] = bp.T;
    j["alpha_samples"] = b.search.alpha_samples;
    std::ofstream(r.out / "barrier.json") << j.dump(2) << '\n';
    Csv shell(r.out / "shell.csv", {"x0", "alpha", "value", "target"});
    for (const auto& s : b.search.shell) shell.row(s.x[0], s.alpha, s.value, s.target);

    VerifyOptions vo;
    vo.n_x = c.barrier.n_x;
    vo.n_t = c.barrier.n_t;
    vo.tol = c.barrier.verify_tol;
    vo.throw_on_failure = false;
    const BarrierReport rep = verify_barrier(bp, c.params, quad, vo);
    Csv res(r.out / "residuals.csv", {"x0", "x1", "t", "branch", "residual"});
    for (const auto& row : rep.rows) res.row(row.x[0], row.x[1], row.t, row.branch, row.residual);
    Csv s(r.out / "summary.csv", {"res1", "res2", "res3", "res4", "tol", "pass"});
    s.row(rep.res1, rep.res2, rep.res3, rep.res4, rep.tol, rep.pass());
    std::cout << "barrier residuals " << fmt(rep.res1) << ' ' << fmt(rep.res2) << ' ' << fmt(rep.res3) << ' '
              << fmt(rep.res4) << '\n';
    return rep.pass() ? ok : verification_failure;
}

ParabolicProblem make_problem(const Config& c) {
    const SolveConf& s = c.solve;
    ParabolicProblem pr;
    pr.params = c.params;
    pr.op = s.op == "linear" ? OperatorKind::linear
            : s.op == "minus" ? OperatorKind::extremal_minus
                              : OperatorKind::extremal_plus;
    if (pr.op == OperatorKind::linear) {
        Config kc = c;
        kc.kernel.d = s.d;
        pr.kernel = make_kernel(kc);
    }
    pr.drift_C0 = s.drift_C0;
    pr.t0 = s.t0;
    pr.t1 = s.t1;
    pr.record_times = s.record_times;
    pr.active_radius = s.active_radius;
    pr.subcells = s.subcells;
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> U(0, 1);
    const double height = s.height, far = s.far;
    if (s.initial == "constant") {
        pr.initial = GridFunction::sample(s.d, s.R, s.hx, [&](const Vec&) { return far; });
    } else if (s.initial == "bump") {
        pr.initial = GridFunction::sample(s.d, s.R, s.hx, [&](const Vec& x) {
            const double r2 = dot(x, x);
            return far + (r2 < 1 ? height * std::pow(1 - r2, 4) : 0.0);
        });
    } else {
        pr.initial = GridFunction(s.d, s.R, s.hx);
        for (double& v : pr.initial.values()) v = far + height * U(rng);
    }
    pr.initial.set_far_constant(far);
    pr.validate();
    return pr;
}

void write_trajectory(const Run& r, const Trajectory& tr) {
    std::ofstream bin(r.out / "trajectory.bin", std::ios::binary);
    tr.write_binary(bin);
    Csv s(r.out / "summary.csv", {"t", "min", "max"});
    for (std::size_t k = 0; k < tr.frames.size(); ++k) {
        const auto& v = tr.frames[k].values();
        s.row(tr.times[k], *std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end()));
    }
    Csv info(r.out / "run.csv", {"frames", "dt", "cfl_ratio"});
    info.row(tr.frames.size(), tr.dt, tr.cfl_ratio);
}

int cmd_solve(const Run& r) {
    const ParabolicProblem pr = make_problem(r.cfg);
    const Trajectory tr = solve(pr);
    write_trajectory(r, tr);
    Csv f(r.out / "final.csv", {"x0", "x1", "u"});
    const GridFunction& last = tr.frames.back();
    for (std::size_t i = 0; i < last.size(); ++i) f.row(last.node(i)[0], last.node(i)[1], last[i]);
    return ok;
}

int cmd_measure_holder(const Run& r) {
    const Config& c = r.cfg;
    const ParabolicProblem pr = make_problem(c);
    const Trajectory tr = solve(pr);
    write_trajectory(r, tr);
    SpaceTimePoint base;
    base.x = {c.holder.base[0], c.solve.d == 2 ? c.holder.base[1] : 0.0};
    base.t = c.holder.base.back();
    const OscProfile p = osc_and_fit(tr, base, c.holder.radii, c.params.alpha);
    Csv h(r.out / "holder.csv", {"r", "osc"});
    for (std::size_t k = 0; k < p.radii.size(); ++k) h.row(p.radii[k], p.osc[k]);
    Csv fit(r.out / "fit.csv", {"gamma", "log_constant", "residual", "zero_osc"});
    fit.row(p.gamma, p.log_constant, p.residual, p.zero_osc);
    return ok;
}

int cmd_weak_harnack(const Run& r) {
    const Config& c = r.cfg;
    RegularityOptions o;
    o.params = c.params;
    o.A = c.ensemble.A;
    o.eps = c.ensemble.eps;
    o.C = c.ensemble.C;
    o.hx = c.ensemble.hx;
    o.t0 = c.ensemble.t0;
    o.radii = c.holder.radii;
    Csv e(r.out / "ensemble.csv", {"seed", "growth_fraction", "leps_norm", "inf_q14", "ratio", "gamma", "fit_residual"});
    double delta = 1, C6 = 0, gmin = INFINITY, rmax = 0;
    for (int k = 0; k < c.ensemble.members; ++k) {
        const std::uint64_t seed = c.seed + std::uint64_t(k);
        const RegularityRun run = regularity_run(o, seed);
        e.row(seed, run.growth_fraction, run.harnack.norm, run.harnack.inf, run.harnack.ratio, run.holder.gamma,
              run.holder.residual);
        delta = std::min(delta, run.growth_fraction);
        C6 = std::max(C6, run.harnack.ratio);
        gmin = std::min(gmin, run.holder.gamma);
        rmax = std::max(rmax, run.holder.residual);
    }
    Csv s(r.out / "summary.csv", {"A", "delta", "eps", "C", "C6", "gamma_min", "fit_residual_max"});
    s.row(o.A, delta, o.eps, o.C, C6, gmin, rmax);
    std::cout << "empirical A " << fmt(o.A) << " delta " << fmt(delta) << ", eps " << fmt(o.eps) << " C6 " << fmt(C6)
              << '\n';
    return ok;
}

int cmd_covering_demo(const Run& r) {
    const CoveringConf& c = r.cfg.covering;
    std::mt19937_64 rng(r.cfg.seed);
    std::uniform_real_distribution<double> U(0, 1);

    Csv iv(r.out / "interval.csv", {"instance", "intervals", "m", "lhs", "rhs", "pass"});
    int interval_fail = 0;
    for (int k = 0; k < c.interval_instances; ++k) {
        const int n = 1 + int(U(rng) * 10);
        std::vector<double> a(n), h(n);
        for (int i = 0; i < n; ++i) {
            a[i] = 4 * U(rng);
            h[i] = 0.01 + U(rng);
        }
        const double m = 1 + std::floor(8 * U(rng));
        const IntervalLemmaResult res = interval_lemma_check(a, h, m);
        interval_fail += !res.pass;
        iv.row(k, n, m, res.lhs, res.rhs, res.pass);
    }

    Csv vf(r.out / "vitali.csv", {"family", "selected", "disjoint", "covered_cells", "missed_cells", "pass"});
    int vitali_fail = 0;
    for (int f = 0; f < c.families; ++f) {
        std::vector<Cylinder> fam;
        for (int i = 0; i < c.family_size; ++i) {
            Cylinder q;
            q.d = c.d;
            q.alpha = c.alpha;
            q.r = 0.02 + 0.15 * U(rng);
            q.x = {2 * U(rng) - 1, c.d == 2 ? 2 * U(rng) - 1 : 0.0};
            q.t = U(rng);
            fam.push_back(q);
        }
        const RasterSet grid(c.d, c.d == 1 ? 400 : 80, -0.2, 1.0, 200);
        const VitaliCheck v = vitali_cover_check(fam, grid);
        vitali_fail += !v.pass();
        vf.row(f, v.selected.size(), v.disjoint, v.covered_cells, v.missed_cells, v.pass());
    }

    const InkSpotsInstance inst = make_ink_spots_instance(c.d, c.alpha, c.mu, c.m, c.nx, c.nt);
    const InkSpotsReport ink = ink_spots_check(inst.E, inst.F, inst.mu, inst.m, inst.probes);
    Csv ik(r.out / "inkspots.csv", {"d", "alpha", "mu", "m", "E", "F", "c", "rhs", "hypothesis_1", "hypothesis_2",
                                    "conclusion"});
    ik.row(c.d, c.alpha, c.mu, c.m, ink.E, ink.F, ink.c, ink.rhs, ink.hypothesis_1, ink.hypothesis_2, ink.conclusion);
    std::cout << "interval failures " << interval_fail << ", vitali failures " << vitali_fail << ", ink-spots "
              << (ink.pass() ? "pass" : "fail") << '\n';
    return interval_fail == 0 && vitali_fail == 0 && ink.pass() ? ok : verification_failure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Experiments for nonlocal parabolic regularity"};
    app.require_subcommand(1);
    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"check-kernel", "kernel class assumptions and moment bounds"},
        {"eval-op", "operator values along a point list"},
        {"build-barrier", "barrier parameter search and residual verification"},
        {"solve", "time-stepping run with trajectory output"},
        {"measure-holder", "oscillation decay fit on a solved trajectory"},
        {"weak-harnack", "ensemble of growth-lemma, weak-Harnack and Hoelder measurements"},
        {"covering-demo", "interval lemma, Vitali cover and ink-spots checks"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--seed", seed, "random seed (overrides the config)");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--tol", tol, "accuracy tolerance (overrides the config)");
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.out = out_dir;
    std::string config_text = "{}";
    try {
        json root = json::object();
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw ConfigError("cannot read config file " + config_path);
            std::stringstream ss;
            ss << is.rdbuf();
            try {
                root = json::parse(ss.str());
            } catch (const json::parse_error& e) {
                throw ConfigError(std::string("malformed config: ") + e.what());
            }
        }
        if (seed) root["seed"] = *seed;
        if (tol) root["tol"] = *tol;
        run.cfg = parse_config(root);
        config_text = root.dump();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    }

    try {
        run.cfg.params.validate();
        write_manifest(run, config_text);
        if (run.command == "check-kernel") return cmd_check_kernel(run);
        if (run.command == "eval-op") return cmd_eval_op(run);
        if (run.command == "build-barrier") return cmd_build_barrier(run);
        if (run.command == "solve") return cmd_solve(run);
        if (run.command == "measure-holder") return cmd_measure_holder(run);
        if (run.command == "weak-harnack") return cmd_weak_harnack(run);
        return cmd_covering_demo(run);
    } catch (const AccuracyError& e) {
        std::cerr << "accuracy error: " << e.what() << '\n';
        return accuracy_error;
    } catch (const VerificationFailure& e) {
        std::cerr << "verification failure: " << e.what() << '\n';
        return verification_failure;
    } catch (const SearchFailure& e) {
        std::cerr << "search failure: " << e.what() << '\n';
        return verification_failure;
    } catch (const Error& e) {
        std::cerr << "parameter error: " << e.what() << '\n';
        return parameter_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return internal_error;
    }
}

}  // namespace nlreg::cli
