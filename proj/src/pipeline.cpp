#include "statlap/pipeline.hpp"

#include "statlap/errors.hpp"
#include "statlap/field_io.hpp"
#include "statlap/models.hpp"
#include "statlap/operators.hpp"
#include "statlap/rng.hpp"
#include "statlap/spectral.hpp"
#include "statlap/synthetic.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

namespace statlap {

using nlohmann::json;
namespace fs = std::filesystem;

// --- manifold sources -------------------------------------------------------

Grid ChartSpec::grid(int refinement) const
{
    std::vector<double> origin(center.size());
    std::vector<int> pts(points);
    for (std::size_t a = 0; a < center.size(); ++a) {
        origin[a] = center[a] - 0.5 * period[a];
        pts[a] *= refinement;
    }
    return Grid(pts, period, origin);
}

bool ManifoldSpec::is_catalog_model() const
{
    return model == "bernoulli" || model == "gaussian_location" || model == "gaussian" || model == "categorical";
}

namespace {

TensorField load_named_field(const fs::path& path, const std::string& name)
{
    FieldSet fields = fields_from_json(read_json_file(path));
    auto it = fields.find(name);
    if (it == fields.end()) {
        throw ConfigError("'" + path.string() + "' has no field named '" + name + "'");
    }
    return it->second;
}

double param_or(const std::map<std::string, double>& p, const std::string& key, double fallback)
{
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

} // namespace

ManifoldData build_manifold(const ManifoldSpec& spec, int refinement)
{
    TensorField g;
    TensorField C;
    std::optional<TensorField> own_potential;
    bool periodic = true;

    if (spec.model == "fields") {
        if (refinement != 1) {
            throw ConfigError("explicit field files cannot be refined");
        }
        FieldSet fields = fields_from_json(read_json_file(spec.fields_file));
        if (!fields.contains("g") || !fields.contains("C")) {
            throw ConfigError("field file must contain fields 'g' and 'C'");
        }
        g = fields.at("g");
        C = fields.at("C");
        if (fields.contains("f")) {
            own_potential = fields.at("f");
        }
    } else {
        if (!spec.chart) {
            throw ConfigError("model '" + spec.model + "' needs a chart");
        }
        Grid grid = spec.chart->grid(refinement);
        if (spec.model == "synthetic_trig") {
            auto s = trig_fields(grid, param_or(spec.fixed_params, "metric_amplitude", 0.5),
                                 param_or(spec.fixed_params, "ac_amplitude", 0.5),
                                 param_or(spec.fixed_params, "potential_amplitude", 0.3));
            g = s.g;
            C = s.C;
            own_potential = s.f;
        } else if (spec.model == "synthetic_flat") {
            auto s = flat_fields(grid);
            g = s.g;
            C = s.C;
            own_potential = s.f;
        } else {
            auto model = make_model(spec.model, spec.fixed_params);
            std::tie(g, C) = eval_closed_form(*model, grid);
            // Constant-metric families are genuinely periodic on any chart.
            periodic = spec.model == "gaussian_location";
        }
    }

    TensorField f;
    if (spec.potential == "zero") {
        f = TensorField::zeros(g.grid(), 0);
    } else if (spec.potential == "log-sqrt-det-g") {
        f = log_sqrt_det_potential(g);
    } else if (spec.potential == "model") {
        if (!own_potential) {
            throw ConfigError("f = \"model\" needs a synthetic preset or a field file with 'f'");
        }
        f = *own_potential;
    } else if (spec.potential == "field") {
        if (refinement != 1) {
            throw ConfigError("an explicit potential field cannot be refined");
        }
        f = load_named_field(spec.potential_file, spec.potential_name);
    } else {
        throw ConfigError("unknown f specification '" + spec.potential + "'");
    }
    ManifoldData md = statlap::build_manifold(g, C, f, spec.alpha);
    md.periodic = periodic;
    return md;
}

bool RunConfig::has_task(const std::string& task) const
{
    return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
}

// --- config parsing ---------------------------------------------------------

namespace {

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys)
{
    if (!j.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : keys) {
            ok = ok || key == k;
        }
        if (!ok) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " is missing or has the wrong type");
    }
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& path)
{
    if (!fs::exists(path)) {
        throw IoError("referenced file '" + path.string() + "' does not exist");
    }
}

ChartSpec parse_chart(const json& j, const std::string& where)
{
    allow_keys(j, where, {"center", "period", "points"});
    ChartSpec c;
    c.center = get_as<std::vector<double>>(j, "center", where);
    c.period = get_as<std::vector<double>>(j, "period", where);
    c.points = get_as<std::vector<int>>(j, "points", where);
    if (c.center.size() != c.period.size() || c.center.size() != c.points.size() || c.center.empty()) {
        throw ConfigError(where + ": center, period and points must have one entry per axis");
    }
    for (std::size_t a = 0; a < c.points.size(); ++a) {
        if (c.points[a] < 4 || !(c.period[a] > 0.0)) {
            throw ConfigError(where + ": every axis needs >= 4 points and a positive period");
        }
    }
    return c;
}

std::vector<SampleEntry> parse_samples(const json& arr, const std::string& where)
{
    std::vector<SampleEntry> out;
    if (!arr.is_array()) {
        throw ConfigError(where + " must be an array");
    }
    for (const auto& e : arr) {
        allow_keys(e, where + "[]", {"id", "value"});
        SampleEntry s;
        const json& id = e.at("id");
        s.id = id.is_string() ? id.get<std::string>() : id.dump();
        s.value = get_as<double>(e, "value", where + "[]");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SampleEntry> read_samples_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open samples file '" + path.string() + "'");
    }
    json arr = json::array();
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            arr.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ConfigError("malformed sample line in '" + path.string() + "': " + e.what());
        }
    }
    return parse_samples(arr, "samples_file");
}

const std::set<std::string> kTasks = {"spectrum", "vdd-matrix", "kernel-gram", "verify"};

} // namespace

RunConfig parse_config(const json& j, const fs::path& base_dir)
{
    allow_keys(j, "config",
               {"model", "grid", "alpha", "f", "spectral", "tasks", "vdd", "kernel", "verify", "output", "seed", "threads"});
    RunConfig cfg;

    const json& mj = j.contains("model") ? j.at("model") : throw ConfigError("config needs a model block");
    allow_keys(mj, "model", {"model", "fixed_params", "chart", "fields_file"});
    ManifoldSpec& ms = cfg.manifold;
    ms.model = get_as<std::string>(mj, "model", "model");
    if (mj.contains("fixed_params")) {
        ms.fixed_params = get_as<std::map<std::string, double>>(mj, "fixed_params", "model");
    }
    if (mj.contains("chart") && j.contains("grid")) {
        throw ConfigError("give either model.chart or grid, not both");
    }
    if (mj.contains("chart")) {
        ms.chart = parse_chart(mj.at("chart"), "model.chart");
    } else if (j.contains("grid")) {
        ms.chart = parse_chart(j.at("grid"), "grid");
    }
    if (ms.model == "fields") {
        ms.fields_file = resolve(base_dir, get_as<std::string>(mj, "fields_file", "model"));
        require_file(ms.fields_file);
        if (ms.chart) {
            throw ConfigError("model 'fields' takes its grid from the field file");
        }
    } else {
        if (mj.contains("fields_file")) {
            throw ConfigError("fields_file is only valid with model 'fields'");
        }
        if (!ms.chart) {
            throw ConfigError("model '" + ms.model + "' needs a chart");
        }
        if (ms.is_catalog_model()) {
            auto model = make_model(ms.model, ms.fixed_params);
            if (model->parameter_dim() != static_cast<int>(ms.chart->points.size())) {
                throw ConfigError("chart dimension does not match model '" + ms.model + "'");
            }
        } else if (ms.model == "synthetic_trig" || ms.model == "synthetic_flat") {
            for (const auto& [key, value] : ms.fixed_params) {
                if (ms.model == "synthetic_flat" || (key != "metric_amplitude" && key != "ac_amplitude" && key != "potential_amplitude")) {
                    throw ConfigError("model '" + ms.model + "' has no fixed parameter '" + key + "'");
                }
            }
            if (ms.chart->points.size() > 2 && ms.model == "synthetic_trig") {
                throw ConfigError("synthetic_trig supports 1D and 2D charts");
            }
        } else {
            throw ConfigError("unknown model '" + ms.model + "'");
        }
    }
    if (j.contains("alpha")) {
        ms.alpha = get_as<double>(j, "alpha", "config");
    }
    if (j.contains("f")) {
        const json& fj = j.at("f");
        if (fj.is_string()) {
            ms.potential = fj.get<std::string>();
            if (ms.potential != "zero" && ms.potential != "log-sqrt-det-g" && ms.potential != "model") {
                throw ConfigError("f must be \"zero\", \"log-sqrt-det-g\", \"model\" or {field_file, name}");
            }
            if (ms.potential == "model" && ms.is_catalog_model()) {
                throw ConfigError("f = \"model\" is only available for synthetic presets and field files");
            }
        } else {
            allow_keys(fj, "f", {"field_file", "name"});
            ms.potential = "field";
            ms.potential_file = resolve(base_dir, get_as<std::string>(fj, "field_file", "f"));
            require_file(ms.potential_file);
            if (fj.contains("name")) {
                ms.potential_name = get_as<std::string>(fj, "name", "f");
            }
        }
    }

    if (j.contains("spectral")) {
        const json& sj = j.at("spectral");
        allow_keys(sj, "spectral", {"k", "tolerance", "tail_tolerance"});
        if (sj.contains("k")) cfg.spectral.k = get_as<std::size_t>(sj, "k", "spectral");
        if (sj.contains("tolerance")) cfg.spectral.tolerance = get_as<double>(sj, "tolerance", "spectral");
        if (sj.contains("tail_tolerance")) cfg.spectral.tail_tolerance = get_as<double>(sj, "tail_tolerance", "spectral");
        if (cfg.spectral.k == 0) {
            throw ConfigError("spectral.k must be positive");
        }
    }

    if (j.contains("tasks")) {
        cfg.tasks = get_as<std::vector<std::string>>(j, "tasks", "config");
        for (const auto& t : cfg.tasks) {
            if (!kTasks.contains(t)) {
                throw ConfigError("unknown task '" + t + "'");
            }
        }
    }

    if (j.contains("vdd")) {
        const json& vj = j.at("vdd");
        allow_keys(vj, "vdd", {"t", "node_stride"});
        if (vj.contains("t")) cfg.vdd.t = get_as<double>(vj, "t", "vdd");
        if (vj.contains("node_stride")) cfg.vdd.node_stride = get_as<std::size_t>(vj, "node_stride", "vdd");
        if (!(cfg.vdd.t > 0.0) || cfg.vdd.node_stride == 0) {
            throw ConfigError("vdd.t must be positive and vdd.node_stride at least 1");
        }
    }

    if (j.contains("kernel")) {
        const json& kj = j.at("kernel");
        allow_keys(kj, "kernel", {"samples", "samples_file", "t", "prior", "min_support_nodes"});
        if (kj.contains("samples") && kj.contains("samples_file")) {
            throw ConfigError("give either kernel.samples or kernel.samples_file");
        }
        if (kj.contains("samples")) {
            cfg.kernel.samples = parse_samples(kj.at("samples"), "kernel.samples");
        }
        if (kj.contains("samples_file")) {
            fs::path p = resolve(base_dir, get_as<std::string>(kj, "samples_file", "kernel"));
            require_file(p);
            cfg.kernel.samples = read_samples_file(p);
        }
        if (kj.contains("t")) cfg.kernel.t = get_as<double>(kj, "t", "kernel");
        if (!(cfg.kernel.t >= 0.0)) {
            throw ConfigError("kernel.t must be non-negative");
        }
        if (kj.contains("min_support_nodes")) {
            cfg.kernel.min_support_nodes = get_as<double>(kj, "min_support_nodes", "kernel");
        }
        if (kj.contains("prior")) {
            const json& pj = kj.at("prior");
            allow_keys(pj, "kernel.prior", {"kind", "params"});
            cfg.kernel.prior = prior_kind_from_string(get_as<std::string>(pj, "kind", "kernel.prior"));
            if (pj.contains("params")) {
                cfg.kernel.prior_params = get_as<std::map<std::string, double>>(pj, "params", "kernel.prior");
            }
        }
    }
    if (cfg.has_task("kernel-gram")) {
        if (!cfg.manifold.is_catalog_model()) {
            throw ConfigError("kernel-gram needs a catalog model (it evaluates likelihoods)");
        }
        if (cfg.kernel.samples.size() < 2) {
            throw ConfigError("kernel-gram needs at least two samples");
        }
    }

    if (j.contains("verify")) {
        const json& vj = j.at("verify");
        allow_keys(vj, "verify", {"refinement", "random_pairs", "triples", "discretization_tolerance"});
        if (vj.contains("refinement")) cfg.verify.refinement = get_as<int>(vj, "refinement", "verify");
        if (vj.contains("random_pairs")) cfg.verify.random_pairs = get_as<int>(vj, "random_pairs", "verify");
        if (vj.contains("triples")) cfg.verify.triples = get_as<int>(vj, "triples", "verify");
        if (vj.contains("discretization_tolerance")) {
            cfg.verify.discretization_tolerance = get_as<double>(vj, "discretization_tolerance", "verify");
        }
        if (cfg.verify.refinement < 2 || cfg.verify.random_pairs < 1 || cfg.verify.triples < 0) {
            throw ConfigError("verify: refinement >= 2, random_pairs >= 1, triples >= 0");
        }
    }

    if (j.contains("output")) cfg.output = resolve(base_dir, get_as<std::string>(j, "output", "config"));
    if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed", "config");
    if (j.contains("threads")) cfg.threads = get_as<int>(j, "threads", "config");
    return cfg;
}

RunConfig load_config(const fs::path& path)
{
    json j = read_json_file(path);
    return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// --- reports ----------------------------------------------------------------

bool RunReport::all_pass() const
{
    if (!failure.empty()) {
        return false;
    }
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

json RunReport::to_json() const
{
    json cj = json::array();
    for (const auto& c : checks) {
        json e{{"name", c.name},
               {"group", c.group},
               {"residual", c.residual},
               {"tolerance", c.tolerance},
               {"status", c.pass ? "pass" : "fail"}};
        if (!c.detail.empty()) {
            e["detail"] = c.detail;
        }
        if (c.refined_residual) {
            e["refined_residual"] = *c.refined_residual;
        }
        if (c.ratio) {
            e["ratio"] = *c.ratio;
        }
        cj.push_back(std::move(e));
    }
    json out{{"command", command}, {"status", all_pass() ? "pass" : "fail"}, {"checks", std::move(cj)},
             {"tasks", tasks}, {"outputs", outputs}};
    if (!failure.empty()) {
        out["failure"] = failure;
    }
    return out;
}

std::string format_check_table(const RunReport& report)
{
    std::ostringstream os;
    os << std::left << std::setw(34) << "identity" << std::setw(14) << "residual" << std::setw(14) << "refined"
       << std::setw(10) << "ratio" << std::setw(12) << "tolerance" << "status\n";
    os << std::string(90, '-') << "\n";
    for (const auto& c : report.checks) {
        std::ostringstream r, rr, ra, tol;
        r << std::setprecision(4) << c.residual;
        if (c.refined_residual) rr << std::setprecision(4) << *c.refined_residual;
        else rr << "-";
        if (c.ratio) ra << std::setprecision(4) << *c.ratio;
        else ra << "-";
        tol << std::setprecision(3) << c.tolerance;
        os << std::left << std::setw(34) << c.name << std::setw(14) << r.str() << std::setw(14) << rr.str()
           << std::setw(10) << ra.str() << std::setw(12) << tol.str() << (c.pass ? "pass" : "FAIL") << "\n";
    }
    if (!report.failure.empty()) {
        os << "numerical failure: " << report.failure << "\n";
    }
    return os.str();
}

// --- random fields ----------------------------------------------------------

TensorField smooth_random_field(const Grid& grid, int rank, std::uint64_t seed)
{
    if (rank != 0 && rank != 1) {
        throw ShapeMismatch("smooth_random_field: rank must be 0 or 1");
    }
    const int d = grid.dim();
    const int comps = rank == 0 ? 1 : d;
    constexpr int kMaxMode = 2;
    // modes m in {-2..2}^d, coefficients decaying like 1 / (1 + |m|^2)
    std::vector<std::vector<int>> modes;
    std::vector<int> m(d, -kMaxMode);
    while (true) {
        modes.push_back(m);
        int a = d - 1;
        while (a >= 0 && m[a] == kMaxMode) {
            m[a] = -kMaxMode;
            --a;
        }
        if (a < 0) break;
        ++m[a];
    }
    CounterRng rng(seed);
    std::vector<double> coef_c(modes.size() * comps), coef_s(modes.size() * comps);
    for (std::size_t q = 0; q < modes.size(); ++q) {
        double norm2 = 0.0;
        for (int v : modes[q]) norm2 += v * v;
        for (int c = 0; c < comps; ++c) {
            coef_c[q * comps + c] = rng.normal(q * comps + c, 0) / (1.0 + norm2);
            coef_s[q * comps + c] = rng.normal(q * comps + c, 1) / (1.0 + norm2);
        }
    }
    return make_field(grid, rank, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (std::size_t q = 0; q < modes.size(); ++q) {
            double phase = 0.0;
            for (int a = 0; a < d; ++a) {
                phase += 2.0 * std::numbers::pi * modes[q][a] * (grid.coordinate(n, a) - grid.origin(a)) / grid.period(a);
            }
            double cs = std::cos(phase);
            double sn = std::sin(phase);
            for (int c = 0; c < comps; ++c) {
                out[c] += coef_c[q * comps + c] * cs + coef_s[q * comps + c] * sn;
            }
        }
    });
}

// --- invariant suite ----------------------------------------------------------

namespace {

CheckResult exact_check(std::string name, std::string group, double residual, double tolerance, std::string detail = {})
{
    CheckResult c;
    c.name = std::move(name);
    c.group = std::move(group);
    c.residual = residual;
    c.tolerance = tolerance;
    c.pass = std::isfinite(residual) && residual <= tolerance;
    c.detail = std::move(detail);
    return c;
}

double max_abs_values(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

TensorField scalar_product(const TensorField& h, const TensorField& X)
{
    return make_field(X.grid(), 1, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        for (int i = 0; i < X.dim(); ++i) out[i] = h(n) * X(n, i);
    });
}

double masked_relative(const TensorField& residual, const TensorField& scale, const std::vector<bool>& mask)
{
    double s = max_abs(scale, mask);
    double r = max_abs(residual, mask);
    return s > 0.0 ? r / s : r;
}

TensorField difference(const TensorField& a, const TensorField& b)
{
    std::vector<double> v(a.values().size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    return TensorField(a.grid(), a.rank(), Symmetry::none, std::move(v));
}

// Discretization residuals at one resolution; every entry is O(h^2).
struct DiscretizationResiduals {
    double lemma_weighted_divergence = 0.0;  // div_f X - div X + X f
    double lemma_product_rule = 0.0;         // div_f(hX) - h div_f X - X h
    double weak_strong = 0.0;
    double strong_forms = 0.0;
    std::optional<double> corollary;
};

bool vanishes(const TensorField& t)
{
    return max_abs_values(t.values()) == 0.0;
}

DiscretizationResiduals discretization_residuals(const ManifoldData& md, std::uint64_t seed, int margin)
{
    DiscretizationResiduals r;
    auto mask = interior_mask(md, margin);
    TensorField X = smooth_random_field(md.grid, 1, seed);
    TensorField h = smooth_random_field(md.grid, 0, seed + 1);

    TensorField div_f = divergence_f(md, X);
    TensorField div = divergence_riemannian(md, X);
    TensorField xf = directional_derivative(X, md.f);
    auto lemma1 = make_field(md.grid, 0, Symmetry::none,
                             [&](std::size_t n, std::span<double> out) { out[0] = div_f(n) - div(n) + xf(n); });
    r.lemma_weighted_divergence = masked_relative(lemma1, div_f, mask);

    TensorField div_hx = divergence_f(md, scalar_product(h, X));
    TensorField xh = directional_derivative(X, h);
    auto lemma2 = make_field(md.grid, 0, Symmetry::none, [&](std::size_t n, std::span<double> out) {
        out[0] = div_hx(n) - h(n) * div_f(n) - xh(n);
    });
    r.lemma_product_rule = masked_relative(lemma2, div_hx, mask);

    DiscreteOperator L = assemble_weak_laplacian(md);
    TensorField weak = apply_weak_laplacian(md, L, X);
    StrongLaplacianOptions opts;
    opts.check_forms = false;
    opts.seam_margin = margin;
    StrongLaplacianResult strong = apply_strong_laplacian(md, X, opts);
    r.weak_strong = masked_relative(difference(weak, strong.proof_form), strong.proof_form, mask);
    r.strong_forms = strong.relative_gap;
    if (vanishes(md.C) && vanishes(md.f)) {
        TensorField ref = riemannian_connection_laplacian(md, X);
        r.corollary = masked_relative(difference(strong.proof_form, ref), strong.proof_form, mask);
    }
    return r;
}

CheckResult convergence_check(std::string name, double coarse, std::optional<double> fine, double tolerance)
{
    CheckResult c;
    c.name = std::move(name);
    c.group = "operators";
    c.residual = coarse;
    if (fine) {
        c.refined_residual = *fine;
        c.tolerance = kRatioSlack;
        if (coarse <= 1e-10 && *fine <= 1e-10) {
            c.pass = true;
            c.detail = "exact at both resolutions";
        } else {
            double ratio = *fine > 0.0 ? coarse / *fine : std::numeric_limits<double>::infinity();
            c.ratio = ratio;
            c.pass = std::abs(ratio - kExpectedRatio) <= kRatioSlack;
            c.detail = "h-halving ratio, expected 4 +- 1";
        }
    } else {
        c.tolerance = tolerance;
        c.pass = coarse <= tolerance;
        c.detail = "single resolution, relative residual";
    }
    return c;
}

double pairing_residual(const ManifoldData& md, const DiscreteOperator& D, const InnerProductData& ip,
                        std::uint64_t seed, int pairs)
{
    CounterRng rng(seed);
    double worst = 0.0;
    const Eigen::Index nv = static_cast<Eigen::Index>(md.vector_dofs());
    const Eigen::Index nw = static_cast<Eigen::Index>(pair_field_size(md));
    for (int p = 0; p < pairs; ++p) {
        Eigen::VectorXd X(nv), W(nw);
        for (Eigen::Index i = 0; i < nv; ++i) X[i] = rng.normal(static_cast<std::uint64_t>(i), 2 * p);
        for (Eigen::Index i = 0; i < nw; ++i) W[i] = rng.normal(static_cast<std::uint64_t>(i), 2 * p + 1);
        Eigen::VectorXd DX = D.matrix * X;
        Eigen::VectorXd adj = apply_adjoint(md, W);
        double lhs = DX.dot(ip.M * W);
        double rhs = X.dot(ip.B * adj);
        double scale = std::sqrt(DX.dot(ip.M * DX) * W.dot(ip.M * W));
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    return worst;
}

double max_connection_gap(const ManifoldData& md, bool self_dual)
{
    auto lc = md.levi_civita.coefficients().values();
    auto p = md.gamma.coefficients().values();
    auto q = md.gamma_dual.coefficients().values();
    auto k = md.K.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < lc.size(); ++i) {
        double scale = std::max({1.0, std::abs(lc[i]), std::abs(md.alpha * k[i])});
        double r = self_dual ? 0.5 * (p[i] + q[i]) - lc[i] : (q[i] - p[i]) - md.alpha * k[i];
        worst = std::max(worst, std::abs(r) / scale);
    }
    return worst;
}

void spectral_checks(std::vector<CheckResult>& out, const SpectralDecomposition& spec, const ManifoldData& md,
                     double t, const RunConfig& cfg, const std::string& label)
{
    const double tol = cfg.spectral.tolerance;
    out.push_back(exact_check("eigen_orthonormality" + label, "spectral", spec.orthonormality_residual, tol));
    out.push_back(exact_check("eigen_residual" + label, "spectral", spec.max_residual, tol));
    out.push_back(exact_check("eigen_nonnegative" + label, "spectral", std::max(0.0, -spec.raw_min_eigenvalue), kZeroEigenvalue));

    TensorField X = smooth_random_field(md.grid, 1, cfg.seed + 11);
    TensorField once = heat_apply(spec, t, heat_apply(spec, t, X).field).field;
    TensorField twice = heat_apply(spec, 2.0 * t, X).field;
    double semigroup = max_abs_difference(once, twice, std::vector<bool>(md.node_count(), true))
                       / std::max(1e-300, max_abs_values(X.values()));
    out.push_back(exact_check("heat_semigroup" + label, "spectral", semigroup, tol));

    CounterRng rng(cfg.seed + 13);
    const std::size_t N = md.node_count();
    double adj_gap = 0.0;
    double bound_violation = 0.0;
    for (int s = 0; s < 20; ++s) {
        std::size_t x = rng.bits(2 * s) % N;
        std::size_t y = rng.bits(2 * s + 1) % N;
        Eigen::MatrixXd pxy = heat_kernel_block(spec, md, t, x, y).matrix;
        Eigen::MatrixXd pyx = heat_kernel_block(spec, md, t, y, x).matrix;
        Eigen::MatrixXd lhs = md.g.matrix_at(x) * pxy;
        Eigen::MatrixXd rhs = (md.g.matrix_at(y) * pyx).transpose();
        // off-diagonal blocks decay; measure against the on-diagonal ones
        double scale = std::max({1e-300, (md.g.matrix_at(x) * heat_kernel_block(spec, md, t, x, x).matrix).cwiseAbs().maxCoeff(),
                                 (md.g.matrix_at(y) * heat_kernel_block(spec, md, t, y, y).matrix).cwiseAbs().maxCoeff()});
        adj_gap = std::max(adj_gap, (lhs - rhs).cwiseAbs().maxCoeff() / scale);
        double bound = 0.0;
        double gnorm = md.g.matrix_at(y).norm();
        for (std::size_t n = 0; n < spec.count(); ++n) {
            bound += std::exp(-spec.eigenvalues[n] * t) * spec.at(n, x).norm() * spec.at(n, y).norm() * gnorm;
        }
        bound_violation = std::max(bound_violation, std::max(0.0, pxy.norm() - bound * (1.0 + 1e-12)));
    }
    out.push_back(exact_check("heat_kernel_g_adjoint" + label, "spectral", adj_gap, tol));
    out.push_back(exact_check("heat_kernel_bound" + label, "spectral", bound_violation, 0.0));

    double form_gap = 0.0;
    double triangle = 0.0;
    double symmetric = 0.0;
    for (int s = 0; s < cfg.verify.triples; ++s) {
        std::size_t a = rng.bits(1000 + 3 * s) % N;
        std::size_t b = rng.bits(1001 + 3 * s) % N;
        std::size_t c = rng.bits(1002 + 3 * s) % N;
        auto ab = vector_diffusion_distance(spec, md, t, a, b);
        auto bc = vector_diffusion_distance(spec, md, t, b, c);
        auto ac = vector_diffusion_distance(spec, md, t, a, c);
        auto ba = vector_diffusion_distance(spec, md, t, b, a);
        for (const auto* dd : {&ab, &bc, &ac}) {
            form_gap = std::max(form_gap, std::abs(dd->trace_form - dd->double_sum_form)
                                              / std::max({1.0, std::abs(dd->trace_form), std::abs(dd->double_sum_form)}));
        }
        triangle = std::max(triangle, ac.distance - ab.distance - bc.distance);
        symmetric = std::max(symmetric, std::abs(ab.distance - ba.distance));
    }
    if (cfg.verify.triples > 0) {
        out.push_back(exact_check("vdd_form_agreement" + label, "spectral", form_gap, kFormTolerance));
        out.push_back(exact_check("vdd_triangle" + label, "spectral", std::max(0.0, triangle), 1e-9));
        out.push_back(exact_check("vdd_symmetry" + label, "spectral", symmetric, 1e-12));
    }
}

} // namespace

std::vector<CheckResult> run_invariant_suite(const RunConfig& cfg, bool with_refinement)
{
    std::vector<CheckResult> out;
    ManifoldData md = build_manifold(cfg.manifold);
    const int margin = 3;

    // geometry
    out.push_back(exact_check("metric_inverse", "geometry", metric_inverse_residual(md.g, md.g_inv), 1e-12));
    out.push_back(exact_check("connection_difference", "geometry", max_connection_gap(md, false), 1e-14));
    out.push_back(exact_check("connection_self_dual", "geometry", max_connection_gap(md, true), 1e-14));
    double min_rho = *std::min_element(md.rho.values().begin(), md.rho.values().end());
    out.push_back(exact_check("density_positive", "geometry", min_rho > 0.0 ? 0.0 : 1.0, 0.0));

    // exact identities of the discrete operators
    DiscreteOperator L = assemble_weak_laplacian(md);
    Eigen::SparseMatrix<double> asym = L.matrix - Eigen::SparseMatrix<double>(L.matrix.transpose());
    double sym = 0.0;
    for (int c = 0; c < asym.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(asym, c); it; ++it) sym = std::max(sym, std::abs(it.value()));
    }
    out.push_back(exact_check("weak_symmetry", "operators", sym, 0.0, "bit-exact"));

    EigenOptions eopts;
    eopts.tolerance = cfg.spectral.tolerance;
    eopts.seed = cfg.seed;
    SpectralDecomposition spec = eigendecompose(L, md, std::min(cfg.spectral.k, md.vector_dofs()), eopts);
    out.push_back(exact_check("weak_psd", "operators", std::max(0.0, -spec.raw_min_eigenvalue), 1e-10,
                              "smallest generalized eigenvalue"));

    {
        TensorField X = smooth_random_field(md.grid, 1, cfg.seed + 3);
        TensorField dv = divergence_f(md, X);
        std::vector<double> terms(md.node_count()), mags(md.node_count());
        for (std::size_t n = 0; n < md.node_count(); ++n) {
            terms[n] = dv(n) * md.rho(n);
            mags[n] = std::abs(terms[n]);
        }
        double total = std::abs(pairwise_sum(terms)) / std::max(1e-300, pairwise_sum(mags));
        out.push_back(exact_check("divergence_integral", "operators", total, 1e-12, "integral of div_f X rho"));
    }

    DiscreteOperator D = covariant_derivative(md);
    InnerProductData ip = inner_product_data(md);
    out.push_back(exact_check("adjoint_pairing", "operators",
                              pairing_residual(md, D, ip, cfg.seed + 5, cfg.verify.random_pairs), 1e-10));

    {
        TensorField X = smooth_random_field(md.grid, 1, cfg.seed + 7);
        auto shifted_f = make_field(md.grid, 0, Symmetry::none,
                                    [&](std::size_t n, std::span<double> o) { o[0] = md.f(n) + 1.0; });
        ManifoldData shifted = with_potential(md, shifted_f);
        TensorField a = apply_weak_laplacian(md, L, X);
        TensorField b = apply_weak_laplacian(shifted, assemble_weak_laplacian(shifted), X);
        StrongLaplacianOptions opts;
        opts.check_forms = false;
        TensorField sa = apply_strong_laplacian(md, X, opts).proof_form;
        TensorField sb = apply_strong_laplacian(shifted, X, opts).proof_form;
        std::vector<bool> all(md.node_count(), true);
        double r = std::max(max_abs_difference(a, b, all) / std::max(1e-300, max_abs(a, all)),
                            max_abs_difference(sa, sb, all) / std::max(1e-300, max_abs(sa, all)));
        out.push_back(exact_check("potential_shift_invariance", "operators", r, 1e-12));
    }

    // discretization identities, optionally with h-refinement
    DiscretizationResiduals coarse = discretization_residuals(md, cfg.seed + 9, margin);
    std::optional<DiscretizationResiduals> fine;
    if (with_refinement && cfg.manifold.refinable() && cfg.manifold.potential != "field") {
        ManifoldData md_fine = build_manifold(cfg.manifold, cfg.verify.refinement);
        fine = discretization_residuals(md_fine, cfg.seed + 9, margin * cfg.verify.refinement);
    }
    const double dtol = cfg.verify.discretization_tolerance;
    auto f_of = [&](auto member) -> std::optional<double> {
        if (!fine) return std::nullopt;
        return (*fine).*member;
    };
    out.push_back(convergence_check("lemma_weighted_divergence", coarse.lemma_weighted_divergence,
                                    f_of(&DiscretizationResiduals::lemma_weighted_divergence), dtol));
    out.push_back(convergence_check("lemma_product_rule", coarse.lemma_product_rule,
                                    f_of(&DiscretizationResiduals::lemma_product_rule), dtol));
    out.push_back(convergence_check("weak_strong_consistency", coarse.weak_strong,
                                    f_of(&DiscretizationResiduals::weak_strong), dtol));
    out.push_back(convergence_check("strong_form_agreement", coarse.strong_forms,
                                    f_of(&DiscretizationResiduals::strong_forms), dtol));
    if (coarse.corollary) {
        std::optional<double> fc;
        if (fine) fc = fine->corollary;
        out.push_back(convergence_check("connection_laplacian_corollary", *coarse.corollary, fc, dtol));
    }

    // spectral invariants on the configured spectrum
    spectral_checks(out, spec, md, cfg.vdd.t, cfg, "");

    // kernel invariants
    if (cfg.has_task("kernel-gram") || (!cfg.kernel.samples.empty() && cfg.manifold.is_catalog_model())) {
        auto model = make_model(cfg.manifold.model, cfg.manifold.fixed_params);
        SpectralDecomposition kspec = spectrum_for_time(L, md, cfg.kernel.t, cfg.spectral.tail_tolerance, eopts);
        KernelContext ctx;
        ctx.model = model.get();
        ctx.manifold = &md;
        ctx.spectrum = &kspec;
        ctx.prior = make_prior(md, cfg.kernel.prior, cfg.kernel.prior_params);
        ctx.posterior_options.min_support_nodes = cfg.kernel.min_support_nodes;
        double norm_gap = 0.0;
        for (const auto& s : cfg.kernel.samples) {
            PosteriorField pf = posterior_field(*model, ctx.prior, s.value, md, ctx.posterior_options);
            norm_gap = std::max(norm_gap, std::abs(integrate(md, pf.density) - 1.0));
        }
        out.push_back(exact_check("posterior_normalization", "kernels", norm_gap, 1e-10));
        std::vector<Sample> values;
        for (const auto& s : cfg.kernel.samples) values.push_back(s.value);
        GramMatrix gram = kernel_gram(ctx, values, cfg.kernel.t, cfg.threads);
        double scale = std::max(1e-300, gram.values.cwiseAbs().maxCoeff());
        out.push_back(exact_check("gram_symmetry", "kernels", gram.asymmetry / scale, 1e-12));
        out.push_back(exact_check("gram_psd", "kernels", std::max(0.0, -gram.min_eigenvalue), 1e-10));
        out.push_back(exact_check("kernel_form_agreement", "kernels", gram.max_form_gap, kKernelFormTolerance,
                                  std::to_string(gram.cross_checked) + " entries cross-checked"));
        double tri = 0.0;
        const std::size_t m = values.size();
        auto dist = [&](std::size_t i, std::size_t j) {
            return std::sqrt(std::max(0.0, gram.values(i, i) + gram.values(j, j) - 2.0 * gram.values(i, j)));
        };
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t k = 0; k < m; ++k) tri = std::max(tri, dist(i, k) - dist(i, j) - dist(j, k));
        out.push_back(exact_check("kernel_triangle", "kernels", std::max(0.0, tri), 1e-9));
    }
    return out;
}

// --- pipeline -----------------------------------------------------------------

namespace {

std::string csv_matrix(const std::vector<std::string>& ids, const Eigen::MatrixXd& m, const std::string& corner)
{
    std::ostringstream os;
    os << corner;
    for (const auto& id : ids) os << "," << id;
    os << "\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        os << ids[i];
        for (std::size_t j = 0; j < ids.size(); ++j) {
            os << "," << format_double(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        os << "\n";
    }
    return os.str();
}

std::string spectrum_csv(const SpectralDecomposition& spec)
{
    std::ostringstream os;
    os << "index,eigenvalue\n";
    for (std::size_t n = 0; n < spec.count(); ++n) {
        os << n << "," << format_double(spec.eigenvalues[n]) << "\n";
    }
    return os.str();
}

std::string eigenfield_name(std::size_t n)
{
    std::ostringstream os;
    os << "X_" << std::setw(4) << std::setfill('0') << n;
    return os.str();
}

} // namespace

RunReport run_pipeline(const RunConfig& cfg, bool verify_only)
{
    RunReport report;
    report.command = verify_only ? "verify" : "run";
    fs::create_directories(cfg.output);
    auto emit = [&](const std::string& name, const std::string& contents) {
        write_file_atomic(cfg.output / name, contents);
        report.outputs.push_back(name);
    };

    try {
        report.checks = run_invariant_suite(cfg, verify_only || cfg.has_task("verify"));

        if (!verify_only) {
            ManifoldData md = build_manifold(cfg.manifold);
            DiscreteOperator L = assemble_weak_laplacian(md);
            EigenOptions eopts;
            eopts.tolerance = cfg.spectral.tolerance;
            eopts.seed = cfg.seed;

            if (cfg.has_task("spectrum")) {
                SpectralDecomposition spec = eigendecompose(L, md, std::min(cfg.spectral.k, md.vector_dofs()), eopts);
                emit("spectrum.csv", spectrum_csv(spec));
                FieldSet fields;
                for (std::size_t n = 0; n < spec.count(); ++n) fields.emplace(eigenfield_name(n), spec.field(n));
                emit("eigenfields.json", fields_to_json(md.grid, fields).dump() + "\n");
                report.tasks["spectrum"] = json{{"count", spec.count()},
                                                {"complete", spec.complete},
                                                {"max_residual", spec.max_residual},
                                                {"orthonormality_residual", spec.orthonormality_residual}};
            }
            if (cfg.has_task("vdd-matrix")) {
                SpectralDecomposition spec = spectrum_for_time(L, md, cfg.vdd.t, cfg.spectral.tail_tolerance, eopts);
                std::vector<std::size_t> nodes;
                for (std::size_t n = 0; n < md.node_count(); n += cfg.vdd.node_stride) nodes.push_back(n);
                DistanceMatrix dm = vdd_matrix(spec, md, cfg.vdd.t, nodes, 5e8, cfg.threads);
                std::vector<std::string> ids;
                for (auto n : nodes) ids.push_back(std::to_string(n));
                emit("vdd_matrix.csv", csv_matrix(ids, dm.distances, "node"));
                double sym = (dm.distances - dm.distances.transpose()).cwiseAbs().maxCoeff();
                double diag = dm.distances.diagonal().cwiseAbs().maxCoeff();
                report.checks.push_back(exact_check("vdd_matrix_symmetry", "spectral", sym, 0.0));
                report.checks.push_back(exact_check("vdd_matrix_zero_diagonal", "spectral", diag, 0.0));
                report.checks.push_back(exact_check("vdd_matrix_form_agreement", "spectral", dm.max_form_gap, kFormTolerance,
                                                    std::to_string(dm.pairs_cross_checked) + " pairs cross-checked"));
                report.tasks["vdd-matrix"] = json{{"t", cfg.vdd.t},
                                                  {"nodes", nodes.size()},
                                                  {"modes", spec.count()},
                                                  {"tail_bound", dm.tail_bound}};
            }
            if (cfg.has_task("kernel-gram")) {
                auto model = make_model(cfg.manifold.model, cfg.manifold.fixed_params);
                SpectralDecomposition spec = spectrum_for_time(L, md, cfg.kernel.t, cfg.spectral.tail_tolerance, eopts);
                KernelContext ctx;
                ctx.model = model.get();
                ctx.manifold = &md;
                ctx.spectrum = &spec;
                ctx.prior = make_prior(md, cfg.kernel.prior, cfg.kernel.prior_params);
                ctx.posterior_options.min_support_nodes = cfg.kernel.min_support_nodes;
                std::vector<Sample> values;
                std::vector<std::string> ids;
                for (const auto& s : cfg.kernel.samples) {
                    values.push_back(s.value);
                    ids.push_back(s.id);
                }
                GramMatrix gram = kernel_gram(ctx, values, cfg.kernel.t, cfg.threads);
                emit("gram.csv", csv_matrix(ids, gram.values, "id"));
                report.tasks["kernel-gram"] = json{{"t", cfg.kernel.t},
                                                   {"samples", values.size()},
                                                   {"min_eigenvalue", gram.min_eigenvalue},
                                                   {"modes", spec.count()},
                                                   {"tail_bound", gram.tail_bound}};
            }
        }
    } catch (const IoError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        report.failure = e.what();
    }
    report.outputs.push_back("report.json");
    write_file_atomic(cfg.output / "report.json", report.to_json().dump(2) + "\n");
    return report;
}

// --- CLI ----------------------------------------------------------------------

int cli_main(int argc, char** argv)
{
    CLI::App app{"statlap: vector Laplacian, heat kernels and diffusion distances on statistical manifolds"};
    app.require_subcommand(1);
    std::string config_path;
    std::string output;
    std::uint64_t seed = 0;
    int threads = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--output", output, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "random seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads; affects wall time only");
    };
    CLI::App* run = app.add_subcommand("run", "execute the configured tasks and the invariant suite");
    CLI::App* verify = app.add_subcommand("verify", "run only the invariant suite with h-refinement");
    add_common(run);
    add_common(verify);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const bool verify_only = verify->parsed();
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        if (!output.empty()) cfg.output = output;
        if (verify->count("--seed") + run->count("--seed") > 0) cfg.seed = seed;
        if (threads > 0) cfg.threads = threads;
    } catch (const IoError& e) {
        std::cerr << "statlap: I/O error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "statlap: config error: " << e.what() << "\n";
        return 2;
    }

    try {
        RunReport report = run_pipeline(cfg, verify_only);
        if (verify_only) {
            std::cout << format_check_table(report);
        }
        if (!report.failure.empty()) {
            std::cerr << "statlap: numerical failure: " << report.failure << "\n";
            return 3;
        }
        for (const auto& c : report.checks) {
            if (!c.pass) {
                std::cerr << "statlap: check failed: " << c.name << " (residual " << c.residual << ", tolerance "
                          << c.tolerance << ")\n";
            }
        }
        return report.all_pass() ? 0 : 3;
    } catch (const IoError& e) {
        std::cerr << "statlap: I/O error: " << e.what() << "\n";
        return 4;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "statlap: I/O error: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "statlap: config error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace statlap
