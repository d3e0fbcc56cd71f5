#pragma once

#include "statlap/geometry.hpp"
#include "statlap/kernels.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace statlap {

struct ChartSpec {
    std::vector<double> center;
    std::vector<double> period;
    std::vector<int> points;

    Grid grid(int refinement = 1) const;
};

/// Where the manifold fields come from.
struct ManifoldSpec {
    /// Catalog model name, "synthetic_trig", "synthetic_flat", or "fields".
    std::string model;
    std::map<std::string, double> fixed_params;
    std::optional<ChartSpec> chart;
    std::filesystem::path fields_file;
    double alpha = 1.0;
    /// "zero", "log-sqrt-det-g", "model" (preset or file potential) or "field".
    std::string potential = "zero";
    std::filesystem::path potential_file;
    std::string potential_name = "f";

    bool is_catalog_model() const;
    /// Fields can be resampled on a refined chart.
    bool refinable() const { return model != "fields"; }
};

ManifoldData build_manifold(const ManifoldSpec& spec, int refinement = 1);

struct SampleEntry {
    std::string id;
    Sample value = 0.0;
};

struct RunConfig {
    ManifoldSpec manifold;
    struct Spectral {
        std::size_t k = 16;
        double tolerance = 1e-8;
        double tail_tolerance = 1e-12;
    } spectral;
    std::vector<std::string> tasks;
    struct Vdd {
        double t = 1.0;
        std::size_t node_stride = 1;
    } vdd;
    struct Kernel {
        std::vector<SampleEntry> samples;
        double t = 0.1;
        PriorKind prior = PriorKind::bump;
        std::map<std::string, double> prior_params;
        double min_support_nodes = 8.0;
    } kernel;
    struct Verify {
        int refinement = 2;
        int random_pairs = 20;
        int triples = 200;
        double discretization_tolerance = 0.05;
    } verify;
    std::filesystem::path output = "statlap_out";
    std::uint64_t seed = 0;
    int threads = 1;

    bool has_task(const std::string& task) const;
};

/// Validates against the schema; unknown keys and missing referenced files are
/// rejected (ConfigError, IoError). Relative paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// One invariant check: residual against tolerance, optionally with an
/// h-refinement column.
struct CheckResult {
    std::string name;
    std::string group;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
    std::optional<double> refined_residual;
    std::optional<double> ratio;
};

struct RunReport {
    std::string command;
    std::vector<CheckResult> checks;
    nlohmann::json tasks = nlohmann::json::object();
    std::vector<std::string> outputs;
    std::string failure;  // numerical failure message, if any

    bool all_pass() const;
    nlohmann::json to_json() const;
};

/// Convergence window for discretization checks: ratio 4 +- 25 percent.
inline constexpr double kExpectedRatio = 4.0;
inline constexpr double kRatioSlack = 1.0;

/// Invariant suite over the operators, spectral and (when configured) kernel
/// modules. `with_refinement` adds the h-halving convergence column.
std::vector<CheckResult> run_invariant_suite(const RunConfig& config, bool with_refinement);

/// Executes the configured tasks (or only the suite when `verify_only`),
/// writing artifacts into config.output. Does not throw on failed checks; the
/// report says which failed.
RunReport run_pipeline(const RunConfig& config, bool verify_only);

std::string format_check_table(const RunReport& report);

/// Smooth random vector (rank 1) or scalar (rank 0) field built from the
/// lowest Fourier modes of the chart, deterministic in `seed`.
TensorField smooth_random_field(const Grid& grid, int rank, std::uint64_t seed);

/// CLI entry point. Exit codes: 0 pass, 2 config error, 3 numerical failure,
/// 4 I/O error.
int cli_main(int argc, char** argv);

} // namespace statlap
