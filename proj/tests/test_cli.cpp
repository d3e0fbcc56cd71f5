#include "statlap/errors.hpp"
#include "statlap/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace statlap;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch()
    {
        dir = fs::temp_directory_path() / ("statlap_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    fs::path write(const std::string& name, const std::string& text) const
    {
        std::ofstream(dir / name) << text;
        return dir / name;
    }
};

int run_cli(const std::string& args)
{
    std::string cmd = std::string(STATLAP_CLI) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

const std::string kConfigDir = STATLAP_CONFIG_DIR;

} // namespace

TEST_CASE("config validation")
{
    json base = json::parse(R"({"model": {"model": "synthetic_flat",
        "chart": {"center": [0.5], "period": [1.0], "points": [8]}}, "tasks": ["spectrum"]})");
    CHECK_NOTHROW(parse_config(base, "."));

    json bad = base;
    bad["colour"] = 1;
    CHECK_THROWS_AS(parse_config(bad, "."), ConfigError);
    bad = base;
    bad["model"]["chart"]["pts"] = 3;
    CHECK_THROWS_AS(parse_config(bad, "."), ConfigError);
    bad = base;
    bad["tasks"] = {"spectra"};
    CHECK_THROWS_AS(parse_config(bad, "."), ConfigError);
    bad = base;
    bad["model"]["model"] = "poisson";
    CHECK_THROWS_AS(parse_config(bad, "."), ConfigError);
    bad = base;
    bad["f"] = {{"field_file", "/nonexistent/f.json"}};
    CHECK_THROWS_AS(parse_config(bad, "."), IoError);
    bad = base;
    bad["model"]["model"] = "bernoulli";
    bad["model"]["chart"]["points"] = {8, 8};
    bad["model"]["chart"]["center"] = {0.5, 0.5};
    bad["model"]["chart"]["period"] = {0.8, 0.8};
    CHECK_THROWS_AS(parse_config(bad, "."), ConfigError);
}

TEST_CASE("statlap run on the flat torus")
{
    Scratch s;
    REQUIRE(run_cli("run --config " + kConfigDir + "/flat_torus.json --output " + (s.dir / "out").string()) == 0);
    CHECK(fs::exists(s.dir / "out" / "spectrum.csv"));
    json report = json::parse(slurp(s.dir / "out" / "report.json"));
    CHECK(report["status"] == "pass");
    REQUIRE(report["checks"].size() > 10);
    for (const auto& c : report["checks"]) CHECK(c["status"] == "pass");
}

TEST_CASE("bernoulli distance matrix")
{
    Scratch s;
    REQUIRE(run_cli("run --config " + kConfigDir + "/bernoulli_vdd.json --output " + (s.dir / "out").string()) == 0);
    auto rows = read_csv(s.dir / "out" / "vdd_matrix.csv");
    const std::size_t n = rows.size() - 1;
    REQUIRE(n > 1);
    for (std::size_t i = 1; i <= n; ++i) {
        REQUIRE(rows[i].size() == n + 1);
        CHECK(std::stod(rows[i][i]) == 0.0);
        for (std::size_t j = 1; j <= n; ++j) CHECK(rows[i][j] == rows[j][i]);
    }
    CHECK(fs::exists(s.dir / "out" / "gram.csv"));
}

TEST_CASE("alpha is irrelevant when C vanishes")
{
    Scratch s;
    auto config = [&](double alpha) {
        json j = json::parse(R"({"model": {"model": "gaussian_location", "fixed_params": {"sigma": 1.0},
            "chart": {"center": [0.0], "period": [6.0], "points": [48]}}, "f": "zero", "tasks": ["spectrum"],
            "spectral": {"k": 12}})");
        j["alpha"] = alpha;
        return s.write("alpha" + std::to_string(static_cast<int>(alpha)) + ".json", j.dump());
    };
    REQUIRE(run_cli("run --config " + config(0.0).string() + " --output " + (s.dir / "a0").string()) == 0);
    REQUIRE(run_cli("run --config " + config(1.0).string() + " --output " + (s.dir / "a1").string()) == 0);
    CHECK(slurp(s.dir / "a0" / "spectrum.csv") == slurp(s.dir / "a1" / "spectrum.csv"));
}

TEST_CASE("error exit codes")
{
    Scratch s;
    SUBCASE("malformed config writes nothing")
    {
        auto cfg = s.write("bad.json", R"({"model": {"model": "synthetic_flat"}, "tasks": ["spectrum"],)");
        CHECK(run_cli("run --config " + cfg.string() + " --output " + (s.dir / "out").string()) == 2);
        CHECK_FALSE(fs::exists(s.dir / "out"));
        auto unknown = s.write("unknown.json", R"({"model": {"model": "synthetic_flat",
            "chart": {"center": [0.5], "period": [1.0], "points": [8]}}, "speed": 3})");
        CHECK(run_cli("verify --config " + unknown.string() + " --output " + (s.dir / "out").string()) == 2);
        CHECK_FALSE(fs::exists(s.dir / "out"));
    }
    SUBCASE("missing files are I/O errors")
    {
        CHECK(run_cli("run --config " + (s.dir / "nope.json").string()) == 4);
        auto cfg = s.write("missing.json", R"({"model": {"model": "fields", "fields_file": "absent.json"}})");
        CHECK(run_cli("run --config " + cfg.string() + " --output " + (s.dir / "out").string()) == 4);
        CHECK_FALSE(fs::exists(s.dir / "out"));
    }
    SUBCASE("bad flags")
    {
        CHECK(run_cli("run") == 2);
        CHECK(run_cli("launch --config x.json") == 2);
    }
}

TEST_CASE("reproducible outputs")
{
    Scratch s;
    const std::string cfg = kConfigDir + "/bernoulli_vdd.json";
    REQUIRE(run_cli("run --config " + cfg + " --seed 7 --output " + (s.dir / "a").string()) == 0);
    REQUIRE(run_cli("run --config " + cfg + " --seed 7 --threads 3 --output " + (s.dir / "b").string()) == 0);
    for (const char* f : {"report.json", "spectrum.csv", "eigenfields.json", "vdd_matrix.csv", "gram.csv"}) {
        CHECK_MESSAGE(slurp(s.dir / "a" / f) == slurp(s.dir / "b" / f), f);
    }
}
