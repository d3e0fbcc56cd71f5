#include "statlap/field_io.hpp"

#include "statlap/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace statlap {

using nlohmann::json;

json grid_to_json(const Grid& grid)
{
    return json{{"dims", grid.dim()},
                {"points", grid.points()},
                {"periods", grid.periods()},
                {"origin", grid.origins()}};
}

Grid grid_from_json(const json& j)
{
    try {
        auto points = j.at("points").get<std::vector<int>>();
        auto periods = j.at("periods").get<std::vector<double>>();
        std::vector<double> origin;
        if (j.contains("origin")) {
            origin = j.at("origin").get<std::vector<double>>();
        }
        if (j.contains("dims") && j.at("dims").get<int>() != static_cast<int>(points.size())) {
            throw ShapeMismatch("grid: dims disagrees with points");
        }
        return Grid(points, periods, origin);
    } catch (const json::exception& e) {
        throw ShapeMismatch(std::string("grid: ") + e.what());
    }
}

json fields_to_json(const Grid& grid, const FieldSet& fields)
{
    json out;
    out["grid"] = grid_to_json(grid);
    json fj = json::object();
    for (const auto& [name, field] : fields) {
        if (!(field.grid() == grid)) {
            throw ShapeMismatch("field '" + name + "' lives on a different grid");
        }
        fj[name] = json{{"rank", field.rank()},
                        {"symmetries", to_string(field.symmetry())},
                        {"values", std::vector<double>(field.values().begin(), field.values().end())}};
    }
    out["fields"] = std::move(fj);
    return out;
}

FieldSet fields_from_json(const json& j)
{
    Grid grid = grid_from_json(j.at("grid"));
    FieldSet out;
    try {
        for (const auto& [name, fj] : j.at("fields").items()) {
            int rank = fj.at("rank").get<int>();
            Symmetry sym = fj.contains("symmetries")
                               ? symmetry_from_string(fj.at("symmetries").get<std::string>())
                               : Symmetry::none;
            out.emplace(name, TensorField(grid, rank, sym, fj.at("values").get<std::vector<double>>()));
        }
    } catch (const json::exception& e) {
        throw ShapeMismatch(std::string("field container: ") + e.what());
    }
    return out;
}

json sparse_to_json(const Eigen::SparseMatrix<double>& m, const std::string& tag)
{
    json triplets = json::array();
    for (int c = 0; c < m.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it) {
            triplets.push_back(json::array({it.row(), it.col(), it.value()}));
        }
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"tag", tag}, {"triplets", std::move(triplets)}};
}

Eigen::SparseMatrix<double> sparse_from_json(const json& j)
{
    Eigen::SparseMatrix<double> m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    std::vector<Eigen::Triplet<double>> t;
    for (const auto& e : j.at("triplets")) {
        t.emplace_back(e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>());
    }
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write '" + tmp.string() + "'");
        }
        out << contents;
        if (!out) {
            throw IoError("write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

std::string format_double(double x)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

} // namespace statlap
