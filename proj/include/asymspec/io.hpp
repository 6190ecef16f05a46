#pragma once

// File formats: model config JSON, density CSV + JSON sidecar, filter JSON,
// rates and summary CSVs. Numbers are written in shortest round-trip form so
// identical inputs give byte-identical files.

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "consensus.hpp"
#include "errors.hpp"
#include "filterdesign.hpp"
#include "grid.hpp"
#include "netmodel.hpp"

namespace asymspec {

using json = nlohmann::ordered_json;

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

inline double parse_number(const std::string& s) {
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw config_error("bad number '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Model config: {"M":int, "S":int, "theta":[[...]] | {"diag":x,"next":y}, "alpha":float}

inline ModelConfig model_config_from_json(const json& j) {
    try {
        ModelConfig c;
        c.populations = j.at("M").get<int>();
        c.population_size = j.at("S").get<int>();
        c.alpha = j.value("alpha", 1.0);
        const json& th = j.at("theta");
        if (th.is_object()) {
            c.theta = CyclicTheta{th.at("diag").get<double>(), th.at("next").get<double>()};
        } else if (th.is_array()) {
            const auto m = static_cast<Eigen::Index>(th.size());
            Eigen::MatrixXd theta(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                const json& row = th.at(static_cast<std::size_t>(i));
                if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m)
                    throw config_error("theta must be a square matrix");
                for (Eigen::Index k = 0; k < m; ++k) theta(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
            }
            c.theta = theta;
        } else {
            throw config_error("theta must be a matrix or {\"diag\", \"next\"}");
        }
        return c;
    } catch (const json::exception& e) {
        throw config_error(std::string("model config: ") + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw config_error("'" + path + "': " + e.what());
    }
}

inline ModelConfig load_model_config(const std::string& path) { return model_config_from_json(read_json_file(path)); }

inline json model_to_json(const BlockModel& m) {
    json theta = json::array();
    for (Eigen::Index i = 0; i < m.theta.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.theta.cols(); ++k) row.push_back(m.theta(i, k));
        theta.push_back(row);
    }
    return json{{"M", m.populations}, {"S", m.population_size}, {"theta", theta}, {"alpha", m.alpha}};
}

// ---------------------------------------------------------------------------

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw config_error("write failed for '" + path + "'");
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Density grid CSV: header `t,s,density`, row-major (t outer).

inline std::string density_csv(const DensityField& f) {
    std::string out = "t,s,density\n";
    out.reserve(f.grid.size() * 48);
    for (int i = 0; i < f.grid.n_t; ++i)
        for (int j = 0; j < f.grid.n_s; ++j) {
            out += format_number(f.grid.t(i));
            out += ',';
            out += format_number(f.grid.s(j));
            out += ',';
            out += format_number(f.at(i, j));
            out += '\n';
        }
    return out;
}

inline json density_sidecar(const DensityField& f) {
    std::size_t support = 0;
    for (auto s : f.support) support += s;
    return json{{"grid",
                 {{"t_min", f.grid.t_min},
                  {"t_max", f.grid.t_max},
                  {"s_min", f.grid.s_min},
                  {"s_max", f.grid.s_max},
                  {"n_t", f.grid.n_t},
                  {"n_s", f.grid.n_s}}},
                {"beta", f.beta},
                {"u_max", f.u_max},
                {"quadrature_nodes", f.quadrature_nodes},
                {"mass", field_mass(f)},
                {"max_density", f.max_value()},
                {"mask",
                 {{"valid_points", support},
                  {"masked_points", f.masked_points},
                  {"clipped_negatives", f.clipped_negatives},
                  {"flagged_negatives", f.flagged_negatives},
                  {"clipped_mass", f.clipped_mass}}}};
}

inline std::string sidecar_path(const std::string& csv_path) {
    const auto dot = csv_path.rfind('.');
    const auto slash = csv_path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return csv_path + ".json";
    return csv_path.substr(0, dot) + ".json";
}

/// Reads a density CSV; the grid comes from the sidecar when present and is
/// otherwise inferred from the coordinates.
inline DensityField read_density(const std::string& csv_path) {
    std::istringstream in(read_text(csv_path));
    std::string line;
    if (!std::getline(in, line) || line != "t,s,density")
        throw config_error("'" + csv_path + "' is not a density CSV (expected header t,s,density)");
    std::vector<double> t, s, v;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) throw config_error("malformed density row: " + line);
        t.push_back(parse_number(line.substr(0, c1)));
        s.push_back(parse_number(line.substr(c1 + 1, c2 - c1 - 1)));
        v.push_back(parse_number(line.substr(c2 + 1)));
    }
    if (v.empty()) throw config_error("'" + csv_path + "' has no rows");

    DensityField f;
    std::ifstream probe(sidecar_path(csv_path));
    if (probe) {
        const json meta = read_json_file(sidecar_path(csv_path));
        const json& g = meta.at("grid");
        f.grid = GridSpec{g.at("t_min"), g.at("t_max"), g.at("s_min"), g.at("s_max"), g.at("n_t"), g.at("n_s")};
        f.beta = meta.value("beta", 0.0);
        f.u_max = meta.value("u_max", 0.0);
        f.quadrature_nodes = meta.value("quadrature_nodes", 0);
    } else {
        int n_s = 1;
        while (n_s < static_cast<int>(t.size()) && t[static_cast<std::size_t>(n_s)] == t[0]) ++n_s;
        const int n_t = static_cast<int>(t.size()) / n_s;
        f.grid = GridSpec{t.front(), t.back(), s.front(), s[static_cast<std::size_t>(n_s - 1)], n_t, n_s};
    }
    if (f.grid.size() != v.size()) throw config_error("density CSV row count does not match its grid");
    f.grid.validate();
    f.values = std::move(v);
    f.support.assign(f.values.size(), 1);
    return f;
}

inline void write_density(const std::string& csv_path, const DensityField& f, const json& extra) {
    write_text(csv_path, density_csv(f));
    json meta = density_sidecar(f);
    for (const auto& [k, val] : extra.items()) meta[k] = val;
    write_json(sidecar_path(csv_path), meta);
}

// ---------------------------------------------------------------------------

inline json filter_to_json(const FilterSpec& f, double kappa, double tau) {
    json coeffs = json::array();
    for (double a : f.coefficients) coeffs.push_back(a);
    return json{{"degree", f.degree}, {"coefficients", coeffs}, {"epsilon", f.epsilon},
                {"method", to_string(f.method)}, {"kappa", kappa}, {"tau", tau}, {"degenerate", f.degenerate}};
}

inline FilterSpec filter_from_json(const json& j) {
    try {
        FilterSpec f;
        f.degree = j.at("degree").get<int>();
        f.coefficients = j.at("coefficients").get<std::vector<double>>();
        f.epsilon = j.value("epsilon", 0.0);
        f.method = parse_filter_method(j.value("method", std::string("proposed")));
        f.degenerate = j.value("degenerate", false);
        if (static_cast<int>(f.coefficients.size()) != f.degree + 1)
            throw config_error("filter has degree " + std::to_string(f.degree) + " but " +
                               std::to_string(f.coefficients.size()) + " coefficients");
        return f;
    } catch (const json::exception& e) {
        throw config_error(std::string("filter JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

inline std::string rates_csv(const ConsensusOutcome& o) {
    std::string out = "trial,method,degree,rate\n";
    for (const auto& r : o.rows) {
        out += std::to_string(r.trial) + ',' + to_string(r.method) + ',' + std::to_string(r.degree) + ',' +
               format_number(r.rate) + '\n';
    }
    return out;
}

inline std::string summary_csv(const ConsensusOutcome& o) {
    std::string out = "method,degree,median,q25,q75,excluded_trials\n";
    for (const auto& s : o.summary) {
        out += std::string(to_string(s.method)) + ',' + std::to_string(s.degree) + ',' + format_number(s.median) +
               ',' + format_number(s.q25) + ',' + format_number(s.q75) + ',' + std::to_string(s.excluded_trials) +
               '\n';
    }
    return out;
}

} // namespace asymspec
