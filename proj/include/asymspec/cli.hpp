#pragma once

// Command implementations behind the asymspec CLI. Each command reads a
// RunConfig, writes its outputs under `out` and returns a process exit code;
// configuration errors surface as config_error (exit 2) and solver failures
// as numerical_error (exit 1).

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "canonical.hpp"
#include "consensus.hpp"
#include "errors.hpp"
#include "filterdesign.hpp"
#include "io.hpp"
#include "netmodel.hpp"

namespace asymspec {

struct RunConfig {
    std::string config_path;
    std::string density_path; // design / simulate: precomputed W density
    std::string out = ".";

    int grid_n_t = 201, grid_n_s = 201;
    std::optional<std::array<double, 4>> bounds; // W plane: t_min, t_max, s_min, s_max

    double beta = 1e-6;
    double u_max = 1e2;
    int nodes = 200;

    double kappa = 0.1;
    Threshold tau{0.02, true};
    std::size_t max_points = 400;

    std::vector<int> degrees{1, 2, 3, 4, 5, 6};
    std::vector<FilterMethod> methods{FilterMethod::trivial, FilterMethod::mean, FilterMethod::proposed,
                                      FilterMethod::oracle};
    int trials = 100;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

/// "1..6" or "1,3,5".
inline std::vector<int> parse_degrees(const std::string& text) {
    std::vector<int> out;
    try {
        const auto dots = text.find("..");
        if (dots != std::string::npos) {
            const int lo = std::stoi(text.substr(0, dots)), hi = std::stoi(text.substr(dots + 2));
            for (int d = lo; d <= hi; ++d) out.push_back(d);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
        }
    } catch (const std::exception&) {
        throw config_error("bad degree list '" + text + "'");
    }
    if (out.empty()) throw config_error("empty degree list");
    for (int d : out)
        if (d < 1) throw config_error("filter degrees must be >= 1");
    return out;
}

/// "rel:0.02" (fraction of the field maximum), "abs:0.5" or a bare number (absolute).
inline Threshold parse_tau(const std::string& text) {
    try {
        if (text.rfind("rel:", 0) == 0) return {std::stod(text.substr(4)), true};
        if (text.rfind("abs:", 0) == 0) return {std::stod(text.substr(4)), false};
        return {std::stod(text), false};
    } catch (const std::exception&) {
        throw config_error("bad tau '" + text + "'");
    }
}

inline std::string format_tau(Threshold t) { return (t.relative ? "rel:" : "abs:") + format_number(t.value); }

/// "201x201" or "201".
inline std::pair<int, int> parse_grid(const std::string& text) {
    try {
        const auto x = text.find('x');
        if (x == std::string::npos) {
            const int n = std::stoi(text);
            return {n, n};
        }
        return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw config_error("bad grid '" + text + "' (expected NTxNS)");
    }
}

inline std::vector<FilterMethod> parse_methods(const std::string& text) {
    std::vector<FilterMethod> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_filter_method(item));
    if (out.empty()) throw config_error("empty method list");
    return out;
}

namespace detail {

inline json provenance(const char* command, const RunConfig& rc, json params) {
    params["seed"] = rc.seed;
    return json{{"version", kVersion}, {"command", command}, {"seed", rc.seed}, {"params", params}};
}

inline json model_params(const RunConfig& rc, const BlockModel& model) {
    json p{{"model", model_to_json(model)}, {"grid", {rc.grid_n_t, rc.grid_n_s}}};
    if (rc.bounds) p["bounds"] = *rc.bounds;
    return p;
}

inline BlockModel load_model(const RunConfig& rc) {
    if (rc.config_path.empty()) throw config_error("--config is required");
    return build_model(load_model_config(rc.config_path));
}

inline DensityOptions density_options(const RunConfig& rc) {
    DensityOptions opt;
    opt.quadrature.beta = rc.beta;
    opt.quadrature.u_max = rc.u_max;
    opt.quadrature.nodes = rc.nodes;
    opt.workers = rc.workers;
    return opt;
}

/// Xi-plane grid: explicit W-plane bounds mapped back through the affine
/// transform, or the default padded box.
inline GridSpec xi_grid(const RunConfig& rc, const BlockModel& model, const MeanSpectrum& scaled,
                        const VarianceProfile& vp) {
    if (!rc.bounds) return default_grid(scaled, vp.row_sum, rc.grid_n_t, rc.grid_n_s);
    const auto& b = *rc.bounds;
    const double a = model.alpha;
    return GridSpec{(b[0] - 1.0) / a + 1.0, (b[1] - 1.0) / a + 1.0, b[2] / a, b[3] / a, rc.grid_n_t, rc.grid_n_s};
}

struct Densities {
    DensityField xi, w;
};

inline Densities compute_densities(const RunConfig& rc, const BlockModel& model) {
    const VarianceProfile vp = variance_profile(model);
    require_scalar_reduction(model, vp);
    const MeanSpectrum scaled = mean_spectrum(model, SpectrumScale::scaled).distinct();
    Densities d;
    d.xi = density_field(vp.row_sum, vp.col_sum, scaled, xi_grid(rc, model, scaled, vp), density_options(rc));
    d.w = transform_to_iteration(d.xi, model.alpha);
    return d;
}

inline std::filesystem::path out_dir(const RunConfig& rc) {
    std::filesystem::path dir(rc.out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw config_error("cannot create output directory '" + rc.out + "'");
    return dir;
}

} // namespace detail

/// Approximate densities of Xi = A / gamma and of W.
/// Writes density_xi.csv, density_w.csv (+ .json sidecars) and, for
/// zero-variance models, atoms_w.csv with the exact atoms of W.
inline int cmd_density(const RunConfig& rc) {
    const BlockModel model = detail::load_model(rc);
    const auto dir = detail::out_dir(rc);
    const auto d = detail::compute_densities(rc, model);
    json params = detail::model_params(rc, model);
    params["beta"] = rc.beta;
    params["u_max"] = rc.u_max;
    params["nodes"] = rc.nodes;
    json meta_xi = detail::provenance("density", rc, params);
    meta_xi["matrix"] = "xi";
    json meta_w = detail::provenance("density", rc, params);
    meta_w["matrix"] = "w";
    write_density((dir / "density_xi.csv").string(), d.xi, meta_xi);
    write_density((dir / "density_w.csv").string(), d.w, meta_w);

    const VarianceProfile vp = variance_profile(model);
    if (vp.row_sum == 0.0 && vp.col_sum == 0.0) {
        const MeanSpectrum atoms = mean_spectrum(model, SpectrumScale::iteration).distinct();
        std::string csv = "t,s,weight\n";
        for (std::size_t r = 0; r < atoms.values.size(); ++r)
            csv += format_number(atoms.values[r].real()) + ',' + format_number(atoms.values[r].imag()) + ',' +
                   format_number(atoms.weight(r)) + '\n';
        write_text((dir / "atoms_w.csv").string(), csv);
    }
    std::cout << "density mass (W): " << format_number(field_mass(d.w)) << "\n";
    return 0;
}

/// Histogram of realized eigenvalues of W; writes empirical_w.csv (+ sidecar).
inline int cmd_empirical(const RunConfig& rc) {
    const BlockModel model = detail::load_model(rc);
    if (rc.trials < 1) throw config_error("--trials must be positive");
    const auto dir = detail::out_dir(rc);
    GridSpec grid = unit_disk_grid(rc.grid_n_t, rc.grid_n_s);
    if (rc.bounds) grid = GridSpec{(*rc.bounds)[0], (*rc.bounds)[1], (*rc.bounds)[2], (*rc.bounds)[3], rc.grid_n_t, rc.grid_n_s};
    const auto spectra = sample_spectra(model, rc.trials, rc.seed, rc.workers);
    std::size_t outside = 0;
    const DensityField hist = histogram_spectrum(spectra, grid, &outside);
    json params = detail::model_params(rc, model);
    params["trials"] = rc.trials;
    json meta = detail::provenance("empirical", rc, params);
    meta["outside_grid"] = outside;
    write_density((dir / "empirical_w.csv").string(), hist, meta);
    std::cout << "histogram mass: " << format_number(field_mass(hist)) << "\n";
    return 0;
}

/// Filters for each requested degree. `proposed` reads a W density CSV
/// (as written by cmd_density); `mean` needs --config; `trivial` needs neither.
/// Writes filter_<method>_d<degree>.json.
inline int cmd_design(const RunConfig& rc) {
    const auto dir = detail::out_dir(rc);
    std::optional<SampleRegion> region;
    std::optional<MeanSpectrum> mean_iter;
    json params{{"degrees", rc.degrees}, {"kappa", rc.kappa}, {"tau", format_tau(rc.tau)},
                {"max_points", rc.max_points}};
    for (FilterMethod method : rc.methods) {
        if (method == FilterMethod::oracle) throw config_error("oracle filters need a realized network; use simulate");
        if (method == FilterMethod::proposed && !region) {
            if (rc.density_path.empty()) throw config_error("--density is required for proposed filters");
            const DensityField field = read_density(rc.density_path);
            region = extract_region(field, rc.kappa, rc.tau, rc.max_points);
            params["density"] = std::filesystem::path(rc.density_path).filename().string();
        }
        if (method == FilterMethod::mean && !mean_iter) {
            const BlockModel model = detail::load_model(rc);
            mean_iter = mean_spectrum(model, SpectrumScale::iteration);
            params["model"] = model_to_json(model);
        }
    }
    for (FilterMethod method : rc.methods) {
        for (int d : rc.degrees) {
            FilterSpec f;
            switch (method) {
            case FilterMethod::trivial: f = trivial_filter(d); break;
            case FilterMethod::mean: f = mean_filter(*mean_iter, d, rc.kappa); break;
            case FilterMethod::proposed: f = design_filter(*region, d); break;
            case FilterMethod::oracle: break;
            }
            json j = filter_to_json(f, rc.kappa, region ? region->tau : 0.0);
            if (method == FilterMethod::proposed) j["sample_points"] = region->points.size();
            j["provenance"] = detail::provenance("design", rc, params);
            const std::string name = std::string("filter_") + to_string(method) + "_d" + std::to_string(d) + ".json";
            write_json((dir / name).string(), j);
            std::cout << name << ": epsilon " << format_number(f.epsilon) << "\n";
        }
    }
    return 0;
}

/// Monte-Carlo comparison; writes rates.csv, summary.csv and simulate.json.
inline int cmd_simulate(const RunConfig& rc) {
    const BlockModel model = detail::load_model(rc);
    if (rc.trials < 1) throw config_error("--trials must be positive");
    const auto dir = detail::out_dir(rc);

    json params = detail::model_params(rc, model);
    params["degrees"] = rc.degrees;
    params["trials"] = rc.trials;
    params["kappa"] = rc.kappa;
    params["tau"] = format_tau(rc.tau);
    params["max_points"] = rc.max_points;
    json methods = json::array();
    for (auto m : rc.methods) methods.push_back(to_string(m));
    params["methods"] = methods;

    FilterBank bank;
    bank.kappa = rc.kappa;
    json filters = json::array();
    json skipped = json::array();
    auto has = [&](FilterMethod m) { return std::find(rc.methods.begin(), rc.methods.end(), m) != rc.methods.end(); };

    if (has(FilterMethod::trivial))
        for (int d : rc.degrees) bank.fixed.push_back(trivial_filter(d));
    if (has(FilterMethod::mean)) {
        const MeanSpectrum mean_iter = mean_spectrum(model, SpectrumScale::iteration);
        for (int d : rc.degrees) {
            FilterSpec f = mean_filter(mean_iter, d, rc.kappa);
            if (f.degenerate) {
                skipped.push_back({{"method", "mean"}, {"degree", d}, {"reason", "degree >= distinct mean eigenvalues"}});
                continue;
            }
            bank.fixed.push_back(f);
        }
    }
    if (has(FilterMethod::proposed)) {
        DensityField w_density;
        if (!rc.density_path.empty()) {
            w_density = read_density(rc.density_path);
            params["density"] = std::filesystem::path(rc.density_path).filename().string();
        } else {
            w_density = detail::compute_densities(rc, model).w;
            params["beta"] = rc.beta;
            params["u_max"] = rc.u_max;
            params["nodes"] = rc.nodes;
        }
        const SampleRegion region = extract_region(w_density, rc.kappa, rc.tau, rc.max_points);
        for (int d : rc.degrees) bank.fixed.push_back(design_filter(region, d));
    }
    if (has(FilterMethod::oracle)) bank.oracle_degrees = rc.degrees;
    for (const auto& f : bank.fixed) filters.push_back(filter_to_json(f, rc.kappa, 0.0));

    const ConsensusOutcome outcome = monte_carlo(model, bank, rc.trials, rc.seed, rc.workers);
    write_text((dir / "rates.csv").string(), rates_csv(outcome));
    write_text((dir / "summary.csv").string(), summary_csv(outcome));
    json meta = detail::provenance("simulate", rc, params);
    meta["excluded_trials"] = outcome.excluded;
    meta["filters"] = filters;
    meta["skipped"] = skipped;
    write_json((dir / "simulate.json").string(), meta);
    std::cout << summary_csv(outcome);
    return 0;
}

struct ValidationReport {
    bool transitive = false;
    bool normal_theta = false;
    bool equal_variance_sums = false;
    double normality_defect = 0.0;
    double row_sum = 0.0, col_sum = 0.0;
    double gamma = 0.0;
    std::vector<std::string> reasons;
    bool pass() const { return reasons.empty(); }
};

inline ValidationReport validate_model(const BlockModel& model) {
    ValidationReport r;
    r.transitive = model.transitive;
    r.normal_theta = model.normal;
    r.normality_defect = model.normality_defect;
    r.gamma = expected_row_sum(model);
    const VarianceProfile vp = variance_profile(model);
    r.row_sum = vp.row_sum;
    r.col_sum = vp.col_sum;
    r.equal_variance_sums = std::abs(vp.row_sum - vp.col_sum) <= 1e-12;
    if (!r.transitive) r.reasons.push_back("theta is not invariant under simultaneous cyclic relabeling (not node-transitive)");
    if (!r.normal_theta) r.reasons.push_back("theta is not normal: |theta theta^T - theta^T theta| = " + format_number(r.normality_defect));
    if (!r.equal_variance_sums) r.reasons.push_back("variance row and column sums differ");
    return r;
}

/// Prints a JSON diagnostics report (also written to validate.json when
/// --out is given). Exit 0 when the scalar reduction applies, 2 otherwise.
inline int cmd_validate(const RunConfig& rc, std::ostream& os = std::cout) {
    const BlockModel model = detail::load_model(rc);
    const ValidationReport r = validate_model(model);
    json j{{"pass", r.pass()},
           {"transitive", r.transitive},
           {"normal_theta", r.normal_theta},
           {"normality_defect", r.normality_defect},
           {"equal_variance_sums", r.equal_variance_sums},
           {"variance_row_sum", r.row_sum},
           {"variance_col_sum", r.col_sum},
           {"gamma", r.gamma},
           {"reasons", r.reasons}};
    j["provenance"] = detail::provenance("validate", rc, json{{"model", model_to_json(model)}});
    os << j.dump(2) << "\n";
    if (rc.out != ".") write_json((detail::out_dir(rc) / "validate.json").string(), j);
    return r.pass() ? 0 : 2;
}

} // namespace asymspec
