#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "asymspec/asymspec.hpp"
#include "asymspec/parallel.hpp"

namespace {

struct Flags {
    std::string grid, bounds, tau, degrees, methods;
    int workers = 0;
};

std::array<double, 4> parse_bounds(const std::string& text) {
    std::array<double, 4> b{};
    std::stringstream ss(text);
    std::string item;
    std::size_t k = 0;
    while (std::getline(ss, item, ',')) {
        if (k == 4) throw asymspec::config_error("--bounds takes four numbers");
        b[k++] = asymspec::parse_number(item);
    }
    if (k != 4) throw asymspec::config_error("--bounds takes four numbers: t_min,t_max,s_min,s_max");
    return b;
}

void finalize(asymspec::RunConfig& rc, const Flags& f) {
    using namespace asymspec;
    if (!f.grid.empty()) std::tie(rc.grid_n_t, rc.grid_n_s) = parse_grid(f.grid);
    if (!f.bounds.empty()) rc.bounds = parse_bounds(f.bounds);
    if (!f.tau.empty()) rc.tau = parse_tau(f.tau);
    if (!f.degrees.empty()) rc.degrees = parse_degrees(f.degrees);
    if (!f.methods.empty()) rc.methods = parse_methods(f.methods);
    rc.workers = f.workers > 0 ? static_cast<unsigned>(f.workers) : workers_from_env();
    if (rc.grid_n_t < 3 || rc.grid_n_s < 3) throw config_error("--grid needs at least 3 points per axis");
    if (!(rc.beta > 0.0) || !(rc.u_max > rc.beta)) throw config_error("need 0 < beta < umax");
    if (rc.nodes < 6) throw config_error("--nodes must be >= 6");
    if (!(rc.kappa > 0.0)) throw config_error("--kappa must be positive");
    if (!(rc.tau.value >= 0.0)) throw config_error("--tau must be >= 0");
    if (rc.max_points < 1) throw config_error("--max-points must be >= 1");
}

} // namespace

int main(int argc, char** argv) {
    using namespace asymspec;
    RunConfig rc;
    Flags flags;

    CLI::App app{"Limiting spectra of random block-model consensus networks and spectrum-aware filter design"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", rc.config_path, "model config JSON");
        sub->add_option("--out", rc.out, "output directory");
        sub->add_option("--seed", rc.seed, "master seed");
        sub->add_option("--workers", flags.workers, "worker threads (default: ASYMSPEC_WORKERS or 1)");
    };
    auto grid = [&](CLI::App* sub) {
        sub->add_option("--grid", flags.grid, "grid resolution NTxNS (default 201x201)");
        sub->add_option("--bounds", flags.bounds, "W-plane box t_min,t_max,s_min,s_max");
    };
    auto quad = [&](CLI::App* sub) {
        sub->add_option("--beta", rc.beta, "lower cutoff of the u integral");
        sub->add_option("--umax", rc.u_max, "upper cutoff of the u integral");
        sub->add_option("--nodes", rc.nodes, "quadrature nodes");
    };
    auto region = [&](CLI::App* sub) {
        sub->add_option("--kappa", rc.kappa, "radius excluded around 1");
        sub->add_option("--tau", flags.tau, "density threshold: rel:F, abs:X or X");
        sub->add_option("--degrees", flags.degrees, "filter degrees, e.g. 1..6 or 1,3");
        sub->add_option("--max-points", rc.max_points, "maximum sample points in the region");
    };

    auto* density = app.add_subcommand("density", "approximate Xi and W densities");
    common(density), grid(density), quad(density);
    auto* empirical = app.add_subcommand("empirical", "histogram of sampled W eigenvalues");
    common(empirical), grid(empirical);
    empirical->add_option("--trials", rc.trials, "number of draws");
    auto* design = app.add_subcommand("design", "design filters from a W density");
    common(design), region(design);
    design->add_option("--density", rc.density_path, "W density CSV from `density`");
    design->add_option("--methods", flags.methods, "comma list of trivial,mean,proposed")->default_str("proposed");
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo convergence-rate comparison");
    common(simulate), grid(simulate), quad(simulate), region(simulate);
    simulate->add_option("--trials", rc.trials, "number of draws");
    simulate->add_option("--density", rc.density_path, "precomputed W density CSV");
    simulate->add_option("--methods", flags.methods, "comma list of trivial,mean,proposed,oracle");
    auto* validate = app.add_subcommand("validate", "check the scalar-reduction assumptions");
    common(validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (design->parsed() && flags.methods.empty()) flags.methods = "proposed";
        finalize(rc, flags);
        if (density->parsed()) return cmd_density(rc);
        if (empirical->parsed()) return cmd_empirical(rc);
        if (design->parsed()) return cmd_design(rc);
        if (simulate->parsed()) return cmd_simulate(rc);
        if (validate->parsed()) return cmd_validate(rc);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
