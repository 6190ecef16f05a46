#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "asymspec/asymspec.hpp"

using namespace asymspec;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("asymspec_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string write_config(const std::string& name, const std::string& text) {
        const auto p = dir / name;
        write_text(p.string(), text);
        return p.string();
    }

    int run(const std::string& args) {
        const std::string cmd = std::string(ASYMSPEC_CLI) + " " + args + " > " + (dir / "stdout.txt").string() +
                                " 2> " + (dir / "stderr.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    RunConfig base(const std::string& config, const std::string& out) {
        RunConfig rc;
        rc.config_path = config;
        rc.out = (dir / out).string();
        rc.grid_n_t = rc.grid_n_s = 41;
        rc.nodes = 60;
        return rc;
    }
};

const char* kDeterministic = R"({"M": 5, "S": 3, "theta": {"diag": 1.0, "next": 1.0}, "alpha": 0.5})";
const char* kSmallRandom = R"({"M": 5, "S": 12, "theta": {"diag": 0.3, "next": 0.2}, "alpha": 1.0})";

std::string config_path(const char* name) { return std::string(ASYMSPEC_CONFIG_DIR) + "/" + name; }

} // namespace

TEST(ParseHelpers, Degrees) {
    EXPECT_EQ(parse_degrees("1..6"), (std::vector<int>{1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(parse_degrees("3"), (std::vector<int>{3}));
    EXPECT_EQ(parse_degrees("1,3,5"), (std::vector<int>{1, 3, 5}));
    EXPECT_THROW(parse_degrees("a..b"), config_error);
    EXPECT_THROW(parse_degrees("0..2"), config_error);
    EXPECT_THROW(parse_degrees("4..2"), config_error);
}

TEST(ParseHelpers, TauGridMethods) {
    EXPECT_TRUE(parse_tau("rel:0.02").relative);
    EXPECT_DOUBLE_EQ(parse_tau("rel:0.02").value, 0.02);
    EXPECT_FALSE(parse_tau("abs:0.5").relative);
    EXPECT_FALSE(parse_tau("0.5").relative);
    EXPECT_THROW(parse_tau("rel:x"), config_error);
    EXPECT_EQ(parse_grid("101x51"), (std::pair{101, 51}));
    EXPECT_EQ(parse_grid("61"), (std::pair{61, 61}));
    EXPECT_THROW(parse_grid("big"), config_error);
    EXPECT_EQ(parse_methods("trivial,oracle"), (std::vector{FilterMethod::trivial, FilterMethod::oracle}));
    EXPECT_THROW(parse_methods("trivial,best"), config_error);
}

TEST(ParseHelpers, NumberFormattingRoundTrips) {
    for (double v : {0.1, -2.5e-300, 1.0 / 3.0, 15.95}) EXPECT_EQ(parse_number(format_number(v)), v);
    EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(parse_number("-inf"), -std::numeric_limits<double>::infinity());
    EXPECT_THROW(parse_number("1.0x"), config_error);
}

TEST_F(CliTest, ModelConfigParsing) {
    const ModelConfig c = load_model_config(config_path("reference_m5.json"));
    EXPECT_EQ(c.populations, 5);
    EXPECT_EQ(c.population_size, 200);
    const BlockModel m = build_model(c);
    EXPECT_NEAR(expected_row_sum(m), 15.95, 1e-12);
    EXPECT_THROW(load_model_config((dir / "missing.json").string()), config_error);
    EXPECT_THROW(load_model_config(write_config("bad.json", "{\"M\": 2}")), config_error);
    EXPECT_THROW(load_model_config(write_config("garbage.json", "{not json")), config_error);
    EXPECT_THROW(load_model_config(write_config("ragged.json", R"({"M":2,"S":2,"theta":[[0.1],[0.2,0.3]]})")),
                 config_error);
}

TEST_F(CliTest, ExitCodes) {
    EXPECT_EQ(run("validate --config " + (dir / "nope.json").string()), 2);
    EXPECT_EQ(run("density --config " + (dir / "nope.json").string()), 2);
    EXPECT_EQ(run("density --config " + config_path("two_block_unequal.json") + " --out " + dir.string()), 2);
    EXPECT_EQ(run("simulate --config " + config_path("desk_m5_s50.json") + " --degrees 0..2"), 2);
    EXPECT_EQ(run("design --config " + config_path("desk_m5_s50.json") + " --methods proposed"), 2);
    EXPECT_EQ(run("--unknown-flag"), 2);
    EXPECT_EQ(run("--version"), 0);
}

TEST_F(CliTest, ValidateReports) {
    EXPECT_EQ(run("validate --config " + config_path("deterministic_cycle.json")), 0);
    EXPECT_EQ(run("validate --config " + config_path("desk_m5_s50.json")), 0);
    EXPECT_EQ(run("validate --config " + config_path("two_block_unequal.json")), 2);
    EXPECT_NE(read_text((dir / "stdout.txt").string()).find("not node-transitive"), std::string::npos);
    EXPECT_EQ(run("validate --config " + config_path("nonnormal_theta.json")), 2);
    EXPECT_NE(read_text((dir / "stdout.txt").string()).find("theta is not normal"), std::string::npos);

    std::ostringstream os;
    RunConfig rc;
    rc.config_path = config_path("two_block_unequal.json");
    EXPECT_EQ(cmd_validate(rc, os), 2);
    const json j = json::parse(os.str());
    EXPECT_FALSE(j["pass"].get<bool>());
    EXPECT_FALSE(j["transitive"].get<bool>());
    EXPECT_FALSE(j["reasons"].empty());
}

TEST_F(CliTest, DensityWritesGridsSidecarsAndAtoms) {
    RunConfig rc = base(write_config("det.json", kDeterministic), "det");
    rc.seed = 17;
    ASSERT_EQ(cmd_density(rc), 0);
    const fs::path out = dir / "det";
    for (const char* f : {"density_xi.csv", "density_xi.json", "density_w.csv", "density_w.json", "atoms_w.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    const std::string csv = read_text((out / "density_w.csv").string());
    EXPECT_EQ(csv.substr(0, 12), "t,s,density\n");
    const json meta = read_json_file((out / "density_w.json").string());
    EXPECT_EQ(meta["seed"].get<int>(), 17);
    EXPECT_EQ(meta["version"].get<std::string>(), kVersion);
    EXPECT_EQ(meta["params"]["model"]["M"].get<int>(), 5);
    EXPECT_EQ(meta["grid"]["n_t"].get<int>(), 41);

    // Atoms: the mean iteration spectrum with alpha = 0.5.
    const std::string atoms = read_text((out / "atoms_w.csv").string());
    EXPECT_EQ(atoms.substr(0, 11), "t,s,weight\n");
    double total = 0.0;
    std::istringstream in(atoms.substr(11));
    std::string line;
    while (std::getline(in, line)) total += parse_number(line.substr(line.rfind(',') + 1));
    EXPECT_NEAR(total, 1.0, 1e-12);

    // Round trip through the reader used by design.
    const DensityField back = read_density((out / "density_w.csv").string());
    EXPECT_EQ(back.grid.n_t, 41);
    EXPECT_NEAR(back.grid.t_max, meta["grid"]["t_max"].get<double>(), 0.0);
    EXPECT_NEAR(field_mass(back), meta["mass"].get<double>(), 1e-12);
}

TEST_F(CliTest, DensityWithExplicitBoundsCoversTheBox) {
    RunConfig rc = base(write_config("r.json", kSmallRandom), "b");
    rc.bounds = std::array{-1.0, 1.2, -1.1, 1.1};
    ASSERT_EQ(cmd_density(rc), 0);
    const json meta = read_json_file((dir / "b" / "density_w.json").string());
    EXPECT_NEAR(meta["grid"]["t_min"].get<double>(), -1.0, 1e-12);
    EXPECT_NEAR(meta["grid"]["s_max"].get<double>(), 1.1, 1e-12);
}

TEST_F(CliTest, EmpiricalHistogramHasUnitMass) {
    RunConfig rc = base(write_config("det.json", kDeterministic), "emp");
    rc.trials = 1;
    ASSERT_EQ(cmd_empirical(rc), 0);
    const DensityField h = read_density((dir / "emp" / "empirical_w.csv").string());
    EXPECT_NEAR(field_mass(h), 1.0, 1e-12);
    const json meta = read_json_file((dir / "emp" / "empirical_w.json").string());
    EXPECT_EQ(meta["outside_grid"].get<int>(), 0);
}

TEST_F(CliTest, DesignConsumesDensityOutput) {
    RunConfig rc = base(write_config("r.json", kSmallRandom), "pipe");
    ASSERT_EQ(cmd_density(rc), 0);
    rc.density_path = (dir / "pipe" / "density_w.csv").string();
    rc.degrees = {3};
    rc.methods = {FilterMethod::proposed, FilterMethod::trivial, FilterMethod::mean};
    ASSERT_EQ(cmd_design(rc), 0);
    const FilterSpec p = filter_from_json(read_json_file((dir / "pipe" / "filter_proposed_d3.json").string()));
    double sum = 0.0;
    for (double a : p.coefficients) sum += a;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_EQ(p.degree, 3);
    const FilterSpec t = filter_from_json(read_json_file((dir / "pipe" / "filter_trivial_d3.json").string()));
    EXPECT_EQ(t.coefficients, (std::vector<double>{0, 0, 0, 1}));
    EXPECT_TRUE(fs::exists(dir / "pipe" / "filter_mean_d3.json"));
    const json j = read_json_file((dir / "pipe" / "filter_proposed_d3.json").string());
    for (const char* key : {"degree", "coefficients", "epsilon", "method", "kappa", "tau"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["provenance"]["version"].get<std::string>(), kVersion);
}

TEST_F(CliTest, DesignOnHandMadeRegions) {
    auto field_with = [&](const std::string& name, const std::vector<double>& atoms) {
        DensityField f;
        f.grid = GridSpec{-0.5, 1.5, -0.5, 0.5, 21, 11}; // spacing 0.1
        f.values.assign(f.grid.size(), 0.0);
        f.support.assign(f.grid.size(), 1);
        for (double a : atoms) {
            int i = 0, j = 0;
            f.grid.nearest(a, i, j);
            f.values[f.grid.index(i, j)] = 1.0;
        }
        const auto p = (dir / name).string();
        write_density(p, f, json::object());
        return p;
    };
    RunConfig rc;
    rc.out = (dir / "single").string();
    rc.degrees = {1};
    rc.methods = {FilterMethod::proposed};
    rc.tau = Threshold{0.5, false};
    rc.density_path = field_with("single.csv", {0.3});
    ASSERT_EQ(cmd_design(rc), 0);
    EXPECT_LT(read_json_file((dir / "single" / "filter_proposed_d1.json").string())["epsilon"].get<double>(), 1e-12);

    rc.out = (dir / "pair").string();
    rc.density_path = field_with("pair.csv", {0.2, 0.8});
    ASSERT_EQ(cmd_design(rc), 0);
    EXPECT_NEAR(read_json_file((dir / "pair" / "filter_proposed_d1.json").string())["epsilon"].get<double>(), 0.36,
                1e-6);
}

TEST_F(CliTest, SimulateDeterministicModelAndRerunBytes) {
    RunConfig rc = base(write_config("det.json", kDeterministic), "sim1");
    rc.trials = 4;
    rc.seed = 5;
    rc.degrees = {1, 2, 3};
    ASSERT_EQ(cmd_simulate(rc), 0);
    const std::string rates = read_text((dir / "sim1" / "rates.csv").string());
    EXPECT_EQ(rates.substr(0, 24), "trial,method,degree,rate");
    std::istringstream in(read_text((dir / "sim1" / "summary.csv").string()));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "method,degree,median,q25,q75,excluded_trials");
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_EQ(cells[2], cells[3]);
        EXPECT_EQ(cells[2], cells[4]);
        ++rows;
    }
    EXPECT_GT(rows, 0);
    const json meta = read_json_file((dir / "sim1" / "simulate.json").string());
    EXPECT_EQ(meta["seed"].get<int>(), 5);

    rc.out = (dir / "sim2").string();
    rc.workers = 3;
    ASSERT_EQ(cmd_simulate(rc), 0);
    for (const char* f : {"rates.csv", "summary.csv", "simulate.json"})
        EXPECT_EQ(read_text((dir / "sim1" / f).string()), read_text((dir / "sim2" / f).string())) << f;
}
