#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fsb/csv.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(FSB_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const std::string bs_config = std::string(FSB_SOURCE_DIR) + "/configs/bs.json";
const std::string heston_config = std::string(FSB_SOURCE_DIR) + "/configs/heston.json";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "fsb_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Usage, MalformedInvocationsExit64) {
  EXPECT_EQ(cli("").code, 64);
  EXPECT_EQ(cli("bounds").code, 64);
  EXPECT_EQ(cli("bounds --config /nonexistent.json").code, 64);
  EXPECT_EQ(cli("bounds --config " + bs_config + " --grid chebyshev").code, 64);
  EXPECT_EQ(cli("bounds --config " + bs_config + " --points -3").code, 64);
  EXPECT_EQ(cli("frobnicate --config " + bs_config).code, 64);
}

TEST(Usage, HelpExitsCleanly) {
  const auto r = cli("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("hn-converge"), std::string::npos);
}

TEST(Commands, HkWritesThePlan) {
  const auto dir = scratch("hk");
  const auto r = cli("hk --config " + bs_config + " --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("6.948%"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "hk_plan.csv"));
}

TEST(Commands, BoundsWithOverrides) {
  const auto dir = scratch("bounds");
  const auto r = cli("bounds --config " + bs_config + " --points 100 --strike 0.9,1.0 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = fsb::csv::read(dir / "bounds_bs.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], 1.0);
  EXPECT_LT(rows[1][1], rows[1][5]);
  // Identical invocations give identical artifacts.
  const std::string first = slurp(dir / "bounds_bs.csv");
  ASSERT_EQ(cli("bounds --config " + bs_config + " --points 100 --strike 0.9,1.0 --out " + dir.string()).code, 0);
  EXPECT_EQ(slurp(dir / "bounds_bs.csv"), first);
}

TEST(Commands, DomainErrorsExit2) {
  const auto dir = scratch("domain");
  const auto r = cli("bounds --config " + bs_config + " --points 20 --strike 1.0 --out " + dir.string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("discretize X"), std::string::npos) << r.out;
  EXPECT_EQ(cli("hn-converge --config " + heston_config + " --out " + dir.string()).code, 2);
}

TEST(Commands, DiscretizeWritesBothMarginals) {
  const auto dir = scratch("disc");
  const auto r = cli("discretize --config " + heston_config + " --points 100 --grid legendre --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("convex order: yes"), std::string::npos) << r.out;
  EXPECT_EQ(fsb::csv::read(dir / "marginal_x.csv").size(), 100u);
  EXPECT_EQ(fsb::csv::read(dir / "marginal_y.csv").size(), 100u);
}

TEST(Commands, TablesPerScheme) {
  const auto dir = scratch("tables");
  const auto r = cli("tables --config " + bs_config + " --points 75 --strike 1.0 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "tables_sub_uniform.csv"));
  EXPECT_TRUE(fs::exists(dir / "tables_super_uniform.csv"));
}

TEST(Commands, HnConvergeAndPlansOnSmallGrids) {
  const auto dir = scratch("hn");
  const auto cfg = write_config(dir, R"({"name": "small", "grid": {"points": 150},
    "hn": {"mesh_sizes": [75]},
    "plans": {"kf": [1.0], "grid": {"m": 100, "n": 200, "x_domain": [0, 5], "y_domain": [0, 10]}}})");
  const auto hn = cli("hn-converge --config " + cfg.string() + " --out " + dir.string());
  ASSERT_EQ(hn.code, 0) << hn.out;
  EXPECT_EQ(fsb::csv::read(dir / "hn_convergence.csv").size(), 1u);
  const auto plans = cli("plans --config " + cfg.string() + " --out " + dir.string());
  ASSERT_EQ(plans.code, 0) << plans.out;
  EXPECT_TRUE(fs::exists(dir / "plan_lower_1.csv"));
  EXPECT_TRUE(fs::exists(dir / "plan_upper_1.csv"));
}
