#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli_runner.hpp"

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(MHS_GOLDEN_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_config(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("mhs_cli_" + name + ".json");
  std::ofstream(path) << body;
  return path.string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("routes") {
    const CliRun perm = run_cli("routes spiral 0 3 3 --format perm");
    CHECK(perm.code == 0);
    CHECK(perm.out == "spiral 0 3 3\n0 1 2 5 8 7 6 3 4\n");
    CHECK(run_cli("routes raster 0 2 2 --format ascii").out == "0 1\n2 3\n");
    const CliRun svg = run_cli("routes snake 0 2 3 --format svg");
    CHECK(svg.out == golden("snake_0_2_3.svg"));
    CHECK(svg.out.find("points=\"20,20 60,20 100,20 100,60 60,60 20,60\"") != std::string::npos);
    CHECK(run_cli("routes zigzag 0 3 3").code == 2);
    CHECK(run_cli("routes snake 7 3 3").code == 2);
    CHECK(run_cli("routes snake 0 3 3 --format png").code == 2);
    CHECK(run_cli("").code == 2);
  }

  TEST_CASE("demo is deterministic and reports statistics") {
    const std::string args = "demo --seed 3 --height 4 --width 5 --batch 2";
    const CliRun a = run_cli(args), b = run_cli(args + " --threads 3");
    REQUIRE(a.code == 0);
    CHECK(mask_timing(a.out) == mask_timing(b.out));
    CHECK(a.out.find("\"output_shape\": [\n    2,\n    4,\n    5,\n    96\n  ]") != std::string::npos);
    CHECK(a.out.find("\"section_norm\"") != std::string::npos);
    CHECK(a.out.find("\"forward_ms\"") != std::string::npos);
  }

  TEST_CASE("demo on a route-symmetric constant input") {
    const CliRun r = run_cli("demo --height 1 --width 1 --input constant");
    REQUIRE(r.code == 0);
    std::size_t count = 0;
    for (std::size_t pos = 0; (pos = r.out.find("\"gate_zero_fraction\": 1.0", pos)) != std::string::npos; ++pos) ++count;
    CHECK(count == 3);
  }

  TEST_CASE("demo and params reject invalid configs") {
    const std::string bad = write_config("bad", R"({"c_l": 96, "n_heads": 3, "subspace_dim": 30, "tail_projection": false})");
    CHECK(run_cli("demo --config " + bad).code == 2);
    CHECK(run_cli("params --config " + bad).code == 2);
    CHECK(run_cli("demo --config /nonexistent/config.json").code == 2);
  }

  TEST_CASE("params") {
    const std::string on = write_config("on", R"({"c_l": 96, "n_heads": 3, "subspace_dim": 32})");
    const std::string off = write_config("off", R"({"c_l": 96, "n_heads": 3, "subspace_dim": 32, "tail_projection": false})");
    const CliRun a = run_cli("params --config " + on), b = run_cli("params --config " + off);
    REQUIRE(a.code == 0);
    CHECK(a.out.find("total                   59520\n") != std::string::npos);
    CHECK(b.out.find("total                   50304\n") != std::string::npos);
    CHECK(a.out.find("head.2.ssm (spiral)") != std::string::npos);
  }

  TEST_CASE("check scopes") {
    const CliRun routes = run_cli("check routes");
    CHECK(routes.code == 0);
    CHECK(routes.out.find("FAIL") == std::string::npos);
    const CliRun ssm = run_cli("check ssm");
    CHECK(ssm.code == 0);
    CHECK(ssm.out.find("PASS ssm.recurrence_conv_duality") != std::string::npos);
    CHECK(run_cli("check everything").code == 2);
  }

  TEST_CASE("bench") {
    const CliRun r = run_cli("bench --height 16 --width 16 --channels 4 --reps 3");
    REQUIRE(r.code == 0);
    const auto first = r.out.find("\"checksum\": \"");
    const auto second = r.out.find("\"checksum\": \"", first + 1);
    REQUIRE(second != std::string::npos);
    CHECK(r.out.substr(first, 30) == r.out.substr(second, 30));
    CHECK(run_cli("bench --reps 2").code == 2);
    CHECK(run_cli("bench --strategy mmap --reps 3").code == 2);
    CHECK(run_cli("bench --strategy fused-gather --height 8 --width 8 --channels 2 --reps 3").code == 0);
  }
}
