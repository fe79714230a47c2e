#include <cstdio>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "pedflow/nn/model.hpp"
#include "pedflow/version.hpp"
#include "support/camera.hpp"
#include "support/fixtures.hpp"

using namespace pedflow;
namespace t = pedflow::testing;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run pedflow_cli(const std::string& args) {
  const std::string cmd = std::string(PEDFLOW_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string scen() { return t::scenario_path().string(); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version and usage errors") {
  const Run v = pedflow_cli("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find(std::string("pedflow ") + kVersion) != std::string::npos);
  CHECK(pedflow_cli("").code == 1);
  CHECK(pedflow_cli("frobnicate").code == 1);
  CHECK(pedflow_cli("gen-data --scenario " + scen() + " --out /tmp/x --no-such-flag").code == 1);
  CHECK(pedflow_cli("gen-data --out /tmp/x").code == 1);
  CHECK(pedflow_cli("gen-data --scenario " + scen() + " --out /tmp/x --agents many").code == 1);
}

TEST_CASE("data and validation errors exit with 2") {
  t::TempDir dir("cli_err");
  CHECK(pedflow_cli("gen-data --scenario " + (dir / "missing.json").string() + " --out " + dir.path().string()).code ==
        2);
  CHECK(pedflow_cli("gen-data --scenario " + scen() + " --agents 0 --out " + dir.path().string()).code == 2);

  // Agents that never change edge give nothing to balance.
  std::string csv = "t,id,x,y,edge\n";
  for (int k = 0; k < 20; ++k) csv += std::to_string(k * 0.2) + ",1,-20,-5,\n";
  std::filesystem::create_directories(dir / "still");
  t::spit(dir / "still" / "scene.csv", csv);
  const Run r = pedflow_cli("prepare --scenario " + scen() + " --input " + (dir / "still").string() + " --out " +
                            (dir / "ds").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("NoTransitions") != std::string::npos);

  t::spit(dir / "empty.csv", "t,count_actual,count_simulated,speed_actual,speed_simulated\n");
  CHECK(pedflow_cli("plot --series " + (dir / "empty.csv").string() + " --out " + (dir / "plots").string()).code == 2);

  CHECK(pedflow_cli("interpolate --scenario " + scen() + " --input " + (dir / "still" / "scene.csv").string() +
                    " --delta 0 --out " + (dir / "c.csv").string())
            .code == 2);

  // A checkpoint for a three-node graph cannot drive the scenario.
  nn::ModelConfig c = nn::model_config_for({}, 3, 8);
  c.encoder_hidden = c.decoder_hidden = c.attention_dim = c.local_embed = 4;
  nn::save_checkpoint(nn::init_params(c, 1), dir / "wrong.ckpt");
  const Run m = pedflow_cli("simulate --scenario " + scen() + " --model " + (dir / "wrong.ckpt").string() +
                            " --duration 2 --out " + (dir / "sim.csv").string());
  CHECK(m.code == 2);
  CHECK(m.out.find("ModelScenarioMismatch") != std::string::npos);
}

TEST_CASE("config files") {
  t::TempDir dir("cli_cfg");
  t::spit(dir / "bad.json", R"({"agents": 3, "colour": "red"})");
  CHECK(pedflow_cli("gen-data --scenario " + scen() + " --out " + dir.path().string() + " --config " +
                    (dir / "bad.json").string())
            .code == 2);
  t::spit(dir / "good.json", R"({"agents": 3, "seed": 11})");
  const std::string out = (dir / "gen").string();
  REQUIRE(pedflow_cli("gen-data --scenario " + scen() + " --out " + out + " --config " + (dir / "good.json").string())
              .code == 0);
  const json m = json::parse(t::slurp(dir / "gen" / "manifest.json"));
  CHECK(m["subcommand"] == "gen-data");
  CHECK(m["seed"] == 11);
  CHECK(m["config"]["agents"] == 3);
  CHECK(m["tool_version"] == kVersion);
  CHECK(m["scenario_hash"].is_string());
  // A flag on the command line wins over the file.
  REQUIRE(pedflow_cli("gen-data --scenario " + scen() + " --out " + out + " --agents 4 --config " +
                      (dir / "good.json").string())
              .code == 0);
  CHECK(json::parse(t::slurp(dir / "gen" / "manifest.json"))["config"]["agents"] == 4);
}

TEST_CASE("gen-data then prepare on unlabeled CSV") {
  t::TempDir dir("cli_gen");
  const std::string d = dir.path().string();
  REQUIRE(pedflow_cli("gen-data --scenario " + scen() + " --agents 12 --replications 2 --seed 4 --out " + d + "/a")
              .code == 0);
  REQUIRE(pedflow_cli("gen-data --scenario " + scen() + " --agents 12 --replications 2 --seed 4 --out " + d + "/b")
              .code == 0);
  CHECK(t::slurp(dir / "a" / "scene_001.csv") == t::slurp(dir / "b" / "scene_001.csv"));
  CHECK(t::slurp(dir / "a" / "scene_000.csv") != t::slurp(dir / "a" / "scene_001.csv"));
  const Run r = pedflow_cli("prepare --scenario " + scen() + " --input " + d + "/a --out " + d + "/ds");
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "ds" / "samples.bin"));
}

TEST_CASE("calibrate writes the matrix and plane points") {
  t::TempDir dir("cli_cal");
  const auto M = t::street_camera();
  std::string pts = "u,v,X,Y,Z\n";
  for (const auto& c : t::correspondences(M, t::crosswalk_layout()))
    pts += std::to_string(c.pixel.u) + "," + std::to_string(c.pixel.v) + "," + std::to_string(c.world.X) + "," +
           std::to_string(c.world.Y) + "," + std::to_string(c.world.Z) + "\n";
  t::spit(dir / "pts.csv", pts);
  const auto px = t::project_oracle(M, {2.0, -1.0, 1.0});
  t::spit(dir / "px.csv", "u,v\n" + std::to_string(px.u) + "," + std::to_string(px.v) + "\n");
  REQUIRE(pedflow_cli("calibrate --points " + (dir / "pts.csv").string() + " --out " + (dir / "cam.json").string() +
                      " --pixels " + (dir / "px.csv").string() + " --plane-out " + (dir / "plane.csv").string() +
                      " --z 1")
              .code == 0);
  const json cam = json::parse(t::slurp(dir / "cam.json"));
  CHECK(cam["matrix"].size() == 3);
  CHECK(cam["reprojection_error_px"]["max"].get<double>() < 1e-3);
  const std::string plane = t::slurp(dir / "plane.csv");
  const auto row = plane.substr(plane.find('\n') + 1);
  double u, v, X, Y;
  REQUIRE(std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf", &u, &v, &X, &Y) == 4);
  CHECK(X == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(Y == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(pedflow_cli("calibrate --points " + (dir / "pts.csv").string() + " --out " + (dir / "cam2.json").string() +
                    " --pixels " + (dir / "px.csv").string())
            .code == 2);
}

}
