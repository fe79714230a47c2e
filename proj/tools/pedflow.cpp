// pedflow command-line entry point.

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cli_support.hpp"
#include "pedflow/csv.hpp"
#include "pedflow/dataset.hpp"
#include "pedflow/geometry.hpp"
#include "pedflow/nn/train.hpp"
#include "pedflow/postprocess.hpp"
#include "pedflow/simulator.hpp"
#include "pedflow/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pedflow::cli {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

void write_json(const fs::path& path, const json& j) {
  post::write_text(path, j.dump(2) + "\n");
}

// Manifest of a run, written next to (file output) or inside (directory
// output) the primary output before anything else.
struct Manifest {
  std::string subcommand;
  json config;
  std::vector<std::string> inputs, outputs;
  std::optional<std::uint64_t> seed;
  std::string scenario;

  void write(const fs::path& path) const {
    json j{{"subcommand", subcommand},
           {"config", config},
           {"inputs", inputs},
           {"outputs", outputs},
           {"tool_version", kVersion},
           {"schema_versions",
            {{"scenario", kScenarioSchemaVersion},
             {"checkpoint", nn::kCheckpointVersion},
             {"samples", dataset::kSampleFileVersion}}}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["scenario_hash"] = scenario.empty() ? json(nullptr) : json(file_hash(scenario));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_json(path, j);
    spdlog::info("manifest {}", path.string());
  }
};

fs::path manifest_next_to(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void make_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<fs::path> csv_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> dir;
      for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".csv") dir.push_back(e.path());
      std::sort(dir.begin(), dir.end());
      out.insert(out.end(), dir.begin(), dir.end());
    } else {
      out.emplace_back(in);
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyDataset, "no trajectory CSV files in the inputs");
  return out;
}

// Flow id from labels, else from the direction of travel.
void assign_flows(std::vector<Trajectory>& trajs, const Scenario& scenario) {
  for (auto& t : trajs) {
    if (t.flow_id >= 0) continue;
    for (const auto& f : scenario.flows)
      if (post::flow_member(t, scenario, f)) {
        t.flow_id = f.flow_id;
        break;
      }
  }
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string points, out, pixels, plane_out;
  double z = geometry::kPedestrianPlaneZ;
};

int run_calibrate(const CalibrateArgs& a, const json& config) {
  Manifest m{"calibrate", config, {a.points}, {a.out}, std::nullopt, {}};
  if (!a.pixels.empty()) m.inputs.push_back(a.pixels);
  if (!a.plane_out.empty()) m.outputs.push_back(a.plane_out);
  if (a.pixels.empty() != a.plane_out.empty())
    throw Error(ErrorCode::InvalidConfig, "--pixels and --plane-out go together");
  const auto points = geometry::read_correspondences_csv(a.points);
  const geometry::ProjectionMatrix M = geometry::calibrate_dlt(points);
  const auto err = geometry::reprojection_errors(M, points);
  double mean = 0.0, mx = 0.0;
  for (double e : err) mean += e, mx = std::max(mx, e);
  mean /= static_cast<double>(err.size());
  spdlog::info("calibrated from {} points, reprojection error mean {:.3g} px, max {:.3g} px", points.size(), mean, mx);

  m.write(manifest_next_to(a.out));
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({M(r, 0), M(r, 1), M(r, 2), M(r, 3)});
  make_parent(a.out);
  write_json(a.out, {{"matrix", rows},
                     {"points", points.size()},
                     {"reprojection_error_px", {{"mean", mean}, {"max", mx}}}});
  if (!a.pixels.empty()) {
    const csv::Table t = csv::read(a.pixels, {"u", "v"});
    std::string text = "u,v,X,Y\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const geometry::PixelPoint px{csv::to_double(t.rows[i][0], a.pixels, i), csv::to_double(t.rows[i][1], a.pixels, i)};
      const auto q = geometry::pixel_to_plane(M, px, a.z);
      text += t.rows[i][0] + "," + t.rows[i][1] + "," + csv::format_double(q.X) + "," + csv::format_double(q.Y) + "\n";
    }
    make_parent(a.plane_out);
    post::write_text(a.plane_out, text);
  }
  return 0;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::string scenario, out;
  int agents = 280;
  int replications = 1;
  std::uint64_t seed = 1;
};

int run_gen(const GenArgs& a, const json& config) {
  if (a.agents < 1 || a.replications < 1) throw Error(ErrorCode::InvalidConfig, "--agents and --replications must be >= 1");
  const Scenario sc = load_scenario(a.scenario);
  Manifest m{"gen-data", config, {a.scenario}, {}, a.seed, a.scenario};
  dataset::OracleConfig oc;
  json ocj;
  dataset::to_json(ocj, oc);
  m.config["oracle"] = ocj;
  std::vector<fs::path> files;
  for (int r = 0; r < a.replications; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d.csv", r);
    files.push_back(fs::path(a.out) / name);
    m.outputs.push_back(files.back().string());
  }
  m.write(fs::path(a.out) / "manifest.json");
  for (int r = 0; r < a.replications; ++r) {
    const auto trajs = dataset::generate_synthetic(sc, a.agents, a.seed + static_cast<std::uint64_t>(r), oc);
    std::size_t arrived = 0;
    for (const auto& t : trajs) arrived += t.status == AgentStatus::Arrived;
    dataset::write_trajectories_csv(files[static_cast<std::size_t>(r)], trajs, sc.graph);
    spdlog::info("{}: {} agents, {} arrived", files[static_cast<std::size_t>(r)].string(), trajs.size(), arrived);
  }
  return 0;
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string scenario, out;
  std::vector<std::string> inputs;
  std::uint64_t seed = 7;
  double validation_fraction = 0.1;
};

int run_prepare(const PrepareArgs& a, const json& config) {
  const Scenario sc = load_scenario(a.scenario);
  const auto files = csv_inputs(a.inputs);
  Manifest m{"prepare", config, {a.scenario}, {a.out}, a.seed, a.scenario};
  for (const auto& f : files) m.inputs.push_back(f.string());
  std::vector<std::vector<Trajectory>> scenes;
  for (const auto& f : files) scenes.push_back(dataset::read_trajectories_csv(f, sc.graph));
  const features::FeatureConfig fc;
  m.config["features"] = dataset::feature_config_to_json(fc);
  m.write(fs::path(a.out) / "manifest.run.json");
  const auto bundle = dataset::prepare_dataset(sc, fc, scenes, a.seed, a.validation_fraction);
  dataset::save_bundle(bundle, a.out);
  spdlog::info("{} samples ({} train / {} validation) from {} scenes", bundle.samples.size(), bundle.split.train.size(),
               bundle.split.validation.size(), scenes.size());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset, out, curve;
  int epochs = 30, batch_size = 32, threads = 1;
  double learning_rate = 1e-3, lambda_pos = 25.0, lambda_edge = 1.0, history_dropout = 0.5;
  int encoder_hidden = 32, decoder_hidden = 64, attention_dim = 32, local_embed = 16, decoder_steps = 4;
  bool share_local = false;
  std::uint64_t seed = 3;
};

int run_train(const TrainArgs& a, const json& config) {
  Manifest m{"train", config, {a.dataset}, {a.out}, a.seed, {}};
  if (!a.curve.empty()) m.outputs.push_back(a.curve);
  const auto bundle = dataset::load_bundle(a.dataset);
  if (bundle.samples.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no samples");
  const auto& s0 = bundle.samples.front();
  if (!bundle.provenance.contains("edges") || !bundle.provenance.contains("features"))
    throw Error(ErrorCode::ParseError, "dataset manifest lacks the graph size or feature configuration");
  nn::ModelConfig mc = nn::model_config_for(dataset::feature_config_from_json(bundle.provenance["features"]),
                                            bundle.provenance["nodes"].get<int>(), bundle.provenance["edges"].get<int>());
  if (mc.nodes != s0.local.nodes || mc.window != s0.local.steps)
    throw Error(ErrorCode::ShapeMismatch, "dataset samples do not match its manifest");
  mc.local_embed = a.local_embed;
  mc.encoder_hidden = a.encoder_hidden;
  mc.decoder_hidden = a.decoder_hidden;
  mc.attention_dim = a.attention_dim;
  mc.decoder_steps = a.decoder_steps;
  mc.share_local = a.share_local;
  mc.validate();

  nn::TrainConfig tc;
  tc.learning_rate = a.learning_rate;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.threads = a.threads;
  tc.weights = {a.lambda_pos, a.lambda_edge};
  tc.history_dropout = a.history_dropout;
  tc.seed = a.seed;
  tc.validate();
  json mcj, tcj;
  nn::to_json(mcj, mc);
  nn::to_json(tcj, tc);
  m.config["model"] = mcj;
  m.config["training"] = tcj;
  m.write(manifest_next_to(a.out));

  const auto init = nn::init_params(mc, a.seed);
  spdlog::info("training {} parameters on {} samples", init.size(), bundle.samples.size());
  std::string curve = "epoch,train_loss,validation_loss,learning_rate\n";
  const auto result = nn::train(bundle.samples, init, tc, bundle.split, [&](const nn::EpochStats& s) {
    spdlog::info("epoch {} train {:.5f} validation {:.5f} lr {:.3g}", s.epoch, s.train_loss, s.validation_loss,
                 s.learning_rate);
    curve += std::to_string(s.epoch) + "," + csv::format_double(s.train_loss) + "," +
             csv::format_double(s.validation_loss) + "," + csv::format_double(s.learning_rate) + "\n";
  });
  if (!result.split.validation.empty()) {
    const auto ev = nn::evaluate(result.params, bundle.samples, result.split.validation);
    spdlog::info("best epoch {}: validation position error {:.4f} m, edge accuracy {:.4f}", result.best_epoch,
                 ev.position_error, ev.edge_accuracy);
  }
  make_parent(a.out);
  nn::save_checkpoint(result.params, a.out);
  if (!a.curve.empty()) {
    make_parent(a.curve);
    post::write_text(a.curve, curve);
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scenario, model, out, states, reference, replace_ids;
  double duration = 280.0, replace_fraction = 0.0;
  bool drain = false;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateArgs& a, const json& config) {
  const Scenario sc = load_scenario(a.scenario);
  Manifest m{"simulate", config, {a.scenario, a.model}, {a.out}, a.seed, a.scenario};
  if (!a.reference.empty()) m.inputs.push_back(a.reference);
  if (!a.states.empty()) m.outputs.push_back(a.states);
  if (!(a.replace_fraction >= 0.0 && a.replace_fraction <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "--replace-fraction must lie in [0, 1]");
  if (a.reference.empty() && (a.replace_fraction > 0.0 || !a.replace_ids.empty()))
    throw Error(ErrorCode::InvalidConfig, "replacement needs --reference");

  const auto params = nn::load_checkpoint(a.model);
  sim::NetworkModel model(params);
  sim::SimConfig cfg;
  cfg.drain = a.drain;
  model.check(sc, cfg.features);
  m.write(manifest_next_to(a.out));

  std::ofstream states;
  if (!a.states.empty()) {
    make_parent(a.states);
    states.open(a.states, std::ios::binary);
    if (!states) throw Error(ErrorCode::Io, "cannot write " + a.states);
  }
  sim::StepObserver observer;
  if (states.is_open()) observer = [&](const sim::SimState& s) { sim::write_state_json(states, s, sc.graph); };

  std::vector<Trajectory> out;
  if (a.reference.empty()) {
    out = sim::run(sc, model, a.duration, a.seed, cfg, observer);
  } else {
    auto ref = dataset::read_trajectories_csv(a.reference, sc.graph);
    for (auto& t : ref) t = dataset::resample_5fps(t);
    assign_flows(ref, sc);
    std::vector<int> ids;
    if (!a.replace_ids.empty()) {
      std::stringstream ss(a.replace_ids);
      for (std::string tok; std::getline(ss, tok, ',');) ids.push_back(static_cast<int>(csv::to_long(tok, "--replace-ids", 0)));
    } else {
      std::vector<int> all;
      for (const auto& t : ref) all.push_back(t.agent_id);
      Rng rng(a.seed);
      rng.shuffle(all);
      all.resize(static_cast<std::size_t>(std::llround(a.replace_fraction * static_cast<double>(all.size()))));
      std::sort(all.begin(), all.end());
      ids = all;
    }
    spdlog::info("replacing {} of {} reference agents", ids.size(), ref.size());
    out = sim::run_replacement(sc, model, ref, ids, a.seed, cfg, observer);
  }
  std::map<AgentStatus, int> status;
  for (const auto& t : out) ++status[t.status];
  spdlog::info("{} agents: {} arrived, {} timed out, {} active", out.size(), status[AgentStatus::Arrived],
               status[AgentStatus::TimedOut], status[AgentStatus::Active]);
  make_parent(a.out);
  dataset::write_trajectories_csv(a.out, out, sc.graph);
  return 0;
}

// ---------------------------------------------------------------- interpolate

struct InterpolateArgs {
  std::string scenario, input, out, model, report;
  double delta = 0.8;
  int n_pred = 40;
  int flow = 0;
};

int run_interpolate(const InterpolateArgs& a, const json& config) {
  const Scenario sc = load_scenario(a.scenario);
  const post::ConnectionConfig cc(a.n_pred, a.delta);
  Manifest m{"interpolate", config, {a.scenario, a.input}, {a.out}, std::nullopt, a.scenario};
  if (!a.model.empty()) m.inputs.push_back(a.model);
  if (!a.report.empty()) m.outputs.push_back(a.report);
  std::vector<const FlowRoute*> flows;
  for (const auto& f : sc.flows)
    if (a.flow == 0 || f.flow_id == a.flow) flows.push_back(&f);
  if (flows.empty()) throw Error(ErrorCode::InvalidConfig, "scenario has no flow " + std::to_string(a.flow));
  std::optional<nn::ModelParams> params;
  if (!a.model.empty()) params = nn::load_checkpoint(a.model);
  m.write(manifest_next_to(a.out));

  std::vector<Trajectory> trajs = dataset::read_trajectories_csv(a.input, sc.graph);
  const std::vector<Trajectory> scene = trajs;
  json connections = json::array();
  for (const FlowRoute* f : flows) {
    post::ConstantVelocityPredictor cv;
    std::optional<post::ModelPredictor> mp;
    if (params) mp.emplace(*params, sc, *f, features::FeatureConfig{}, scene);
    post::Predictor& predictor = mp ? static_cast<post::Predictor&>(*mp) : cv;
    auto result = post::connect_trajectories(trajs, cc, sc, *f, predictor);
    for (const auto& c : result.connections)
      connections.push_back({{"flow", f->flow_id}, {"head", c.head_id}, {"tail", c.tail_id}, {"bridge_points", c.bridge_points}});
    spdlog::info("flow {}: {} connections", f->flow_id, result.connections.size());
    if (mp && mp->fallbacks() > 0) spdlog::warn("flow {}: {} rollouts fell back to constant velocity", f->flow_id, mp->fallbacks());
    trajs = std::move(result.trajectories);
  }
  make_parent(a.out);
  dataset::write_trajectories_csv(a.out, trajs, sc.graph);
  if (!a.report.empty()) {
    make_parent(a.report);
    write_json(a.report, {{"connections", connections}});
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate / plot

std::string opt_text(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

struct SeriesFile {
  std::string name;
  std::vector<double> t;
  std::vector<std::optional<double>> count_actual, count_sim, speed_actual, speed_sim;
};

SeriesFile read_series(const fs::path& path) {
  const csv::Table tab = csv::read(path, {"t", "count_actual", "count_simulated", "speed_actual", "speed_simulated"});
  SeriesFile s;
  s.name = path.stem().string();
  auto field = [&](const std::string& f, std::size_t row) -> std::optional<double> {
    if (f.empty()) return std::nullopt;
    return csv::to_double(f, path, row);
  };
  for (std::size_t i = 0; i < tab.rows.size(); ++i) {
    const auto& r = tab.rows[i];
    s.t.push_back(csv::to_double(r[0], path, i));
    s.count_actual.push_back(field(r[1], i));
    s.count_sim.push_back(field(r[2], i));
    s.speed_actual.push_back(field(r[3], i));
    s.speed_sim.push_back(field(r[4], i));
  }
  if (s.t.empty()) throw Error(ErrorCode::EmptyDataset, path.string() + " has no rows");
  return s;
}

void write_plots(const std::vector<SeriesFile>& files, const SignalSchedule* schedule, const fs::path& dir) {
  std::vector<post::PlotSeries> counts, speeds;
  for (const auto& f : files) {
    counts.push_back({f.name + " actual", f.t, f.count_actual});
    counts.push_back({f.name + " simulated", f.t, f.count_sim});
    speeds.push_back({f.name + " actual", f.t, f.speed_actual});
    speeds.push_back({f.name + " simulated", f.t, f.speed_sim});
  }
  fs::create_directories(dir);
  post::write_text(dir / "count.svg", post::series_svg(counts, "Pedestrians in the crosswalk", "persons", schedule));
  post::write_text(dir / "speed.svg", post::series_svg(speeds, "Mean speed in the crosswalk", "m/s", schedule));
}

struct EvaluateArgs {
  std::string scenario, actual, simulated, out;
  bool plots = false;
};

int run_evaluate(const EvaluateArgs& a, const json& config) {
  const Scenario sc = load_scenario(a.scenario);
  Manifest m{"evaluate", config, {a.scenario, a.actual, a.simulated}, {}, std::nullopt, a.scenario};
  const fs::path dir(a.out);
  for (const auto& f : sc.flows) m.outputs.push_back((dir / ("series_flow" + std::to_string(f.flow_id) + ".csv")).string());
  m.outputs.push_back((dir / "summary.json").string());
  if (a.plots) {
    m.outputs.push_back((dir / "count.svg").string());
    m.outputs.push_back((dir / "speed.svg").string());
  }
  auto actual = dataset::read_trajectories_csv(a.actual, sc.graph);
  auto simulated = dataset::read_trajectories_csv(a.simulated, sc.graph);
  assign_flows(actual, sc);
  assign_flows(simulated, sc);
  double t0 = std::numeric_limits<double>::infinity(), t1 = -t0;
  for (const auto& t : actual)
    if (!t.empty()) t0 = std::min(t0, t.start_time()), t1 = std::max(t1, t.end_time());
  if (!std::isfinite(t0)) throw Error(ErrorCode::EmptyDataset, "actual trajectories are empty");
  m.write(dir / "manifest.json");

  json summary{{"frame_rate", 5.0}, {"range", {t0, t1}}, {"flows", json::object()}};
  std::vector<SeriesFile> files;
  for (const auto& f : sc.flows) {
    std::vector<Trajectory> fa, fs_;
    for (const auto& t : actual)
      if (t.flow_id == f.flow_id) fa.push_back(t);
    for (const auto& t : simulated)
      if (t.flow_id == f.flow_id) fs_.push_back(t);
    const auto sa = post::crowd_metrics(fa, sc.crosswalk, 5.0, std::pair{t0, t1});
    const auto ss = post::crowd_metrics(fs_, sc.crosswalk, 5.0, std::pair{t0, t1});
    const auto ca = post::counts_of(sa), cs = post::counts_of(ss);
    const auto count = post::rmse(ca, cs);
    const auto va = post::speeds_of(sa), vs = post::speeds_of(ss);
    const auto speed = post::rmse(va, vs);
    summary["flows"][std::to_string(f.flow_id)] = {{"count_rmse", *count.value},
                                                    {"speed_rmse", speed.value ? json(*speed.value) : json(nullptr)},
                                                    {"speed_frames_used", speed.used},
                                                    {"speed_frames_excluded", speed.excluded}};
    spdlog::info("flow {}: count RMSE {:.3f} persons, speed RMSE {} m/s ({} frames excluded)", f.flow_id, *count.value,
                 speed.value ? csv::format_fixed(*speed.value, 3) : "n/a", speed.excluded);
    SeriesFile sf;
    sf.name = "flow" + std::to_string(f.flow_id);
    std::string text = "t,count_actual,count_simulated,speed_actual,speed_simulated\n";
    for (std::size_t k = 0; k < sa.size(); ++k) {
      text += csv::format_fixed(sa[k].t, 1) + "," + std::to_string(sa[k].count) + "," + std::to_string(ss[k].count) + "," +
              opt_text(sa[k].mean_speed) + "," + opt_text(ss[k].mean_speed) + "\n";
      sf.t.push_back(sa[k].t);
      sf.count_actual.push_back(sa[k].count);
      sf.count_sim.push_back(ss[k].count);
      sf.speed_actual.push_back(sa[k].mean_speed);
      sf.speed_sim.push_back(ss[k].mean_speed);
    }
    post::write_text(dir / ("series_flow" + std::to_string(f.flow_id) + ".csv"), text);
    files.push_back(std::move(sf));
  }
  write_json(dir / "summary.json", summary);
  if (a.plots) write_plots(files, &sc.schedule, dir);
  return 0;
}

struct PlotArgs {
  std::vector<std::string> series;
  std::string scenario, trajectories, out;
};

int run_plot(const PlotArgs& a, const json& config) {
  Manifest m{"plot", config, a.series, {}, std::nullopt, a.scenario};
  if (!a.scenario.empty()) m.inputs.push_back(a.scenario);
  if (!a.trajectories.empty()) {
    if (a.scenario.empty()) throw Error(ErrorCode::InvalidConfig, "--trajectories needs --scenario");
    m.inputs.push_back(a.trajectories);
  }
  const fs::path dir(a.out);
  std::optional<Scenario> sc;
  if (!a.scenario.empty()) sc = load_scenario(a.scenario);
  std::vector<SeriesFile> files;
  for (const auto& s : a.series) files.push_back(read_series(s));
  if (!files.empty()) {
    m.outputs.push_back((dir / "count.svg").string());
    m.outputs.push_back((dir / "speed.svg").string());
  }
  if (!a.trajectories.empty()) m.outputs.push_back((dir / "trajectories.svg").string());
  if (m.outputs.empty()) throw Error(ErrorCode::InvalidConfig, "nothing to plot: give --series or --trajectories");
  m.write(dir / "manifest.json");
  if (!files.empty()) write_plots(files, sc ? &sc->schedule : nullptr, dir);
  if (!a.trajectories.empty()) {
    auto trajs = dataset::read_trajectories_csv(a.trajectories, sc->graph);
    assign_flows(trajs, *sc);
    post::write_text(dir / "trajectories.svg", post::trajectories_svg(trajs, *sc));
  }
  return 0;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Multi-scale pedestrian flow: data generation, training, simulation and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("pedflow ") + kVersion + " (scenario schema " +
                                        std::to_string(kScenarioSchemaVersion) + ", checkpoint " +
                                        std::to_string(nn::kCheckpointVersion) + ", samples " +
                                        std::to_string(dataset::kSampleFileVersion) + ")");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  std::function<int()> action;
  std::vector<std::unique_ptr<Options>> opts;
  auto sub = [&](const std::string& name, const std::string& desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    opts.push_back(std::make_unique<Options>(s));
    return std::pair{s, opts.back().get()};
  };

  CalibrateArgs ca;
  {
    auto [s, o] = sub("calibrate", "Estimate the camera projection matrix from point correspondences");
    o->add("points", ca.points, "CSV u,v,X,Y,Z")->required();
    o->add("out", ca.out, "output JSON with the matrix")->required();
    o->add("pixels", ca.pixels, "CSV u,v of pixels to convert");
    o->add("plane-out", ca.plane_out, "CSV u,v,X,Y of converted pixels");
    o->add("z", ca.z, "height of the pedestrian plane (m)");
    s->callback([&, o = o] { action = [&, o] { return run_calibrate(ca, o->resolve()); }; });
  }
  GenArgs ga;
  {
    auto [s, o] = sub("gen-data", "Generate oracle trajectories");
    o->add("scenario", ga.scenario, "scenario JSON")->required();
    o->add("agents", ga.agents, "agents per replication");
    o->add("replications", ga.replications, "scenes, seeded seed, seed+1, ...");
    o->add("seed", ga.seed, "base seed");
    o->add("out", ga.out, "output directory")->required();
    s->callback([&, o = o] { action = [&, o] { return run_gen(ga, o->resolve()); }; });
  }
  PrepareArgs pa;
  {
    auto [s, o] = sub("prepare", "Annotate, resample, featurize and balance trajectories into a dataset");
    o->add("scenario", pa.scenario, "scenario JSON")->required();
    o->add("input", pa.inputs, "trajectory CSV files or directories")->required();
    o->add("seed", pa.seed, "downsampling and split seed");
    o->add("validation-fraction", pa.validation_fraction, "held-out fraction");
    o->add("out", pa.out, "dataset directory")->required();
    s->callback([&, o = o] { action = [&, o] { return run_prepare(pa, o->resolve()); }; });
  }
  TrainArgs ta;
  {
    auto [s, o] = sub("train", "Train the network on a prepared dataset");
    o->add("dataset", ta.dataset, "dataset directory")->required();
    o->add("out", ta.out, "checkpoint path")->required();
    o->add("curve", ta.curve, "CSV of per-epoch losses");
    o->add("epochs", ta.epochs, "epochs");
    o->add("batch-size", ta.batch_size, "minibatch size");
    o->add("learning-rate", ta.learning_rate, "Adam learning rate");
    o->add("lambda-pos", ta.lambda_pos, "weight of the displacement loss");
    o->add("lambda-edge", ta.lambda_edge, "weight of the edge loss");
    o->add("history-dropout", ta.history_dropout, "probability of hiding a sample's past steps");
    o->add("encoder-hidden", ta.encoder_hidden, "encoder LSTM width");
    o->add("decoder-hidden", ta.decoder_hidden, "decoder LSTM width");
    o->add("attention-dim", ta.attention_dim, "attention width");
    o->add("local-embed", ta.local_embed, "per-stream embedding width");
    o->add("decoder-steps", ta.decoder_steps, "decoder steps");
    o->flag("share-local", ta.share_local, "one LSTM for all local streams");
    o->add("threads", ta.threads, "worker threads (results do not depend on it)");
    o->add("seed", ta.seed, "initialization and shuffling seed");
    s->callback([&, o = o] { action = [&, o] { return run_train(ta, o->resolve()); }; });
  }
  SimulateArgs sa;
  {
    auto [s, o] = sub("simulate", "Run the closed-loop crowd simulation");
    o->add("scenario", sa.scenario, "scenario JSON")->required();
    o->add("model", sa.model, "checkpoint")->required();
    o->add("duration", sa.duration, "seconds of spawning");
    o->flag("drain", sa.drain, "keep stepping until every agent arrived or timed out");
    o->add("seed", sa.seed, "seed");
    o->add("reference", sa.reference, "reference trajectories for replacement mode");
    o->add("replace-fraction", sa.replace_fraction, "fraction of reference agents driven by the model");
    o->add("replace-ids", sa.replace_ids, "comma-separated agent ids driven by the model");
    o->add("states", sa.states, "JSON-lines dump of every step");
    o->add("out", sa.out, "trajectory CSV")->required();
    s->callback([&, o = o] { action = [&, o] { return run_simulate(sa, o->resolve()); }; });
  }
  InterpolateArgs ia;
  {
    auto [s, o] = sub("interpolate", "Connect broken trajectories across gaps");
    o->add("scenario", ia.scenario, "scenario JSON")->required();
    o->add("input", ia.input, "trajectory CSV")->required();
    o->add("out", ia.out, "connected trajectory CSV")->required();
    o->add("model", ia.model, "checkpoint (constant velocity when absent)");
    o->add("delta", ia.delta, "distance threshold (m)");
    o->add("n-pred", ia.n_pred, "maximum prediction steps");
    o->add("flow", ia.flow, "flow id, 0 for every flow");
    o->add("report", ia.report, "JSON list of connections");
    s->callback([&, o = o] { action = [&, o] { return run_interpolate(ia, o->resolve()); }; });
  }
  EvaluateArgs ea;
  {
    auto [s, o] = sub("evaluate", "Crosswalk count and speed series with RMSE");
    o->add("scenario", ea.scenario, "scenario JSON")->required();
    o->add("actual", ea.actual, "reference trajectory CSV")->required();
    o->add("simulated", ea.simulated, "simulated trajectory CSV")->required();
    o->add("out", ea.out, "output directory")->required();
    o->flag("plots", ea.plots, "also write count.svg and speed.svg");
    s->callback([&, o = o] { action = [&, o] { return run_evaluate(ea, o->resolve()); }; });
  }
  PlotArgs pl;
  {
    auto [s, o] = sub("plot", "SVG plots of evaluation series and trajectories");
    o->add("series", pl.series, "series CSVs written by evaluate");
    o->add("scenario", pl.scenario, "scenario JSON (signal shading, map)");
    o->add("trajectories", pl.trajectories, "trajectory CSV to draw");
    o->add("out", pl.out, "output directory")->required();
    s->callback([&, o = o] { action = [&, o] { return run_plot(pl, o->resolve()); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  auto logger = spdlog::stderr_logger_st("pedflow");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    return action();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("Io: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 3;
  }
}

}  // namespace pedflow::cli

int main(int argc, char** argv) { return pedflow::cli::dispatch(argc, argv); }
