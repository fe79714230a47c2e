#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "pedflow/csv.hpp"
#include "pedflow/dataset.hpp"
#include "pedflow/error.hpp"

namespace pedflow::dataset {

namespace {

constexpr char kSampleMagic[8] = {'P', 'F', 'S', 'M', 'P', 'L', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

struct Reader {
  std::istream& in;
  const std::filesystem::path& path;

  template <typename T>
  T get() {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail();
    return v;
  }
  template <typename T>
  void get_vec(std::vector<T>& v, std::size_t n) {
    v.resize(n);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)))) fail();
  }
  [[noreturn]] void fail() const { throw Error(ErrorCode::ParseError, "truncated sample file " + path.string()); }
};

}  // namespace

void validate_trajectory(const Trajectory& traj) {
  const auto& r = traj.records;
  const std::string who = "agent " + std::to_string(traj.agent_id);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!std::isfinite(r[i].t) || !std::isfinite(r[i].p.x) || !std::isfinite(r[i].p.y))
      throw Error(ErrorCode::InvalidTrajectory, who + ": non-finite record");
    if (i == 0) continue;
    const double dt = r[i].t - r[i - 1].t;
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidTrajectory, who + ": timestamps not strictly increasing");
    if (norm(r[i].p - r[i - 1].p) / dt > kMaxSpeed)
      throw Error(ErrorCode::InvalidTrajectory, who + ": speed above 4 m/s at t=" + csv::format_double(r[i].t));
  }
}

std::vector<Trajectory> read_trajectories_csv(const std::filesystem::path& path, const GraphSpec& graph) {
  const csv::Table table = csv::read(path, {"t", "id", "x", "y"}, {"edge"});
  std::map<long, Trajectory> by_id;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const long id = csv::to_long(row[1], path, i + 2);
    TrajectoryRecord rec{csv::to_double(row[0], path, i + 2),
                         {csv::to_double(row[2], path, i + 2), csv::to_double(row[3], path, i + 2)}, kUnlabeled};
    if (row.size() > 4 && !row[4].empty()) {
      const auto e = parse_edge_token(row[4]);
      const int idx = e ? graph.edge_index(*e) : -1;
      if (idx < 0)
        throw Error(ErrorCode::InvalidTrajectory, path.string() + " row " + std::to_string(i + 2) + ": unknown edge '" +
                                                      row[4] + "'");
      rec.edge = idx;
    }
    Trajectory& traj = by_id[id];
    traj.agent_id = static_cast<int>(id);
    traj.records.push_back(rec);
  }
  std::vector<Trajectory> out;
  for (auto& [id, traj] : by_id) {
    validate_trajectory(traj);
    out.push_back(std::move(traj));
  }
  return out;
}

void write_trajectories_csv(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                            const GraphSpec& graph) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "t,id,x,y,edge\n";
  for (const auto& traj : trajs) {
    for (const auto& r : traj.records) {
      out << csv::format_double(r.t) << ',' << traj.agent_id << ',' << csv::format_double(r.p.x) << ','
          << csv::format_double(r.p.y) << ',';
      if (r.edge >= 0) out << edge_token(graph.edges()[static_cast<std::size_t>(r.edge)]);
      out << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

int infer_flow(const Trajectory& traj, const Scenario& scenario) {
  for (const auto& r : traj.records) {
    if (r.edge < 0) continue;
    const EdgeRef e = scenario.graph.edges()[static_cast<std::size_t>(r.edge)];
    for (const auto& f : scenario.flows)
      if (f.position(e) >= 0) return f.flow_id;
    return -1;
  }
  // Unlabeled: direction of travel against each route's origin-to-goal axis.
  if (traj.size() < 2) return -1;
  const Vec2 moved = traj.records.back().p - traj.records.front().p;
  int best = -1;
  double best_dot = 0.0;
  for (const auto& f : scenario.flows) {
    const Vec2 axis = normalized(scenario.graph.node(f.goal).anchor - scenario.graph.node(f.edges.front().from).anchor);
    const double d = dot(moved, axis);
    if (d > best_dot) {
      best = f.flow_id;
      best_dot = d;
    }
  }
  return best;
}

nlohmann::json feature_config_to_json(const features::FeatureConfig& fc) {
  return {{"window", fc.window},
          {"dt", fc.dt},
          {"rings", fc.rings},
          {"sectors", fc.sectors},
          {"ring_spacing", fc.ring_spacing},
          {"bird_size", fc.bird_size},
          {"bird_meters_per_cell", fc.bird_meters_per_cell},
          {"min_heading_displacement", fc.min_heading_displacement},
          {"max_history", fc.max_history}};
}

features::FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  features::FeatureConfig d, fc;
  fc.window = j.value("window", d.window);
  fc.dt = j.value("dt", d.dt);
  fc.rings = j.value("rings", d.rings);
  fc.sectors = j.value("sectors", d.sectors);
  fc.ring_spacing = j.value("ring_spacing", d.ring_spacing);
  fc.bird_size = j.value("bird_size", d.bird_size);
  fc.bird_meters_per_cell = j.value("bird_meters_per_cell", d.bird_meters_per_cell);
  fc.min_heading_displacement = j.value("min_heading_displacement", d.min_heading_displacement);
  fc.max_history = j.value("max_history", d.max_history);
  return fc;
}

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto bin = dir / "samples.bin";
  std::ofstream out(bin, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + bin.string());
  out.write(kSampleMagic, sizeof kSampleMagic);
  put<std::uint32_t>(out, kSampleFileVersion);
  put<std::uint64_t>(out, bundle.samples.size());
  for (const auto& s : bundle.samples) {
    const auto& w = s.local;
    put<std::int32_t>(out, w.steps);
    put<std::int32_t>(out, w.nodes);
    put<std::int32_t>(out, w.occupancy_cells);
    put<std::int32_t>(out, w.bird_cells);
    put_vec(out, w.rel_pos);
    put_vec(out, w.occupancy);
    put_vec(out, w.bird);
    put_vec(out, w.edge);
    put_vec(out, w.signal);
    put_vec(out, w.valid);
    put<std::int32_t>(out, s.global.goal);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.global.edge_history.size()));
    for (const int e : s.global.edge_history) put<std::int32_t>(out, e);
    put<double>(out, s.target_delta.x);
    put<double>(out, s.target_delta.y);
    put<std::int32_t>(out, s.target_edge);
    put<std::int32_t>(out, s.agent_id);
    put<std::int32_t>(out, s.flow_id);
    put<double>(out, s.time);
    put<std::int32_t>(out, s.current_edge);
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing " + bin.string());

  nlohmann::json manifest = bundle.provenance;
  manifest["sample_file_version"] = kSampleFileVersion;
  manifest["sample_count"] = bundle.samples.size();
  manifest["split"] = {{"train", bundle.split.train}, {"validation", bundle.split.validation}};
  std::ofstream m(dir / "manifest.json", std::ios::trunc);
  m << manifest.dump(2) << '\n';
  if (!m) throw Error(ErrorCode::Io, "failed writing manifest in " + dir.string());
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  DatasetBundle bundle;
  {
    std::ifstream m(dir / "manifest.json");
    if (!m) throw Error(ErrorCode::Io, "no manifest.json in " + dir.string());
    try {
      bundle.provenance = nlohmann::json::parse(m);
      bundle.split.train = bundle.provenance.at("split").at("train").get<std::vector<std::size_t>>();
      bundle.split.validation = bundle.provenance.at("split").at("validation").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "dataset manifest: " + std::string(e.what()));
    }
    bundle.provenance.erase("split");
  }
  const auto bin = dir / "samples.bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + bin.string());
  Reader r{in, bin};
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kSampleMagic, sizeof magic) != 0)
    throw Error(ErrorCode::ParseError, bin.string() + " is not a sample file");
  const auto version = r.get<std::uint32_t>();
  if (version != kSampleFileVersion)
    throw Error(ErrorCode::VersionMismatch, "sample file version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  bundle.samples.resize(count);
  for (auto& s : bundle.samples) {
    auto& w = s.local;
    w.steps = r.get<std::int32_t>();
    w.nodes = r.get<std::int32_t>();
    w.occupancy_cells = r.get<std::int32_t>();
    w.bird_cells = r.get<std::int32_t>();
    if (w.steps <= 0 || w.nodes <= 0 || w.occupancy_cells <= 0 || w.bird_cells <= 0 || w.steps > 10000 ||
        w.bird_cells > 1000000)
      throw Error(ErrorCode::ParseError, "implausible sample shape in " + bin.string());
    const auto n = static_cast<std::size_t>(w.steps);
    r.get_vec(w.rel_pos, n * static_cast<std::size_t>(w.nodes) * 2);
    r.get_vec(w.occupancy, n * static_cast<std::size_t>(w.occupancy_cells));
    r.get_vec(w.bird, n * static_cast<std::size_t>(w.bird_cells));
    r.get_vec(w.edge, n);
    r.get_vec(w.signal, n);
    r.get_vec(w.valid, n);
    s.global.goal = r.get<std::int32_t>();
    const auto hist = r.get<std::uint32_t>();
    if (hist > 10000) r.fail();
    s.global.edge_history.resize(hist);
    for (auto& e : s.global.edge_history) e = r.get<std::int32_t>();
    s.target_delta.x = r.get<double>();
    s.target_delta.y = r.get<double>();
    s.target_edge = r.get<std::int32_t>();
    s.agent_id = r.get<std::int32_t>();
    s.flow_id = r.get<std::int32_t>();
    s.time = r.get<double>();
    s.current_edge = r.get<std::int32_t>();
  }
  for (const auto i : bundle.split.train)
    if (i >= count) throw Error(ErrorCode::ParseError, "split index beyond sample count");
  for (const auto i : bundle.split.validation)
    if (i >= count) throw Error(ErrorCode::ParseError, "split index beyond sample count");
  return bundle;
}

}  // namespace pedflow::dataset
