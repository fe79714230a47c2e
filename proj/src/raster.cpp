#include "pedflow/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pedflow/csv.hpp"
#include "pedflow/error.hpp"

namespace pedflow {
namespace {

std::filesystem::path sidecar(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".geo.json");
}

// PGM tokens, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw Error(ErrorCode::ParseError, "truncated PGM header");
}

void read_pgm(const std::filesystem::path& path, Raster& r) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::RasterMissing, "cannot open raster " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P2" && magic != "P5") throw Error(ErrorCode::ParseError, path.string() + ": not a PGM");
  r.width = std::stoi(next_token(in));
  r.height = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (r.width <= 0 || r.height <= 0 || maxval <= 0 || maxval > 255)
    throw Error(ErrorCode::ParseError, path.string() + ": unsupported PGM geometry");
  std::vector<int> raw(static_cast<std::size_t>(r.width) * r.height);
  if (magic == "P2") {
    for (auto& v : raw) {
      if (!(in >> v)) throw Error(ErrorCode::ParseError, path.string() + ": truncated pixel data");
    }
  } else {
    in.get();
    for (auto& v : raw) {
      const int c = in.get();
      if (c == EOF) throw Error(ErrorCode::ParseError, path.string() + ": truncated pixel data");
      v = c;
    }
  }
  r.values.resize(raw.size());
  // Image rows run top to bottom; raster rows run with +y.
  for (int row = 0; row < r.height; ++row)
    for (int col = 0; col < r.width; ++col)
      r.values[static_cast<std::size_t>(r.height - 1 - row) * r.width + col] =
          static_cast<float>(raw[static_cast<std::size_t>(row) * r.width + col]) / static_cast<float>(maxval);
}

void read_csv_grid(const std::filesystem::path& path, Raster& r) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::RasterMissing, "cannot open raster " + path.string());
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<float> vals;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      const double v = csv::to_double(field, path, rows.size());
      vals.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw Error(ErrorCode::ParseError, path.string() + ": ragged raster grid");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw Error(ErrorCode::ParseError, path.string() + ": empty raster grid");
  r.height = static_cast<int>(rows.size());
  r.width = static_cast<int>(rows.front().size());
  r.values.resize(static_cast<std::size_t>(r.width) * r.height);
  for (int row = 0; row < r.height; ++row)
    std::copy(rows[static_cast<std::size_t>(row)].begin(), rows[static_cast<std::size_t>(row)].end(),
              r.values.begin() + static_cast<std::ptrdiff_t>(r.height - 1 - row) * r.width);
}

}  // namespace

double Raster::sample(Vec2 world) const {
  const double fc = (world.x - origin.x) / meters_per_cell - 0.5;
  const double fr = (world.y - origin.y) / meters_per_cell - 0.5;
  if (!(fc > -1.0 && fr > -1.0 && fc < width && fr < height)) return 0.0;
  const double c0f = std::floor(fc), r0f = std::floor(fr);
  const int c0 = static_cast<int>(c0f), r0 = static_cast<int>(r0f);
  const double tc = fc - c0f, tr = fr - r0f;
  auto cell = [&](int row, int col) -> double {
    if (row < 0 || col < 0 || row >= height || col >= width) return 0.0;
    return at(row, col);
  };
  const double top = cell(r0, c0) * (1.0 - tc) + cell(r0, c0 + 1) * tc;
  const double bot = cell(r0 + 1, c0) * (1.0 - tc) + cell(r0 + 1, c0 + 1) * tc;
  return top * (1.0 - tr) + bot * tr;
}

Raster load_raster(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::RasterMissing, "raster not found: " + path.string());
  Raster r;
  const std::string ext = path.extension().string();
  if (ext == ".csv") read_csv_grid(path, r);
  else read_pgm(path, r);

  std::ifstream geo(sidecar(path));
  if (!geo) throw Error(ErrorCode::RasterMissing, "missing georeference " + sidecar(path).string());
  try {
    const auto j = nlohmann::json::parse(geo);
    r.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    r.meters_per_cell = j.at("meters_per_cell").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, sidecar(path).string() + ": " + e.what());
  }
  if (!(r.meters_per_cell > 0.0)) throw Error(ErrorCode::ParseError, "meters_per_cell must be positive");
  return r;
}

void save_raster_pgm(const Raster& raster, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "P2\n" << raster.width << ' ' << raster.height << "\n255\n";
  for (int row = raster.height - 1; row >= 0; --row) {
    for (int col = 0; col < raster.width; ++col) {
      const double v = std::clamp(static_cast<double>(raster.at(row, col)), 0.0, 1.0);
      out << (col ? " " : "") << static_cast<int>(std::lround(v * 255.0));
    }
    out << '\n';
  }
  nlohmann::json j;
  j["origin"] = {raster.origin.x, raster.origin.y};
  j["meters_per_cell"] = raster.meters_per_cell;
  std::ofstream(sidecar(path)) << j.dump(2) << '\n';
}

}  // namespace pedflow
