#include <bit>
#include <cstring>
#include <fstream>

#include "pedflow/error.hpp"
#include "pedflow/nn/model.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace pedflow::nn {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw Error(ErrorCode::ParseError, "truncated checkpoint " + path.string());
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n)))
    throw Error(ErrorCode::ParseError, "truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(params.config()).dump();
  put<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors().size()));
  for (const TensorInfo& t : params.tensors()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint8_t>(out, 2);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    const auto view = params.tensor(t.name);
    out.write(reinterpret_cast<const char*>(view.data()), static_cast<std::streamsize>(view.size_bytes()));
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error(ErrorCode::ParseError, path.string() + " is not a model checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  const auto cfg_len = get<std::uint64_t>(in, path);
  if (cfg_len > (1u << 20)) throw Error(ErrorCode::ParseError, "implausible config block in " + path.string());
  ModelConfig config;
  try {
    config = nlohmann::json::parse(get_string(in, cfg_len, path)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "checkpoint config: " + std::string(e.what()));
  }
  ModelParams params(config);
  const auto count = get<std::uint32_t>(in, path);
  if (count != params.tensors().size())
    throw Error(ErrorCode::ParseError, "checkpoint tensor count does not match its config");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = get_string(in, get<std::uint16_t>(in, path), path);
    const auto dtype = get<std::uint8_t>(in, path);
    const auto rank = get<std::uint8_t>(in, path);
    if (dtype != kDtypeF64 || rank != 2) throw Error(ErrorCode::ParseError, "unsupported tensor encoding for " + name);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    const TensorInfo& info = params.info(name);
    if (static_cast<int>(rows) != info.rows || static_cast<int>(cols) != info.cols)
      throw Error(ErrorCode::ParseError, "tensor " + name + " has unexpected shape");
    auto view = params.tensor(name);
    if (!in.read(reinterpret_cast<char*>(view.data()), static_cast<std::streamsize>(view.size_bytes())))
      throw Error(ErrorCode::ParseError, "truncated checkpoint " + path.string());
  }
  return params;
}

}  // namespace pedflow::nn
