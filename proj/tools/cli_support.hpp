#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "pedflow/error.hpp"

namespace pedflow::cli {

/// Options of one subcommand that may also come from its --config file.
/// Flags given on the command line win over the file.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with option values (keys are flag names without dashes)");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* opt = app_->add_option("--" + flag, var, desc);
    if constexpr (!std::is_same_v<T, std::vector<std::string>>) opt->capture_default_str();
    add_setter(flag, opt, var);
    return opt;
  }

  CLI::Option* flag(const std::string& flag, bool& var, const std::string& desc) {
    CLI::Option* opt = app_->add_flag("--" + flag, var, desc);
    add_setter(flag, opt, var);
    return opt;
  }

  /// Fills options that were not given on the command line from the config
  /// file, then returns every option's resolved value.
  nlohmann::json resolve() {
    nlohmann::json file;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw Error(ErrorCode::Io, "cannot open config " + config_path_);
      try {
        file = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw Error(ErrorCode::ParseError, config_path_ + ": expected a JSON object");
      for (const auto& [key, value] : file.items())
        if (!known(key)) throw Error(ErrorCode::InvalidConfig, config_path_ + ": unknown key '" + key + "'");
    }
    nlohmann::json resolved;
    for (auto& e : entries_) {
      if (e.opt->count() == 0 && file.contains(e.key)) {
        try {
          e.set(file[e.key]);
        } catch (const nlohmann::json::exception& ex) {
          throw Error(ErrorCode::InvalidConfig, config_path_ + ": key '" + e.key + "': " + ex.what());
        }
      }
      resolved[e.key] = e.get();
    }
    if (!config_path_.empty()) resolved["config"] = config_path_;
    return resolved;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<void(const nlohmann::json&)> set;
    std::function<nlohmann::json()> get;
  };

  template <class T>
  void add_setter(const std::string& key, CLI::Option* opt, T& var) {
    entries_.push_back({key, opt, [&var](const nlohmann::json& j) { var = j.get<T>(); },
                        [&var] { return nlohmann::json(var); }});
  }

  bool known(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key) return true;
    return false;
  }

  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

}  // namespace pedflow::cli
