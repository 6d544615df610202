#pragma once

// key=value run configuration. Blank lines and '#' comments are ignored;
// unknown keys and malformed values are rejected when the file is loaded.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prn/codec_sim.hpp"
#include "prn/errors.hpp"
#include "prn/image.hpp"
#include "prn/nn/prcnn.hpp"
#include "prn/nn/prrnn.hpp"
#include "prn/nn/train.hpp"
#include "prn/pipeline.hpp"

namespace prn {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename N>
std::optional<N> parse_number(const std::string& s) {
  N v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  return std::nullopt;
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    c.base_dir_ = base_dir;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (c.values_.count(key)) throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
      c.set(key, value);
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.parent_path());
  }

  // Sets one key after checking it is known and well-formed.
  void set(const std::string& key, const std::string& value) {
    const auto& specs = key_specs();
    auto it = specs.find(key);
    if (it == specs.end()) throw ConfigError("unknown key '" + key + "'");
    if (!it->second(value)) throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  long integer(const std::string& key, long fallback) const {
    return has(key) ? *detail::parse_number<long>(str(key)) : fallback;
  }
  std::size_t count(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(integer(key, static_cast<long>(fallback)));
  }
  double real(const std::string& key, double fallback) const {
    return has(key) ? *detail::parse_number<double>(str(key)) : fallback;
  }
  bool flag(const std::string& key, bool fallback) const {
    return has(key) ? *detail::parse_bool(str(key)) : fallback;
  }
  std::vector<std::string> list(const std::string& key) const { return detail::split_list(str(key)); }

  std::filesystem::path path(const std::string& key) const { return resolve(str(key)); }
  std::vector<std::filesystem::path> paths(const std::string& key) const {
    std::vector<std::filesystem::path> out;
    for (const auto& p : list(key)) out.push_back(resolve(p));
    return out;
  }
  // Relative paths are taken relative to the configuration file.
  std::filesystem::path resolve(const std::filesystem::path& p) const {
    if (p.empty() || p.is_absolute() || base_dir_.empty()) return p;
    return base_dir_ / p;
  }

  std::vector<int> qps() const {
    std::vector<int> out;
    for (const auto& s : list("qps")) out.push_back(*detail::parse_number<int>(s));
    if (out.empty()) out.push_back(37);
    return out;
  }

  CodingConfig coding() const {
    CodingConfig c;
    c.mode = parse_mode(str("mode", "LDP"));
    c.gop = static_cast<int>(integer("gop", 4));
    c.rdo = flag("rdo", true);
    return c;
  }

  SplitThresholds thresholds() const {
    SplitThresholds t = kDefaultSplitThresholds;
    const auto items = list("thresholds");
    for (std::size_t i = 0; i < items.size(); ++i) t[i] = *detail::parse_number<double>(items[i]);
    return t;
  }

  PrbWidths widths() const {
    const PrbWidths d;
    return PrbWidths{count("features", d.features), count("memory", d.memory), count("growth", d.growth),
                     count("layers", d.layers)};
  }

  PrcnnConfig prcnn() const {
    PrcnnConfig c;
    c.widths = widths();
    c.blocks = count("blocks", c.blocks);
    const auto items = list("fusion");
    for (std::size_t i = 0; i < items.size(); ++i) c.fusion_after[i] = *detail::parse_number<std::size_t>(items[i]);
    c.input_skip = flag("input_skip", false);
    return c;
  }

  PrrnnConfig prrnn() const {
    PrrnnConfig c;
    c.widths = widths();
    c.blocks_per_state = count("rnn_blocks", 3);
    c.unfold = count("unfold", 2);
    c.input_skip = flag("input_skip", false);
    c.flow = FlowParams{static_cast<int>(integer("flow_levels", 3)), static_cast<int>(integer("flow_block", 8)),
                        static_cast<int>(integer("flow_radius", 4))};
    return c;
  }

  TrainSchedule schedule(std::uint64_t seed) const {
    TrainSchedule s;
    s.steps = count("steps", 500);
    s.batch = count("batch", 4);
    s.patch = count("patch", 64);
    s.lr = real("lr", 1e-4);
    s.flips = flag("flips", true);
    s.seed = seed;
    return s;
  }

  // Canonical text: sorted key=value lines. Used for the run-directory hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  using Check = std::function<bool(const std::string&)>;

  static const std::map<std::string, Check>& key_specs() {
    static const std::map<std::string, Check> specs = [] {
      auto int_min = [](long lo) {
        return Check([lo](const std::string& s) {
          auto v = detail::parse_number<long>(s);
          return v && *v >= lo;
        });
      };
      auto int_range = [](long lo, long hi) {
        return Check([lo, hi](const std::string& s) {
          auto v = detail::parse_number<long>(s);
          return v && *v >= lo && *v <= hi;
        });
      };
      auto positive_real = Check([](const std::string& s) {
        auto v = detail::parse_number<double>(s);
        return v && *v > 0 && std::isfinite(*v);
      });
      auto boolean = Check([](const std::string& s) { return detail::parse_bool(s).has_value(); });
      auto text = Check([](const std::string& s) { return !s.empty(); });
      auto one_of = [](std::vector<std::string> allowed) {
        return Check([allowed](const std::string& s) { return std::find(allowed.begin(), allowed.end(), s) != allowed.end(); });
      };
      auto list_of = [](Check item, std::size_t min_n, std::size_t max_n) {
        return Check([item, min_n, max_n](const std::string& s) {
          const auto items = detail::split_list(s);
          if (items.size() < min_n || items.size() > max_n) return false;
          return std::all_of(items.begin(), items.end(), item);
        });
      };
      auto non_negative_real = Check([](const std::string& s) {
        auto v = detail::parse_number<double>(s);
        return v && *v >= 0 && std::isfinite(*v);
      });
      constexpr std::size_t many = 1u << 20;
      return std::map<std::string, Check>{
          {"mode", one_of({"AI", "LDB", "LDP", "RA"})},
          {"qps", list_of(int_range(0, 51), 1, 52)},
          {"gop", int_min(1)},
          {"rdo", boolean},
          {"seed", int_min(0)},
          {"source", one_of({"synthetic", "raw", "pgm"})},
          {"input", list_of(text, 1, many)},
          {"width", int_min(8)},
          {"height", int_min(8)},
          {"frames", int_min(1)},
          {"scenes", int_min(1)},
          {"chroma420", boolean},
          {"thresholds", list_of(non_negative_real, 3, 3)},
          {"model", one_of({"prcnn", "prrnn"})},
          {"features", int_min(1)},
          {"memory", int_min(1)},
          {"growth", int_min(1)},
          {"layers", int_min(1)},
          {"blocks", int_min(1)},
          {"fusion", list_of(int_min(1), 4, 4)},
          {"rnn_blocks", int_min(1)},
          {"unfold", int_min(1)},
          {"input_skip", boolean},
          {"flow_levels", int_range(1, 6)},
          {"flow_block", int_min(1)},
          {"flow_radius", int_min(0)},
          {"steps", int_min(0)},
          {"batch", int_min(1)},
          {"patch", int_min(8)},
          {"patches", int_min(0)},
          {"lr", positive_real},
          {"flips", boolean},
          {"finetune_from", text},
          {"train_manifests", list_of(text, 1, many)},
          {"manifests", list_of(text, 1, many)},
          {"checkpoints", list_of(text, 1, many)},
          {"anchor_curves", list_of(text, 1, many)},
          {"test_curves", list_of(text, 1, many)},
          {"names", list_of(text, 1, many)},
          {"classes", list_of(text, 1, many)},
          {"frame", text},
          {"partition", text},
          {"ops", list_of(text, 1, many)},
          {"tolerance", positive_real},
      };
    }();
    return specs;
  }

  // Cross-key checks against the module invariants.
  void validate() const {
    try {
      prcnn().validate();
      prrnn().validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    if (has("names") && has("anchor_curves") && list("names").size() != list("anchor_curves").size()) {
      throw ConfigError("'names' must list one name per anchor curve");
    }
    if (has("anchor_curves") != has("test_curves") ||
        (has("anchor_curves") && list("anchor_curves").size() != list("test_curves").size())) {
      throw ConfigError("'anchor_curves' and 'test_curves' must list the same number of files");
    }
  }

  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

}  // namespace prn
