#pragma once

// Config documents, run manifests and byte-stable CSV / JSON emission.
// Needs nlohmann/json on the include path.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"
#include "quietmarket/errors.hpp"
#include "quietmarket/scenario.hpp"

namespace quietmarket::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

inline std::string format_currency(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s$%.2f", v < 0 ? "-" : "", std::abs(v));
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// ScenarioConfig <-> JSON

inline Json to_json(const ChannelConfig& ch) {
  return Json{{"label", ch.label},
              {"baseline_bandwidth", ch.baseline_bandwidth},
              {"noise_constant", ch.noise_constant},
              {"rfi_linear", ch.rfi_linear},
              {"rfi_quadratic", ch.rfi_quadratic},
              {"residual_rfi_power", ch.residual_rfi_power}};
}

inline Json to_json(const InstrumentConfig& ins) {
  Json channels = Json::array();
  for (const auto& ch : ins.channels) channels.push_back(to_json(ch));
  return Json{{"integration_window", ins.integration_window},
              {"channels", channels},
              {"sensitivity", ins.sensitivity},
              {"variance_targets", ins.variance_targets},
              {"product_weights", ins.product_weights},
              {"value_scale", ins.value_scale}};
}

inline Json to_json(const ScenarioConfig& cfg) {
  Json trap = nullptr;
  if (cfg.trap)
    trap = Json{{"channel", cfg.trap->channel},         {"slot_first", cfg.trap->slot_first},
                {"slot_last", cfg.trap->slot_last},     {"peak_cost", cfg.trap->peak_cost},
                {"floor_cost", cfg.trap->floor_cost},   {"falloff_sigma", cfg.trap->falloff_sigma}};
  return Json{{"time_slots", cfg.time_slots},
              {"bins_per_channel", cfg.bins_per_channel},
              {"instrument", to_json(cfg.instrument)},
              {"tile", {{"freq_width", cfg.tile.freq_width},
                        {"duration", cfg.tile.duration},
                        {"duty_cycle", cfg.tile.duty_cycle}}},
              {"cost_low", cfg.cost_low},
              {"cost_high", cfg.cost_high},
              {"trap", trap},
              {"seller_count", cfg.seller_count},
              {"seed", cfg.seed},
              {"smoothing_sigma", cfg.smoothing_sigma}};
}

namespace detail {

/// Reads the keys of `obj` through `visit(key, value)`; unknown keys are
/// rejected so typos do not silently fall back to defaults.
template <class Visit>
void read_object(const Json& obj, std::string_view where, std::initializer_list<std::string_view> known,
                 Visit visit) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    visit(std::string_view(key), value);
  }
}

template <class T>
T get_as(const Json& v, std::string_view key) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("key '" + std::string(key) + "' has the wrong type");
  }
}

inline void apply_channel(ChannelConfig& ch, const Json& j) {
  read_object(j, "channel",
              {"label", "baseline_bandwidth", "noise_constant", "rfi_linear", "rfi_quadratic", "residual_rfi_power"},
              [&](std::string_view k, const Json& v) {
                if (k == "label") ch.label = get_as<std::string>(v, k);
                else if (k == "baseline_bandwidth") ch.baseline_bandwidth = get_as<double>(v, k);
                else if (k == "noise_constant") ch.noise_constant = get_as<double>(v, k);
                else if (k == "rfi_linear") ch.rfi_linear = get_as<double>(v, k);
                else if (k == "rfi_quadratic") ch.rfi_quadratic = get_as<double>(v, k);
                else ch.residual_rfi_power = get_as<double>(v, k);
              });
}

inline void apply_instrument(InstrumentConfig& ins, const Json& j) {
  read_object(j, "instrument",
              {"integration_window", "channels", "sensitivity", "variance_targets", "product_weights", "value_scale"},
              [&](std::string_view k, const Json& v) {
                if (k == "integration_window") ins.integration_window = get_as<double>(v, k);
                else if (k == "value_scale") ins.value_scale = get_as<double>(v, k);
                else if (k == "channels") {
                  if (!v.is_array()) throw ConfigError("'channels' must be an array");
                  ins.channels.clear();
                  for (const auto& c : v) {
                    ChannelConfig ch;
                    apply_channel(ch, c);
                    ins.channels.push_back(ch);
                  }
                } else if (k == "sensitivity") {
                  ins.sensitivity = get_as<std::vector<std::vector<double>>>(v, k);
                } else if (k == "variance_targets") {
                  ins.variance_targets = get_as<std::vector<double>>(v, k);
                } else {
                  ins.product_weights = get_as<std::vector<double>>(v, k);
                }
              });
}

}  // namespace detail

/// Overlays a config document onto `cfg`. The optional "preset" key
/// ("amsr2") selects the starting point before the other keys apply.
inline ScenarioConfig apply_config(ScenarioConfig cfg, const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  if (auto it = doc.find("preset"); it != doc.end()) {
    if (*it != "amsr2") throw ConfigError("unknown preset; supported: amsr2");
    cfg = amsr2_preset(cfg.seed);
  }
  detail::read_object(
      doc, "config",
      {"preset", "time_slots", "bins_per_channel", "instrument", "tile", "cost_low", "cost_high", "trap",
       "seller_count", "seed", "smoothing_sigma"},
      [&](std::string_view k, const Json& v) {
        using detail::get_as;
        if (k == "preset") return;
        if (k == "time_slots") cfg.time_slots = get_as<std::size_t>(v, k);
        else if (k == "bins_per_channel") cfg.bins_per_channel = get_as<std::size_t>(v, k);
        else if (k == "instrument") detail::apply_instrument(cfg.instrument, v);
        else if (k == "tile")
          detail::read_object(v, "tile", {"freq_width", "duration", "duty_cycle"},
                              [&](std::string_view tk, const Json& tv) {
                                if (tk == "freq_width") cfg.tile.freq_width = get_as<double>(tv, tk);
                                else if (tk == "duration") cfg.tile.duration = get_as<double>(tv, tk);
                                else cfg.tile.duty_cycle = get_as<double>(tv, tk);
                              });
        else if (k == "cost_low") cfg.cost_low = get_as<double>(v, k);
        else if (k == "cost_high") cfg.cost_high = get_as<double>(v, k);
        else if (k == "trap") {
          if (v.is_null()) {
            cfg.trap.reset();
            return;
          }
          TrapSpec t = cfg.trap.value_or(TrapSpec{});
          detail::read_object(v, "trap",
                              {"channel", "slot_first", "slot_last", "peak_cost", "floor_cost", "falloff_sigma"},
                              [&](std::string_view tk, const Json& tv) {
                                if (tk == "channel") t.channel = get_as<std::size_t>(tv, tk);
                                else if (tk == "slot_first") t.slot_first = get_as<std::size_t>(tv, tk);
                                else if (tk == "slot_last") t.slot_last = get_as<std::size_t>(tv, tk);
                                else if (tk == "peak_cost") t.peak_cost = get_as<double>(tv, tk);
                                else if (tk == "floor_cost") t.floor_cost = get_as<double>(tv, tk);
                                else t.falloff_sigma = get_as<double>(tv, tk);
                              });
          cfg.trap = t;
        } else if (k == "seller_count") cfg.seller_count = get_as<std::size_t>(v, k);
        else if (k == "seed") cfg.seed = get_as<std::uint64_t>(v, k);
        else cfg.smoothing_sigma = get_as<double>(v, k);
      });
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline ScenarioConfig parse_config(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return apply_config(ScenarioConfig{}, doc);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ScenarioConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

/// Digest of the canonical serialization of the effective config.
inline std::string config_digest(const ScenarioConfig& cfg) { return hex64(fnv1a64(to_json(cfg).dump())); }

// ---------------------------------------------------------------------------
// Manifest and tables

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = kReferenceSeed;
  std::string output_dir;
  std::string format;
  std::string tool_version = kToolVersion;
  std::string config_digest;
};

inline Json to_json(const RunManifest& m) {
  return Json{{"subcommand", m.subcommand},   {"config_path", m.config_path}, {"seed", m.seed},
              {"output_dir", m.output_dir},   {"format", m.format},           {"tool_version", m.tool_version},
              {"config_digest", m.config_digest}};
}

using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline std::string csv_cell(const Cell& c) {
  if (std::holds_alternative<double>(c)) return format_double(std::get<double>(c));
  if (std::holds_alternative<std::int64_t>(c)) return std::to_string(std::get<std::int64_t>(c));
  if (std::holds_alternative<std::string>(c)) {
    const auto& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  return "";
}

inline Json json_cell(const Cell& c) {
  if (std::holds_alternative<double>(c)) {
    const double v = std::get<double>(c);
    return std::isfinite(v) ? Json(v) : Json(nullptr);
  }
  if (std::holds_alternative<std::int64_t>(c)) return std::get<std::int64_t>(c);
  if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
  return nullptr;
}

inline std::string to_csv(const Table& t, const RunManifest& m) {
  std::string out;
  const Json header = to_json(m);
  for (const auto& [k, v] : header.items())
    out += "# " + k + ": " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_cell(row[i]);
    out += "\n";
  }
  return out;
}

inline Json to_json(const Table& t) {
  Json rows = Json::array();
  for (const auto& row : t.rows) {
    Json r = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[t.columns[i]] = json_cell(row[i]);
    rows.push_back(r);
  }
  return rows;
}

/// `doc` with the manifest object placed first.
inline std::string to_json_text(const Json& doc, const RunManifest& m) {
  Json out = Json{{"manifest", to_json(m)}};
  for (const auto& [k, v] : doc.items()) out[k] = v;
  return out.dump(2) + "\n";
}

/// A document as a two-column key,value CSV (JSON-pointer keys).
inline std::string document_to_csv(const Json& doc, const RunManifest& m) {
  Table t{{"key", "value"}, {}};
  const Json flat = doc.flatten();
  for (const auto& [k, v] : flat.items())
    t.rows.push_back({k, v.is_string() ? v.get<std::string>() : v.dump()});
  return to_csv(t, m);
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write output file '" + path + "'");
  out << content;
  if (!out) throw InvalidArgument("failed writing output file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Experiment documents

inline Json to_json(const DualSolution& d) {
  return Json{{"multipliers", d.multipliers},
              {"bandwidths", d.bandwidths},
              {"shadow_prices", d.shadow_prices},
              {"constraint_slacks", d.constraint_slacks},
              {"max_violation", d.max_violation},
              {"complementary_slackness", d.complementary_slackness},
              {"iterations", d.iterations},
              {"converged", d.converged}};
}

inline Json payoff_json(const Payoff& p) { return p.feasible() ? Json(p.amount()) : Json(nullptr); }

inline Json to_json(const StrategyResult& r) {
  return Json{{"tiles", r.selected.size()},
              {"value", payoff_json(r.buyer_value)},
              {"cost", r.total_cost},
              {"welfare", payoff_json(r.welfare)},
              {"trap_tiles", r.trap_tiles},
              {"tiles_per_channel", r.per_channel},
              {"final_variances", r.final_variances},
              {"selected", r.selected}};
}

inline Json to_json(const WelfareComparison& c) {
  return Json{{"fixed", to_json(c.fixed)},
              {"flexible", to_json(c.flexible)},
              {"deltas_pct", {{"value", c.value_delta_pct}, {"cost", c.cost_delta_pct}, {"welfare", c.welfare_delta_pct}}}};
}

inline Json to_json(const AuctionOutcome& o, const ReportedMarket& market) {
  Json sellers = Json::array();
  for (SellerId id : market.seller_ids) {
    std::vector<TileId> won;
    const std::size_t pos = market.position_of(id);
    for (TileId t : o.allocation.tiles())
      if (market.owner[t] == pos) won.push_back(t);
    sellers.push_back(Json{{"id", id},
                           {"won_tiles", won},
                           {"declared_cost", o.declared_costs.at(id)},
                           {"payment", o.payments.at(id)},
                           {"counterfactual_welfare", o.counterfactual_welfares.at(id)},
                           {"utility", o.seller_utilities.at(id)}});
  }
  return Json{{"mode", to_string(o.mode)},
              {"allocation", o.allocation.tiles()},
              {"welfare", {{"buyer_value", payoff_json(o.welfare.buyer_value)},
                           {"total_cost", o.welfare.total_cost},
                           {"welfare", payoff_json(o.welfare.welfare)}}},
              {"sellers", sellers},
              {"reserve_capped", o.reserve_capped}};
}

inline Table greedy_trace_table(const GreedyOutcome& g, std::size_t product_count) {
  Table t{{"step", "tile", "channel", "gain", "price", "ratio"}, {}};
  if (product_count == 1) t.columns.push_back("var_after");
  else
    for (std::size_t k = 0; k < product_count; ++k) t.columns.push_back("var_after_" + std::to_string(k));
  for (const auto& s : g.trace) {
    std::vector<Cell> row{static_cast<std::int64_t>(s.step), static_cast<std::int64_t>(s.tile),
                          static_cast<std::int64_t>(s.channel), s.gain, s.price, s.ratio};
    for (double v : s.variances_after) row.emplace_back(v);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table clearing_table(const ClearingCurve& c) {
  Table t{{"q", "bandwidth", "demand", "supply"}, {}};
  for (const auto& r : c.rows) t.rows.push_back({static_cast<std::int64_t>(r.q), r.bandwidth, r.demand, r.supply});
  return t;
}

inline Table bench_table(const std::vector<BenchRow>& rows, bool timing) {
  Table t{{"size", "instance", "exact_cost", "greedy_cost", "gap_pct", "exact_us", "greedy_us", "bound_factor"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({static_cast<std::int64_t>(r.size), static_cast<std::int64_t>(r.instance), r.exact_cost,
                      r.greedy_cost, r.gap_pct, timing ? Cell(r.exact_us) : Cell(), timing ? Cell(r.greedy_us) : Cell(),
                      r.bound_factor});
  return t;
}

}  // namespace quietmarket::io
