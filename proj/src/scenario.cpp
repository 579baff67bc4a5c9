#include "dbpl/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace dbpl {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

struct BadValue {};

double to_double(std::string_view s) {
    double out = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out)) throw BadValue{};
    return out;
}

std::uint64_t to_u64(std::string_view s) {
    std::uint64_t out = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || ptr != end) throw BadValue{};
    return out;
}

int to_int(std::string_view s) {
    int out = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || ptr != end) throw BadValue{};
    return out;
}

bool to_bool(std::string_view s) {
    if (s == "yes" || s == "true" || s == "1") return true;
    if (s == "no" || s == "false" || s == "0") return false;
    throw BadValue{};
}

void rebuild_corridor(ScenarioConfig& cfg, double control_len, double no_change_len, double x_s,
                      bool pocket, double pocket_len, int capacity) {
    cfg.corridor = Corridor::make(control_len, no_change_len, x_s, pocket, pocket_len, capacity);
}

struct Field {
    const char* key;
    std::function<void(ScenarioConfig&, std::string_view)> set;
    std::function<std::string(const ScenarioConfig&)> get;
};

#define DBPL_DOUBLE(name, member)                                                         \
    Field{name, [](ScenarioConfig& c, std::string_view v) { c.member = to_double(v); },   \
          [](const ScenarioConfig& c) { return fmt_double(c.member); }}

#define DBPL_CORRIDOR(name, expr_set, expr_get)                                           \
    Field{name,                                                                           \
          [](ScenarioConfig& c, std::string_view v) {                                     \
              auto k = c.corridor;                                                        \
              double control_len = k.control_len, no_change_len = k.no_change_len;        \
              double x_s = k.x_s, pocket_len = k.pocket_len;                              \
              bool pocket = k.has_pocket();                                               \
              int capacity = k.stop_capacity;                                             \
              expr_set;                                                                   \
              rebuild_corridor(c, control_len, no_change_len, x_s, pocket, pocket_len,    \
                               capacity);                                                 \
          },                                                                              \
          [](const ScenarioConfig& c) { return expr_get; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        DBPL_CORRIDOR("control_len", control_len = to_double(v), fmt_double(c.corridor.control_len)),
        DBPL_CORRIDOR("no_change_len", no_change_len = to_double(v), fmt_double(c.corridor.no_change_len)),
        DBPL_CORRIDOR("x_s", x_s = to_double(v), fmt_double(c.corridor.x_s)),
        DBPL_CORRIDOR("pocket", pocket = to_bool(v), std::string(c.corridor.has_pocket() ? "yes" : "no")),
        DBPL_CORRIDOR("pocket_len", pocket_len = to_double(v), fmt_double(c.corridor.pocket_len)),
        DBPL_CORRIDOR("stop_capacity", capacity = to_int(v), std::to_string(c.corridor.stop_capacity)),
        DBPL_DOUBLE("t_c", signal.t_c),
        DBPL_DOUBLE("t_r", signal.t_r),
        DBPL_DOUBLE("Q_veh", q_veh),
        DBPL_DOUBLE("bus_interval_mean", bus_interval_mean),
        DBPL_DOUBLE("bus_interval_std", bus_interval_std),
        DBPL_DOUBLE("dwell_mean", dwell_mean),
        DBPL_DOUBLE("dwell_std", dwell_std),
        DBPL_DOUBLE("right_turn_ratio", right_turn_ratio),
        DBPL_DOUBLE("mpr", mpr),
        DBPL_DOUBLE("omega_p", omega_p),
        Field{"seed", [](ScenarioConfig& c, std::string_view v) { c.seed = to_u64(v); },
              [](const ScenarioConfig& c) { return std::to_string(c.seed); }},
        DBPL_DOUBLE("duration", duration),
        Field{"strategy",
              [](ScenarioConfig& c, std::string_view v) {
                  if (v == "ebl" || v == "EBL") c.strategy = Strategy::EBL;
                  else if (v == "dbpl" || v == "DBPL") c.strategy = Strategy::DBPL;
                  else throw BadValue{};
              },
              [](const ScenarioConfig& c) { return std::string(to_string(c.strategy)); }},
        DBPL_DOUBLE("dk", dk),
        DBPL_DOUBLE("horizon", horizon),
        Field{"k_lc", [](ScenarioConfig& c, std::string_view v) { c.k_lc = to_int(v); },
              [](const ScenarioConfig& c) { return std::to_string(c.k_lc); }},
        Field{"candidate_cap",
              [](ScenarioConfig& c, std::string_view v) { c.candidate_cap = static_cast<std::size_t>(to_u64(v)); },
              [](const ScenarioConfig& c) { return std::to_string(c.candidate_cap); }},
        DBPL_DOUBLE("d_rt", d_rt),
        DBPL_DOUBLE("warmup", warmup),
        DBPL_DOUBLE("hdv_noise_std", hdv_noise_std),
        DBPL_DOUBLE("car_length", vehicle.car_length),
        DBPL_DOUBLE("bus_length", vehicle.bus_length),
        DBPL_DOUBLE("v_max", vehicle.v_max),
        DBPL_DOUBLE("a_max", vehicle.a_max),
        DBPL_DOUBLE("tau_cav", vehicle.tau_cav),
        DBPL_DOUBLE("tau_hdv", vehicle.tau_hdv),
        DBPL_DOUBLE("gap_cav", vehicle.gap_cav),
        DBPL_DOUBLE("gap_hdv", vehicle.gap_hdv),
        DBPL_DOUBLE("startup_accel", vehicle.startup_accel),
        DBPL_DOUBLE("startup_react", vehicle.startup_react),
        DBPL_DOUBLE("d_safe", vehicle.d_safe),
    };
    return table;
}

#undef DBPL_DOUBLE
#undef DBPL_CORRIDOR

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (key == f.key) return &f;
    return nullptr;
}

void apply(ScenarioConfig& cfg, std::string_view key, std::string_view value, int line) {
    const Field* f = find_field(key);
    const std::string where = line > 0 ? "line " + std::to_string(line) + ": " : std::string();
    if (!f) throw ConfigError(where + "unknown key '" + std::string(key) + "'", std::string(key), line);
    try {
        f->set(cfg, value);
    } catch (const BadValue&) {
        throw ConfigError(where + "cannot parse value '" + std::string(value) + "' for " + std::string(key),
                          std::string(key), line);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("range error on ") + e.what() + ": corridor geometry invalid", e.what(), line);
    }
}

void range(bool ok, const char* key, const char* rule) {
    if (!ok) throw ConfigError(std::string("range error on ") + key + ": must be " + rule, key, 0);
}

}  // namespace

void validate(const ScenarioConfig& c) {
    range(c.mpr >= 0 && c.mpr <= 1, "mpr", "in [0,1]");
    range(c.right_turn_ratio >= 0 && c.right_turn_ratio <= 1, "right_turn_ratio", "in [0,1]");
    range(c.right_turn_ratio == 0 || c.corridor.has_pocket(), "right_turn_ratio",
          "0 unless pocket=yes");
    range(c.omega_p >= 0 && c.omega_p <= 1, "omega_p", "in [0,1]");
    range(c.q_veh >= 0, "Q_veh", ">= 0");
    range(c.bus_interval_mean > 0, "bus_interval_mean", "> 0");
    range(c.bus_interval_std >= 0, "bus_interval_std", ">= 0");
    range(c.dwell_mean >= 0, "dwell_mean", ">= 0");
    range(c.dwell_std >= 0, "dwell_std", ">= 0");
    range(c.duration >= 0, "duration", ">= 0");
    range(c.signal.t_r > 0, "t_r", "> 0");
    range(c.signal.t_c > c.signal.t_r, "t_c", "> t_r");
    range(c.dk > 0, "dk", "> 0");
    range(c.horizon >= 0, "horizon", ">= 0");
    const double steps = c.horizon / c.dk;
    range(std::abs(steps - std::round(steps)) < 1e-9, "horizon", "a multiple of dk");
    range(c.k_lc >= 0, "k_lc", ">= 0");
    range(c.candidate_cap >= 1, "candidate_cap", ">= 1");
    range(c.d_rt >= 0, "d_rt", ">= 0");
    range(c.warmup >= 0, "warmup", ">= 0");
    range(c.hdv_noise_std >= 0, "hdv_noise_std", ">= 0");
    range(c.vehicle.v_max > 0, "v_max", "> 0");
    range(c.vehicle.a_max > 0, "a_max", "> 0");
    range(c.vehicle.car_length > 0, "car_length", "> 0");
    range(c.vehicle.bus_length > 0, "bus_length", "> 0");
    range(c.vehicle.tau_cav > 0, "tau_cav", "> 0");
    range(c.vehicle.tau_hdv > 0, "tau_hdv", "> 0");
    range(c.vehicle.gap_cav >= 0, "gap_cav", ">= 0");
    range(c.vehicle.gap_hdv >= 0, "gap_hdv", ">= 0");
    range(c.vehicle.startup_accel >= 0, "startup_accel", ">= 0");
    range(c.vehicle.startup_react >= 0, "startup_react", ">= 0");
    range(c.vehicle.d_safe >= 0, "d_safe", ">= 0");
}

ScenarioConfig load_scenario(std::string_view text) {
    ScenarioConfig cfg;
    int line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value", "", line_no);
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key", "", line_no);
        apply(cfg, key, value, line_no);
    }
    validate(cfg);
    return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path, "", 0);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str());
}

std::string serialize_scenario(const ScenarioConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        out += f.key;
        out += '=';
        out += f.get(cfg);
        out += '\n';
    }
    return out;
}

void set_scenario_value(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
    apply(cfg, key, value, 0);
    validate(cfg);
}

Strategy parse_strategy(std::string_view s) {
    if (s == "ebl" || s == "EBL") return Strategy::EBL;
    if (s == "dbpl" || s == "DBPL") return Strategy::DBPL;
    throw ConfigError("unknown strategy '" + std::string(s) + "'", "strategy", 0);
}

}  // namespace dbpl
