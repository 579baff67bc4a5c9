#include "dbpl/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace dbpl {

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        const auto a = cur.find_first_not_of(" \t");
        const auto b = cur.find_last_not_of(" \t");
        out.push_back(a == std::string::npos ? std::string() : cur.substr(a, b - a + 1));
    }
    return out;
}

const char* axis_key(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Mpr: return "mpr";
        case SweepAxis::Demand: return "Q_veh";
        case SweepAxis::BusInterval: return "bus_interval_mean";
        case SweepAxis::StopPosition: return "x_s";
        case SweepAxis::RightTurnRatio: return "right_turn_ratio";
        case SweepAxis::None: break;
    }
    return "";
}

fs::path cell_dir(const fs::path& out, SweepAxis axis, const std::string& value, std::uint64_t seed,
                  Strategy strategy) {
    const std::string head = axis == SweepAxis::None ? std::string("base") : std::string(axis_name(axis)) + "_" + value;
    return out / head / ("seed_" + std::to_string(seed)) / (strategy == Strategy::EBL ? "ebl" : "dbpl");
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double reduction_pct(double ebl, double dbpl) { return ebl > 0 ? (ebl - dbpl) / ebl * 100.0 : 0.0; }

}  // namespace

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

RunArtifacts run_scenario(const ScenarioConfig& cfg, const fs::path& dir, bool trajectory) {
    return run_scenario(cfg, generate_arrivals(cfg), dir, trajectory);
}

RunArtifacts run_scenario(const ScenarioConfig& cfg, const std::vector<Arrival>& arrivals, const fs::path& dir,
                          bool trajectory) {
    validate(cfg);
    ensure_dir(dir);
    RunArtifacts art;
    art.dir = dir;
    art.metrics = dir / "metrics.csv";
    art.events = dir / "events.csv";
    art.manifest = dir / "manifest.json";

    Simulator sim(cfg, arrivals);
    std::ofstream traj;
    if (trajectory) {
        art.trajectory = dir / "trajectory.csv";
        traj = open_out(*art.trajectory);
        write_trajectory_header(traj);
        sim.set_trajectory_sink(&traj);
    }
    sim.run();
    if (trajectory) close_out(traj, *art.trajectory);

    auto metrics = open_out(art.metrics);
    sim.write_metrics(metrics);
    close_out(metrics, art.metrics);
    auto events = open_out(art.events);
    sim.write_events(events);
    close_out(events, art.events);
    art.aggregates = sim.aggregates();

    nlohmann::ordered_json m;
    m["format"] = "dbpl-run/1";
    nlohmann::ordered_json config;
    for (const auto& line : split(serialize_scenario(cfg), '\n')) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    m["config"] = config;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    std::vector<fs::path> produced;
    if (art.trajectory) produced.push_back(*art.trajectory);
    produced.push_back(art.metrics);
    produced.push_back(art.events);
    for (const auto& p : produced) {
        nlohmann::ordered_json f;
        f["file"] = p.filename().string();
        f["bytes"] = fs::file_size(p);
        f["sha256"] = sha256_file(p);
        files.push_back(f);
    }
    m["artifacts"] = files;
    auto manifest = open_out(art.manifest);
    manifest << m.dump(2) << '\n';
    close_out(manifest, art.manifest);
    return art;
}

SweepAxis parse_axis(const std::string& name) {
    if (name == "mpr") return SweepAxis::Mpr;
    if (name == "Q_veh" || name == "q_veh") return SweepAxis::Demand;
    if (name == "bus_interval" || name == "bus_interval_mean") return SweepAxis::BusInterval;
    if (name == "x_s") return SweepAxis::StopPosition;
    if (name == "right_turn_ratio") return SweepAxis::RightTurnRatio;
    throw ConfigError("unknown sweep axis '" + name + "'", "sweep", 0);
}

const char* axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Mpr: return "mpr";
        case SweepAxis::Demand: return "Q_veh";
        case SweepAxis::BusInterval: return "bus_interval";
        case SweepAxis::StopPosition: return "x_s";
        case SweepAxis::RightTurnRatio: return "right_turn_ratio";
        case SweepAxis::None: break;
    }
    return "none";
}

void parse_sweep(SweepSpec& spec, const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("sweep must look like axis=v1,v2,...", "sweep", 0);
    spec.axis = parse_axis(text.substr(0, eq));
    spec.values.clear();
    for (const auto& v : split(text.substr(eq + 1), ',')) {
        if (v.empty()) throw ConfigError("empty value in sweep", "sweep", 0);
        spec.values.push_back(v);
    }
    if (spec.values.empty()) throw ConfigError("sweep needs at least one value", "sweep", 0);
    for (const auto& v : spec.values) (void)cell_config(spec, v, spec.base.seed, Strategy::EBL);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& s : split(text, ',')) {
        try {
            std::size_t used = 0;
            if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
            out.push_back(std::stoull(s, &used));
            if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::logic_error&) {
            throw ConfigError("cannot parse seed '" + s + "'", "seeds", 0);
        }
    }
    if (out.empty()) throw ConfigError("seeds must not be empty", "seeds", 0);
    return out;
}

ScenarioConfig cell_config(const SweepSpec& spec, const std::string& value, std::uint64_t seed, Strategy strategy) {
    ScenarioConfig cfg = spec.base;
    if (spec.axis != SweepAxis::None) set_scenario_value(cfg, axis_key(spec.axis), value);
    cfg.seed = seed;
    cfg.strategy = strategy;
    validate(cfg);
    return cfg;
}

double seed_mean(const ComparisonReport& report, const std::string& value, Strategy strategy,
                 GroupStat Aggregates::*group) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : report.rows) {
        if (r.value != value || r.strategy != strategy) continue;
        sum += (r.aggregates.*group).mean;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

ComparisonReport summarize(SweepAxis axis, std::vector<RunRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) {
        if (a.seed != b.seed) return a.seed < b.seed;
        return a.strategy == Strategy::EBL && b.strategy == Strategy::DBPL;
    });
    ComparisonReport report;
    report.axis = axis;
    std::vector<std::string> order;
    for (const auto& r : rows)
        if (std::find(order.begin(), order.end(), r.value) == order.end()) order.push_back(r.value);
    for (const auto& value : order)
        for (const auto& r : rows)
            if (r.value == value) report.rows.push_back(r);

    for (const auto& value : order) {
        ConfigSummary s;
        s.value = value;
        s.ebl_car.mean = seed_mean(report, value, Strategy::EBL, &Aggregates::car);
        s.dbpl_car.mean = seed_mean(report, value, Strategy::DBPL, &Aggregates::car);
        s.ebl_hdv = seed_mean(report, value, Strategy::EBL, &Aggregates::hdv);
        s.dbpl_hdv = seed_mean(report, value, Strategy::DBPL, &Aggregates::hdv);
        s.ebl_cav = seed_mean(report, value, Strategy::EBL, &Aggregates::cav);
        s.dbpl_cav = seed_mean(report, value, Strategy::DBPL, &Aggregates::cav);
        s.ebl_cab = seed_mean(report, value, Strategy::EBL, &Aggregates::cab);
        s.dbpl_cab = seed_mean(report, value, Strategy::DBPL, &Aggregates::cab);
        s.reduction = reduction_pct(s.ebl_car.mean, s.dbpl_car.mean);

        std::map<std::uint64_t, const RunRow*> ebl, dbpl;
        for (const auto& r : report.rows) {
            if (r.value != value) continue;
            (r.strategy == Strategy::EBL ? ebl : dbpl)[r.seed] = &r;
        }
        std::vector<double> per_seed;
        bool first = true;
        for (const auto& [seed, e] : ebl) {
            const auto it = dbpl.find(seed);
            if (it == dbpl.end()) continue;
            per_seed.push_back(reduction_pct(e->aggregates.car.mean, it->second->aggregates.car.mean));
            const double inc = it->second->aggregates.cab.mean - e->aggregates.cab.mean;
            s.max_cab_increase = first ? inc : std::max(s.max_cab_increase, inc);
            first = false;
            s.ebl_car.count += e->aggregates.car.count;
            s.dbpl_car.count += it->second->aggregates.car.count;
        }
        s.reduction_std = sample_std(per_seed);
        report.summaries.push_back(s);
    }
    return report;
}

ComparisonReport compare(const SweepSpec& spec, const CompareOptions& options) {
    std::vector<std::string> values = spec.values;
    if (spec.axis == SweepAxis::None) values = {""};
    if (values.empty() || spec.seeds.empty()) throw ConfigError("sweep needs values and seeds", "sweep", 0);
    ensure_dir(options.out);

    struct Cell {
        std::string value;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& v : values)
        for (auto seed : spec.seeds) cells.push_back({v, seed});

    std::vector<RunRow> rows(cells.size() * 2);
    std::vector<std::string> failures(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const Cell& c = cells[i];
            Strategy current = Strategy::EBL;
            try {
                const ScenarioConfig base = cell_config(spec, c.value, c.seed, Strategy::EBL);
                const std::vector<Arrival> arrivals = generate_arrivals(base);
                for (int k = 0; k < 2; ++k) {
                    current = k == 0 ? Strategy::EBL : Strategy::DBPL;
                    ScenarioConfig cfg = base;
                    cfg.strategy = current;
                    const fs::path dir = cell_dir(options.out, spec.axis, c.value, c.seed, current);
                    const RunArtifacts art = run_scenario(cfg, arrivals, dir, options.trajectories);
                    rows[2 * i + k] = {c.value, c.seed, current, art.aggregates, dir};
                }
            } catch (const std::exception& e) {
                std::string where = spec.axis == SweepAxis::None ? std::string("base")
                                                                 : std::string(axis_name(spec.axis)) + "=" + c.value;
                failures[i] = "run failed (" + where + ", seed=" + std::to_string(c.seed) +
                              ", strategy=" + std::string(to_string(current)) + "): " + e.what();
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(cells.size())));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& f : failures)
        if (!f.empty()) throw std::runtime_error(f);

    ComparisonReport report = summarize(spec.axis, std::move(rows));
    write_report(report, options.out);
    return report;
}

void write_report(const ComparisonReport& report, const fs::path& out) {
    ensure_dir(out);
    const std::string axis = axis_name(report.axis);

    const fs::path report_path = out / "report.csv";
    auto r = open_out(report_path);
    r << "axis,value,seed,strategy,count_car,mean_car,mean_hdv,mean_cav,mean_cab,mean_through_car,"
         "mean_right_turn_car,emergency_clamps,red_crossings,overlaps,purity_violations,dir\n";
    for (const auto& row : report.rows) {
        const Aggregates& a = row.aggregates;
        std::error_code ec;
        fs::path rel = fs::relative(row.dir, out, ec);
        if (ec) rel = row.dir;
        r << axis << ',' << row.value << ',' << row.seed << ',' << to_string(row.strategy) << ',' << a.car.count
          << ',' << fixed6(a.car.mean) << ',' << fixed6(a.hdv.mean) << ',' << fixed6(a.cav.mean) << ','
          << fixed6(a.cab.mean) << ',' << fixed6(a.through_car.mean) << ',' << fixed6(a.right_turn_car.mean) << ','
          << a.counters.emergency << ',' << a.counters.red_crossings << ',' << a.counters.overlaps << ','
          << a.counters.purity << ',' << rel.generic_string() << '\n';
    }
    close_out(r, report_path);

    const fs::path summary_path = out / "summary.csv";
    auto s = open_out(summary_path);
    s << "axis,value,ebl_car,dbpl_car,reduction_pct,reduction_std,ebl_hdv,dbpl_hdv,ebl_cav,dbpl_cav,ebl_cab,"
         "dbpl_cab,max_cab_increase\n";
    for (const auto& c : report.summaries)
        s << axis << ',' << c.value << ',' << fixed6(c.ebl_car.mean) << ',' << fixed6(c.dbpl_car.mean) << ','
          << fixed6(c.reduction) << ',' << fixed6(c.reduction_std) << ',' << fixed6(c.ebl_hdv) << ','
          << fixed6(c.dbpl_hdv) << ',' << fixed6(c.ebl_cav) << ',' << fixed6(c.dbpl_cav) << ','
          << fixed6(c.ebl_cab) << ',' << fixed6(c.dbpl_cab) << ',' << fixed6(c.max_cab_increase) << '\n';
    close_out(s, summary_path);

    const fs::path tt_path = out / "plot_travel_time.csv";
    auto tt = open_out(tt_path);
    tt << "value,strategy,mean_car\n";
    for (const auto& c : report.summaries) {
        tt << c.value << ",EBL," << fixed6(c.ebl_car.mean) << '\n';
        tt << c.value << ",DBPL," << fixed6(c.dbpl_car.mean) << '\n';
    }
    close_out(tt, tt_path);

    const fs::path red_path = out / "plot_reduction.csv";
    auto red = open_out(red_path);
    red << "value,reduction_pct,reduction_std\n";
    for (const auto& c : report.summaries)
        red << c.value << ',' << fixed6(c.reduction) << ',' << fixed6(c.reduction_std) << '\n';
    close_out(red, red_path);

    const fs::path bars_path = out / "plot_class_bars.csv";
    auto bars = open_out(bars_path);
    bars << "value,strategy,class,mean_travel_time\n";
    for (const auto& c : report.summaries) {
        bars << c.value << ",EBL,CAV," << fixed6(c.ebl_cav) << '\n'
             << c.value << ",EBL,HDV," << fixed6(c.ebl_hdv) << '\n'
             << c.value << ",EBL,CAB," << fixed6(c.ebl_cab) << '\n'
             << c.value << ",DBPL,CAV," << fixed6(c.dbpl_cav) << '\n'
             << c.value << ",DBPL,HDV," << fixed6(c.dbpl_hdv) << '\n'
             << c.value << ",DBPL,CAB," << fixed6(c.dbpl_cab) << '\n';
    }
    close_out(bars, bars_path);
}

}  // namespace dbpl
