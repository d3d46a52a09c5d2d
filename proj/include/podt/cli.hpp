#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "podt/config.hpp"
#include "podt/engine.hpp"
#include "podt/report.hpp"

namespace podt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct RunOptions {
  std::filesystem::path out_dir;
  bool plot = false;
  bool dump_miners = false;
  bool save_sidechain = false;
};

/// Output root when no --out is given: $PODT_OUT, else ./podt_out.
inline std::filesystem::path default_out_root() {
  if (const char* env = std::getenv("PODT_OUT"); env != nullptr && *env != '\0') return env;
  return "podt_out";
}

/// Shrinks users, chains, kill-chains and cycles by `factor`, keeping the
/// config valid.
inline SimConfig apply_scale(SimConfig cfg, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ConfigError("scale factor must be a positive number");
  }
  if (factor == 1.0) return cfg;
  auto scaled = [&](std::size_t v, std::size_t floor) {
    return std::max<std::size_t>(floor, static_cast<std::size_t>(std::llround(double(v) * factor)));
  };
  cfg.n_users = scaled(cfg.n_users, 2 * (cfg.k_gen + cfg.k_val));
  cfg.n_chains = scaled(cfg.n_chains, 1);
  cfg.kill_chain_count = std::min(cfg.n_chains, scaled(cfg.kill_chain_count,
                                                       cfg.kill_chain_count > 0 ? 1 : 0));
  cfg.cycles = scaled(cfg.cycles, cfg.cycles > 0 ? 1 : 0);
  cfg.calibration_cycles = scaled(cfg.calibration_cycles, 1);
  return cfg;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("write failed for " + p.string());
}

template <class Fn>
void write_with(const std::filesystem::path& p, Fn&& fn) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  fn(out);
  if (!out) throw Error("write failed for " + p.string());
}

inline std::vector<PlotSeries> run_plot_series(const RunResult& r) {
  PlotSeries mal{"malicious responses", {}}, asr{"attack success x100", {}};
  for (const CycleMetrics& m : r.series) {
    mal.y.push_back(static_cast<double>(m.malicious_responses));
    asr.y.push_back(100.0 * m.attack_success_ratio);
  }
  return {mal, asr};
}

/// Runs one scenario and writes metrics.csv, summary.json and the side
/// files into `opt.out_dir`.
inline RunResult run_scenario(const SimConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  std::filesystem::create_directories(opt.out_dir);
  Simulation sim(cfg);
  std::ofstream dump;
  if (opt.dump_miners) {
    dump.open(opt.out_dir / "miners.csv", std::ios::binary);
    if (!dump) throw Error("cannot write miners.csv");
    write_miner_dump_header(dump);
    sim.on_selection([&](std::size_t round, const MinerSets& sets) {
      write_miner_dump(dump, round, sets);
    });
  }
  RunResult r = sim.finish();
  const auto& dir = opt.out_dir;
  write_with(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, r.series); });
  write_with(dir / "malicious_by_kind.csv",
             [&](std::ostream& os) { write_malicious_by_kind_csv(os, r.series); });
  write_with(dir / "trust_trace.csv",
             [&](std::ostream& os) { write_trust_trace_csv(os, r.trace, cfg.n_chains); });
  write_with(dir / "ledger.csv", [&](std::ostream& os) { sim.ledger().write_csv(os); });
  write_file(dir / "summary.json", summary_json(r).dump(2) + "\n");
  if (sim.model().trained) write_file(dir / "dbp_model.json", to_json(sim.model()).dump(2) + "\n");
  if (opt.save_sidechain) {
    write_with(dir / "sidechain.bin", [&](std::ostream& os) { sim.side_chain().save(os); });
  }
  if (opt.plot) {
    std::vector<double> x;
    for (const CycleMetrics& m : r.series) x.push_back(static_cast<double>(m.cycle));
    write_with(dir / "metrics.svg", [&](std::ostream& os) {
      write_svg_chart(os, std::string(to_string(cfg.scheme)) + " per-cycle metrics", "cycle", x,
                      run_plot_series(r));
    });
  }
  return r;
}

// --- suites -----------------------------------------------------------------

enum class CurveKind {
  None,
  GlobalTrust,         // trust trace gt of each tracked attacker
  LocalTrustKill,      // trust trace lt on kill-chains
  CumulativeNormal,    // cumulative normal-DMB malicious responses
  CumulativeIntensive, // cumulative intensive-DMB malicious responses
  AttackSuccess,       // attack success ratio per cycle
  CumulativeMessages,  // cumulative network overload
};

struct SuiteVariant {
  std::string name;
  SimConfig cfg;
  std::vector<std::pair<std::string, std::string>> axis;
};

struct ScenarioSuite {
  std::string name;
  std::string title;
  std::vector<SuiteVariant> variants;
  std::vector<std::string> axis_names;
  CurveKind curve = CurveKind::None;
  bool overnight = false;
};

inline std::vector<std::string> suite_names() {
  return {"fig6",  "fig7",  "fig8",  "fig9",  "fig9_large", "fig10", "fig11",
          "fig12", "fig13", "fig14", "fig15", "fig16"};
}

namespace detail {

inline std::string pct_label(double f) {
  return std::to_string(static_cast<int>(std::lround(f * 100.0)));
}

inline SimConfig mixed(double total, Scheme s) {
  SimConfig c;
  c.attackers = {total / 3.0, total / 3.0, total / 3.0};
  c.scheme = s;
  return c;
}

}  // namespace detail

/// Built-in figure suites; `scale` shrinks every variant for quick runs.
inline ScenarioSuite builtin_suite(const std::string& name, double scale = 1.0) {
  ScenarioSuite s;
  s.name = name;
  auto add = [&](std::string vname, SimConfig cfg,
                 std::vector<std::pair<std::string, std::string>> axis) {
    s.variants.push_back({std::move(vname), apply_scale(cfg, scale), std::move(axis)});
  };
  auto scheme_pair = [&](Scheme a, Scheme b, AttackerMix mix) {
    s.axis_names = {"scheme"};
    for (Scheme sc : {a, b}) {
      SimConfig c;
      c.attackers = mix;
      c.scheme = sc;
      add(std::string(to_string(sc)), c, {{"scheme", std::string(to_string(sc))}});
    }
  };
  const std::vector<Scheme> compared = {Scheme::PoDT, Scheme::AllMiners, Scheme::RandomMiners};
  const std::vector<std::size_t> user_steps = {1000, 2500, 5000, 7500, 10000};

  if (name == "fig6" || name == "fig7") {
    s.title = name == "fig6" ? "Global trust of tracked attackers" : "Local trust on kill-chains";
    s.curve = name == "fig6" ? CurveKind::GlobalTrust : CurveKind::LocalTrustKill;
    s.axis_names = {"scheme"};
    add("PoDT", detail::mixed(0.3, Scheme::PoDT), {{"scheme", "PoDT"}});
  } else if (name == "fig8" || name == "fig10") {
    s.title = name == "fig8" ? "Normal DMB malicious responses (cumulative)"
                             : "Attack success ratio under normal DMB attackers";
    s.curve = name == "fig8" ? CurveKind::CumulativeNormal : CurveKind::AttackSuccess;
    scheme_pair(Scheme::Baseline, Scheme::DiscTrustOnly, {0.0, 0.3, 0.0});
  } else if (name == "fig9" || name == "fig11" || name == "fig9_large") {
    s.title = name == "fig11" ? "Attack success ratio under intensive DMB attackers"
                              : "Intensive DMB malicious responses (cumulative)";
    s.curve = name == "fig11" ? CurveKind::AttackSuccess : CurveKind::CumulativeIntensive;
    scheme_pair(Scheme::DiscTrustOnly, Scheme::PoDT, {0.0, 0.0, 0.3});
    if (name == "fig9_large") {
      s.overnight = true;
      for (SuiteVariant& v : s.variants) {
        SimConfig c = v.cfg;
        c.n_chains = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(100 * scale)));
        c.kill_chain_count = std::min(c.n_chains, static_cast<std::size_t>(
                                                      std::max(1L, std::lround(40 * scale))));
        c.cycles = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(2000 * scale)));
        c.rounds_per_cycle = 30;
        v.cfg = c;
      }
    }
  } else if (name == "fig12") {
    s.title = "Detection rate of the behaviour predictor";
    s.axis_names = {"n_users", "attacker_pct"};
    for (std::size_t n : user_steps) {
      for (double f : {0.1, 0.3, 0.5}) {
        SimConfig c;
        c.n_users = n;
        c.attackers = {0.0, 0.0, f};
        add("n" + std::to_string(n) + "_int" + detail::pct_label(f), c,
            {{"n_users", std::to_string(n)}, {"attacker_pct", detail::pct_label(f)}});
      }
    }
  } else if (name == "fig13") {
    s.title = "Run-level accuracy";
    s.axis_names = {"attacker_pct", "scheme"};
    for (int pct = 10; pct <= 70; pct += 10) {
      for (Scheme sc : compared) {
        add(std::string(to_string(sc)) + "_p" + std::to_string(pct),
            detail::mixed(pct / 100.0, sc),
            {{"attacker_pct", std::to_string(pct)}, {"scheme", std::string(to_string(sc))}});
      }
    }
  } else if (name == "fig14") {
    s.title = "Network overload (cumulative messages)";
    s.curve = CurveKind::CumulativeMessages;
    s.axis_names = {"scheme"};
    for (Scheme sc : compared)
      add(std::string(to_string(sc)), detail::mixed(0.1, sc), {{"scheme", std::string(to_string(sc))}});
  } else if (name == "fig15" || name == "fig16") {
    s.title = name == "fig15" ? "Per-cycle wall time" : "Storage volume";
    s.axis_names = {"n_users", "scheme"};
    for (std::size_t n : user_steps) {
      for (Scheme sc : compared) {
        SimConfig c = detail::mixed(0.1, sc);
        c.n_users = n;
        c.cycles = 30;
        add(std::string(to_string(sc)) + "_n" + std::to_string(n), c,
            {{"n_users", std::to_string(n)}, {"scheme", std::string(to_string(sc))}});
      }
    }
  } else {
    std::string known;
    for (const std::string& k : suite_names()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown suite '" + name + "' (known: " + known + ")");
  }
  return s;
}

struct SuiteRun {
  const SuiteVariant* variant = nullptr;
  std::uint64_t seed = 0;
  RunResult result;
};

namespace detail {

inline std::string opt_text(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline double mean_asr_tail(const RunResult& r, std::size_t tail = 50) {
  if (r.series.empty()) return 0.0;
  const std::size_t first = r.series.size() > tail ? r.series.size() - tail : 0;
  double s = 0.0;
  for (std::size_t i = first; i < r.series.size(); ++i) s += r.series[i].attack_success_ratio;
  return s / static_cast<double>(r.series.size() - first);
}

inline std::array<std::size_t, kBehaviorKinds> malicious_totals(const RunResult& r) {
  std::array<std::size_t, kBehaviorKinds> t{};
  for (const CycleMetrics& m : r.series)
    for (std::size_t k = 0; k < kBehaviorKinds; ++k) t[k] += m.malicious_by_kind[k];
  return t;
}

inline std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

// Per-cycle curve values of one run.
inline std::vector<std::vector<double>> curve_columns(const RunResult& r, CurveKind kind,
                                                      std::vector<std::string>& names) {
  std::vector<std::vector<double>> cols;
  auto cumulative = [&](auto value) {
    std::vector<double> c;
    double acc = 0.0;
    for (const CycleMetrics& m : r.series) c.push_back(acc += value(m));
    return c;
  };
  switch (kind) {
    case CurveKind::CumulativeNormal:
      names = {""};
      cols.push_back(cumulative([](const CycleMetrics& m) { return double(m.malicious_by_kind[2]); }));
      break;
    case CurveKind::CumulativeIntensive:
      names = {""};
      cols.push_back(cumulative([](const CycleMetrics& m) { return double(m.malicious_by_kind[3]); }));
      break;
    case CurveKind::AttackSuccess: {
      names = {""};
      std::vector<double> c;
      for (const CycleMetrics& m : r.series) c.push_back(m.attack_success_ratio);
      cols.push_back(c);
      break;
    }
    case CurveKind::CumulativeMessages:
      names = {""};
      cols.push_back(cumulative([](const CycleMetrics& m) { return double(m.messages); }));
      break;
    case CurveKind::GlobalTrust:
    case CurveKind::LocalTrustKill: {
      names.clear();
      std::map<UserId, std::size_t> col_of;
      std::map<UserId, std::vector<ChainId>> kills_of;  // kill-chains the user is active on
      for (const TraceSample& t : r.trace) {
        if (col_of.count(t.user)) continue;
        if (kind == CurveKind::GlobalTrust) {
          col_of[t.user] = cols.size();
          names.push_back(std::string(to_string(t.kind)) + "_gt");
          cols.emplace_back();
        } else {
          col_of[t.user] = cols.size();
          auto& kills = kills_of[t.user];
          std::set_intersection(r.kill_chains.begin(), r.kill_chains.end(),
                                t.active_chains.begin(), t.active_chains.end(),
                                std::back_inserter(kills));
          for (ChainId kc : kills) {
            names.push_back(std::string(to_string(t.kind)) + "_lt" + std::to_string(kc));
            cols.emplace_back();
          }
        }
      }
      for (const TraceSample& t : r.trace) {
        const std::size_t base = col_of[t.user];
        if (kind == CurveKind::GlobalTrust) {
          cols[base].push_back(t.global_trust);
        } else {
          const auto& kills = kills_of[t.user];
          for (std::size_t k = 0; k < kills.size(); ++k)
            cols[base + k].push_back(t.local_trust[kills[k]]);
        }
      }
      break;
    }
    case CurveKind::None:
      break;
  }
  return cols;
}

}  // namespace detail

struct SuiteOptions {
  std::filesystem::path out_dir;
  std::size_t seeds = 1;
  std::uint64_t base_seed = 1;
  std::size_t jobs = 1;
  bool plot = false;
};

/// Runs every variant of a suite for each seed, then writes aggregate.csv,
/// timing.csv and (for curve suites) curves.csv.
inline std::vector<SuiteRun> run_suite(const ScenarioSuite& suite, const SuiteOptions& opt) {
  if (opt.seeds == 0) throw ConfigError("seeds must be at least 1");
  if (suite.variants.empty()) throw ConfigError("suite '" + suite.name + "' has no variants");
  std::filesystem::create_directories(opt.out_dir);
  std::vector<SuiteRun> runs;
  for (const SuiteVariant& v : suite.variants)
    for (std::size_t k = 0; k < opt.seeds; ++k) runs.push_back({&v, opt.base_seed + k, {}});

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      try {
        SimConfig cfg = runs[i].variant->cfg;
        cfg.seed = runs[i].seed;
        RunOptions ro;
        ro.out_dir = opt.out_dir / (runs[i].variant->name + "_s" + std::to_string(cfg.seed));
        ro.plot = opt.plot;
        runs[i].result = run_scenario(cfg, ro);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, runs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  write_with(opt.out_dir / "aggregate.csv", [&](std::ostream& os) {
    os << "variant,seed";
    for (const std::string& a : suite.axis_names) os << ',' << a;
    os << ",accuracy,kill_chain_accuracy,mask_chain_accuracy,detection_rate,overload,storage_mb,"
          "malicious_ordinary,malicious_normal_dmb,malicious_intensive_dmb,"
          "mean_attack_success_last50\n";
    auto axis_cells = [&](const SuiteVariant& v) {
      std::string s;
      for (const std::string& a : suite.axis_names) {
        s += ',';
        for (const auto& [k, val] : v.axis)
          if (k == a) s += val;
      }
      return s;
    };
    for (const SuiteVariant& v : suite.variants) {
      std::vector<std::optional<double>> acc, kacc, macc, det, ovl, sto, mo, mn, mi, asr;
      for (const SuiteRun& r : runs) {
        if (r.variant != &v) continue;
        const RunSummary& s = r.result.summary;
        const auto mal = detail::malicious_totals(r.result);
        const double tail = detail::mean_asr_tail(r.result);
        os << v.name << ',' << r.seed << axis_cells(v) << ',' << detail::opt_text(s.accuracy) << ','
           << detail::opt_text(s.kill_chain_accuracy) << ','
           << detail::opt_text(s.mask_chain_accuracy) << ',' << detail::opt_text(s.detection_rate)
           << ',' << s.overload << ',' << format_double(s.storage_mb) << ',' << mal[1] << ','
           << mal[2] << ',' << mal[3] << ',' << format_double(tail) << '\n';
        acc.push_back(s.accuracy);
        kacc.push_back(s.kill_chain_accuracy);
        macc.push_back(s.mask_chain_accuracy);
        det.push_back(s.detection_rate);
        ovl.push_back(double(s.overload));
        sto.push_back(s.storage_mb);
        mo.push_back(double(mal[1]));
        mn.push_back(double(mal[2]));
        mi.push_back(double(mal[3]));
        asr.push_back(tail);
      }
      os << v.name << ",mean" << axis_cells(v);
      for (const auto* col : {&acc, &kacc, &macc, &det, &ovl, &sto, &mo, &mn, &mi, &asr})
        os << ',' << detail::opt_text(detail::mean_of(*col));
      os << '\n';
    }
  });

  write_with(opt.out_dir / "timing.csv", [&](std::ostream& os) {
    os << "variant,seed";
    for (const std::string& a : suite.axis_names) os << ',' << a;
    os << ",cycles,wall_time,wall_time_per_cycle\n";
    for (const SuiteRun& r : runs) {
      os << r.variant->name << ',' << r.seed;
      for (const std::string& a : suite.axis_names) {
        os << ',';
        for (const auto& [k, val] : r.variant->axis)
          if (k == a) os << val;
      }
      const double wt = r.result.summary.wall_time_s;
      const std::size_t cyc = r.result.series.size();
      os << ',' << cyc << ',' << format_double(wt) << ','
         << format_double(cyc ? wt / double(cyc) : 0.0) << '\n';
    }
  });

  if (suite.curve != CurveKind::None) {
    // column per (variant, curve), averaged over seeds
    std::vector<std::string> header;
    std::vector<std::vector<double>> cols;
    for (const SuiteVariant& v : suite.variants) {
      std::vector<std::vector<double>> sum;
      std::vector<std::string> names;
      std::size_t count = 0;
      for (const SuiteRun& r : runs) {
        if (r.variant != &v) continue;
        auto c = detail::curve_columns(r.result, suite.curve, names);
        if (sum.empty()) sum.assign(c.size(), std::vector<double>());
        for (std::size_t k = 0; k < c.size() && k < sum.size(); ++k) {
          if (sum[k].size() < c[k].size()) sum[k].resize(c[k].size(), 0.0);
          for (std::size_t i = 0; i < c[k].size(); ++i) sum[k][i] += c[k][i];
        }
        ++count;
      }
      for (std::size_t k = 0; k < sum.size(); ++k) {
        for (double& x : sum[k]) x /= double(count);
        header.push_back(names[k].empty() ? v.name : v.name + ":" + names[k]);
        cols.push_back(sum[k]);
      }
    }
    std::size_t rows = 0;
    for (const auto& c : cols) rows = std::max(rows, c.size());
    write_with(opt.out_dir / "curves.csv", [&](std::ostream& os) {
      os << "cycle";
      for (const std::string& h : header) os << ',' << h;
      os << '\n';
      for (std::size_t i = 0; i < rows; ++i) {
        os << i;
        for (const auto& c : cols) os << ',' << (i < c.size() ? format_double(c[i]) : "");
        os << '\n';
      }
    });
    if (opt.plot) {
      std::vector<double> x(rows);
      std::iota(x.begin(), x.end(), 0.0);
      std::vector<PlotSeries> ps;
      for (std::size_t k = 0; k < cols.size(); ++k) ps.push_back({header[k], cols[k]});
      write_with(opt.out_dir / "curves.svg",
                 [&](std::ostream& os) { write_svg_chart(os, suite.title, "cycle", x, ps); });
    }
  }
  return runs;
}

}  // namespace podt
