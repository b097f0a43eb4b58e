// Command-line driver: simulation runs, verification batteries, exports.
//
// Exit codes: 0 success (all checks pass), 1 a verification battery failed,
// 2 invalid configuration, 3 resource cap exceeded.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "genealogy/coalescent.hpp"
#include "genealogy/feller.hpp"
#include "genealogy/json_io.hpp"
#include "genealogy/parallel.hpp"
#include "genealogy/polynomials.hpp"
#include "genealogy/spatial.hpp"
#include "genealogy/verification.hpp"

using nlohmann::json;
using namespace genealogy;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<long long> replicates;
  std::optional<int> threads;
  std::string out;
  bool timings = false;
};

json load_config(const CommonFlags& f) {
  if (f.config_path.empty()) return json::object();
  std::ifstream in(f.config_path);
  if (!in) throw std::invalid_argument("cannot open config " + f.config_path);
  json j;
  in >> j;
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw std::invalid_argument("unknown config key: " + it.key());
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void emit_report(const TestReport& rep, const CommonFlags& flags,
                 const std::string& default_name) {
  std::string path = flags.out.empty() ? default_name : flags.out;
  write_file(path, rep.to_json(flags.timings));
  for (const TestRow& r : rep.rows)
    std::fprintf(stderr, "[%s] %-55s %s\n", rep.id.c_str(), r.name.c_str(),
                 r.pass ? "pass" : "FAIL");
  std::fprintf(stderr, "[%s] %s (%.1fs) -> %s\n", rep.id.c_str(),
               rep.pass ? "PASS" : "FAIL", rep.wall_time_sec, path.c_str());
}

Ums initial_from_config(const json& j) {
  if (!j.contains("initial")) return Ums::leaf(1.0);
  const json& ini = j.at("initial");
  if (ini.is_number()) return Ums::leaf(ini.get<double>());
  if (ini.contains("mass")) return Ums::leaf(ini.at("mass").get<double>());
  return ums_from_json(ini.dump());
}

SiteSpace space_from_config(const json& j) {
  const json& sp = j.at("space");
  int n = sp.at("sites").get<int>();
  if (!sp.contains("kernel")) return SiteSpace::uniform(n);
  std::vector<double> kernel;
  for (const auto& row : sp.at("kernel"))
    for (const auto& v : row) kernel.push_back(v.get<double>());
  return SiteSpace::from_matrix(n, std::move(kernel));
}

// -------------------------------------------------------------------------

PhiSpec phi_from_config(const json& j, const PhiSpec& fallback) {
  if (!j.contains("phi")) return fallback;
  const json& p = j.at("phi");
  std::vector<double> params;
  for (const auto& v : p.at("params")) params.push_back(v.get<double>());
  return {p.value("n", 2), PhiFunction::from_id(p.at("id").get<std::string>(), params)};
}

int run_simulate(const CommonFlags& flags) {
  json cfg = load_config(flags);
  reject_unknown(cfg, {"model", "a", "b", "N", "horizon", "grid", "initial",
                       "space", "sites", "replicates", "seed", "threads", "cap",
                       "phi"});
  std::string model = "feller";
  get_if(cfg, "model", model);
  GwConfig gw;
  get_if(cfg, "a", gw.a);
  get_if(cfg, "b", gw.b);
  get_if(cfg, "N", gw.particles_per_unit_mass);
  get_if(cfg, "horizon", gw.horizon);
  get_if(cfg, "cap", gw.particle_cap);
  gw.initial = initial_from_config(cfg);
  long long R = flags.replicates.value_or(cfg.value("replicates", 1000));
  uint64_t seed = flags.seed.value_or(cfg.value("seed", 1));
  int threads = flags.threads.value_or(cfg.value("threads", 0));

  std::vector<double> grid;
  if (cfg.contains("grid"))
    for (const auto& t : cfg.at("grid")) grid.push_back(t.get<double>());
  else
    for (int k = 0; k <= 10; ++k) grid.push_back(gw.horizon * k / 10.0);

  const int K = int(grid.size());
  std::vector<std::vector<double>> mass(K, std::vector<double>(R));
  std::vector<std::vector<double>> phi2(K, std::vector<double>(R));
  std::vector<std::vector<double>> occ;
  std::optional<SiteSpace> space;
  std::vector<int32_t> init_sites;

  if (model == "brw") {
    space = space_from_config(cfg);
    if (cfg.contains("sites"))
      for (const auto& s : cfg.at("sites")) init_sites.push_back(s.get<int32_t>());
    else
      init_sites.assign(gw.initial.n_leaves(), 0);
    occ.assign(size_t(space->n_sites), std::vector<double>(R, 0.0));
  }

  // default statistic: the truncated second moment, via the count route;
  // a catalog phi in the config switches to the record route
  const bool custom_phi = cfg.contains("phi");
  PhiSpec phi_spec = phi_from_config(cfg, PhiSpec{2, PhiFunction::constant(1.0)});

  parallel_for_replicates(R, threads, [&](long long r) {
    Rng rng(seed, uint64_t(r));
    if (!space && !custom_phi) {
      FamilyCounts fc = simulate_family_counts(gw, grid, rng);
      for (int k = 0; k < K; ++k) {
        mass[k][r] = fc.mass_at(k, gw.particles_per_unit_mass);
        phi2[k][r] = fc.sum_square_family_masses(k, gw.particles_per_unit_mass);
      }
    } else if (!space) {
      Genealogy g = simulate_gw(gw, rng);
      for (int k = 0; k < K; ++k) {
        mass[k][r] = g.alive_mass(grid[k]);
        Ums u = extract_ums(g, grid[k]);
        phi2[k][r] = eval_truncated_polynomial(u, phi_spec, grid[k], {}, &rng).value;
      }
    } else {
      MarkedUms init;
      init.ums = gw.initial;
      init.mode = MarkMode::location;
      init.sites = init_sites;
      SpatialGenealogy g = simulate_brw(*space, gw, init, rng);
      for (int k = 0; k < K; ++k) mass[k][r] = g.alive_mass(grid[k]);
      for (int k = 0; k < K; ++k) {
        Ums u = extract_marked_ums(g, grid[k], MarkMode::location).ums;
        phi2[k][r] = eval_truncated_polynomial(u, phi_spec, grid[k], {}, &rng).value;
      }
      std::vector<double> o = g.occupation(gw.horizon);
      for (int s = 0; s < space->n_sites; ++s) occ[s][r] = o[s];
    }
  });

  std::string csv = "t,mean_mass,se_mass,var_mass,mean_phi2,se_phi2\n";
  char line[256];
  for (int k = 0; k < K; ++k) {
    double s = 0, s2 = 0, p = 0, p2 = 0;
    for (long long r = 0; r < R; ++r) {
      s += mass[k][r];
      s2 += mass[k][r] * mass[k][r];
      p += phi2[k][r];
      p2 += phi2[k][r] * phi2[k][r];
    }
    double m = s / R, var = std::max(0.0, s2 / R - m * m);
    double pm = p / R, pvar = std::max(0.0, p2 / R - pm * pm);
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", grid[k],
                  m, std::sqrt(var / R), var, pm, std::sqrt(pvar / R));
    csv += line;
  }
  std::string out = flags.out.empty() ? "simulate.csv" : flags.out;
  write_file(out, csv);
  if (space) {
    std::string occ_csv = "site,mean_mass,se\n";
    for (int s = 0; s < space->n_sites; ++s) {
      double ss = 0, ss2 = 0;
      for (long long r = 0; r < R; ++r) {
        ss += occ[s][r];
        ss2 += occ[s][r] * occ[s][r];
      }
      double m = ss / R, var = std::max(0.0, ss2 / R - m * m);
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", s, m, std::sqrt(var / R));
      occ_csv += line;
    }
    write_file(out + ".occupation.csv", occ_csv);
  }
  std::fprintf(stderr, "simulate: %lld replicates -> %s\n", R, out.c_str());
  return 0;
}

int run_export(const CommonFlags& flags) {
  json cfg = load_config(flags);
  reject_unknown(cfg, {"what", "a", "b", "N", "horizon", "t", "initial", "space",
                       "sites", "seed", "mode"});
  std::string what = cfg.value("what", "genealogy");
  GwConfig gw;
  get_if(cfg, "a", gw.a);
  get_if(cfg, "b", gw.b);
  get_if(cfg, "N", gw.particles_per_unit_mass);
  get_if(cfg, "horizon", gw.horizon);
  gw.initial = initial_from_config(cfg);
  double t = cfg.value("t", gw.horizon);
  uint64_t seed = flags.seed.value_or(cfg.value("seed", 1));
  Rng rng(seed, 0);
  std::string out = flags.out.empty() ? ("export_" + what + ".json") : flags.out;

  if (what == "genealogy") {
    Genealogy g = simulate_gw(gw, rng);
    write_file(out, genealogy_to_json(g));
  } else if (what == "ums") {
    Genealogy g = simulate_gw(gw, rng);
    write_file(out, ums_to_json(extract_ums(g, t)));
  } else if (what == "marked") {
    SiteSpace space = space_from_config(cfg);
    MarkedUms init;
    init.ums = gw.initial;
    init.mode = MarkMode::location;
    if (cfg.contains("sites"))
      for (const auto& s : cfg.at("sites")) init.sites.push_back(s.get<int32_t>());
    else
      init.sites.assign(gw.initial.n_leaves(), 0);
    SpatialGenealogy g = simulate_brw(space, gw, init, rng);
    std::string mode = cfg.value("mode", "location");
    MarkMode mm = mode == "location" ? MarkMode::location
                  : mode == "path_raw" ? MarkMode::path_raw
                                       : MarkMode::path_adjusted;
    write_file(out, marked_ums_to_json(extract_marked_ums(g, t, mm)));
  } else {
    throw std::invalid_argument("export: what must be genealogy|ums|marked");
  }
  std::fprintf(stderr, "export: wrote %s\n", out.c_str());
  return 0;
}

int run_test_moment(const CommonFlags& flags) {
  json cfg = load_config(flags);
  reject_unknown(cfg, {"b", "drifts", "times", "N", "replicates", "initial_mass",
                       "include_zero_drift", "seed", "threads", "z_max", "rel_tol"});
  MomentTestConfig mc;
  get_if(cfg, "b", mc.b);
  get_if(cfg, "drifts", mc.drifts);
  get_if(cfg, "times", mc.times);
  get_if(cfg, "N", mc.particles_per_unit_mass);
  get_if(cfg, "replicates", mc.replicates);
  get_if(cfg, "initial_mass", mc.initial_mass);
  get_if(cfg, "include_zero_drift", mc.include_zero_drift);
  get_if(cfg, "seed", mc.seed);
  get_if(cfg, "threads", mc.threads);
  get_if(cfg, "z_max", mc.z_max);
  get_if(cfg, "rel_tol", mc.rel_tol);
  if (flags.seed) mc.seed = *flags.seed;
  if (flags.replicates) mc.replicates = *flags.replicates;
  if (flags.threads) mc.threads = *flags.threads;
  TestReport rep = test_moment_recursion(mc);
  rep.params = cfg.dump();
  emit_report(rep, flags, "moment_report.json");
  return rep.pass ? 0 : 1;
}

int run_test_branching(const CommonFlags& flags) {
  json cfg = load_config(flags);
  reject_unknown(cfg, {"b", "a", "N", "times", "replicates", "seed", "threads",
                       "z_max", "nonspatial", "spatial_location", "spatial_path"});
  BranchingTestConfig bc;
  get_if(cfg, "b", bc.b);
  get_if(cfg, "a", bc.a);
  get_if(cfg, "N", bc.particles_per_unit_mass);
  get_if(cfg, "times", bc.times);
  get_if(cfg, "replicates", bc.replicates);
  get_if(cfg, "seed", bc.seed);
  get_if(cfg, "threads", bc.threads);
  get_if(cfg, "z_max", bc.z_max);
  get_if(cfg, "nonspatial", bc.nonspatial);
  get_if(cfg, "spatial_location", bc.spatial_location);
  get_if(cfg, "spatial_path", bc.spatial_path);
  if (flags.seed) bc.seed = *flags.seed;
  if (flags.replicates) bc.replicates = *flags.replicates;
  if (flags.threads) bc.threads = *flags.threads;
  TestReport rep = test_generalized_branching(bc);
  rep.params = cfg.dump();
  emit_report(rep, flags, "branching_report.json");
  return rep.pass ? 0 : 1;
}

int run_test_duality(const CommonFlags& flags) {
  json cfg = load_config(flags);
  reject_unknown(cfg, {"b", "orders", "times", "replicates", "N", "seed", "threads",
                       "z_max", "spatial", "convention_row", "drift_row", "fk"});
  DualityTestConfig dc;
  get_if(cfg, "b", dc.b);
  get_if(cfg, "orders", dc.orders);
  get_if(cfg, "times", dc.times);
  get_if(cfg, "replicates", dc.replicates);
  get_if(cfg, "N", dc.particles_per_unit_mass);
  get_if(cfg, "seed", dc.seed);
  get_if(cfg, "threads", dc.threads);
  get_if(cfg, "z_max", dc.z_max);
  get_if(cfg, "spatial", dc.spatial);
  get_if(cfg, "convention_row", dc.convention_row);
  get_if(cfg, "drift_row", dc.drift_row);
  if (cfg.contains("fk"))
    dc.fk = cfg.at("fk").get<std::string>() == "pairs"
                ? FkConvention::pairs_plus_drift
                : FkConvention::b_pairs_plus_drift;
  if (flags.seed) dc.seed = *flags.seed;
  if (flags.replicates) dc.replicates = *flags.replicates;
  if (flags.threads) dc.threads = *flags.threads;
  TestReport rep = test_duality(dc);
  rep.params = cfg.dump();
  emit_report(rep, flags, "duality_report.json");
  return rep.pass ? 0 : 1;
}

int run_test_algebra(const CommonFlags& flags) {
  json cfg = load_config(flags);
  reject_unknown(cfg, {"instances", "max_leaves", "seed", "tol",
                       "monotone_instances", "monotone_rel_tol"});
  AlgebraTestConfig ac;
  get_if(cfg, "instances", ac.instances);
  get_if(cfg, "max_leaves", ac.max_leaves);
  get_if(cfg, "seed", ac.seed);
  get_if(cfg, "tol", ac.tol);
  get_if(cfg, "monotone_instances", ac.monotone_instances);
  get_if(cfg, "monotone_rel_tol", ac.monotone_rel_tol);
  if (flags.seed) ac.seed = *flags.seed;
  TestReport rep = test_algebra_suite(ac);
  TestReport mono = test_monotone_approximation(ac);
  rep.rows.insert(rep.rows.end(), mono.rows.begin(), mono.rows.end());
  rep.wall_time_sec += mono.wall_time_sec;
  rep.finish();
  rep.params = cfg.dump();
  emit_report(rep, flags, "algebra_report.json");
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genealogy-valued branching process simulator and verifier"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON configuration file");
    sub->add_option("--seed", flags.seed, "64-bit master seed");
    sub->add_option("--replicates", flags.replicates, "Monte Carlo replicates");
    sub->add_option("--threads", flags.threads,
                    "worker threads (default: GENEALOGY_THREADS or hardware)");
    sub->add_option("--out", flags.out, "output path");
    sub->add_flag("--timings", flags.timings, "embed wall times in reports");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run the particle model, emit CSV series");
  CLI::App* branching = app.add_subcommand("test-branching", "generalized branching property battery");
  CLI::App* moment = app.add_subcommand("test-moment", "second-moment identity battery");
  CLI::App* duality = app.add_subcommand("test-duality", "Feynman-Kac duality battery");
  CLI::App* algebra = app.add_subcommand("test-algebra", "exact algebra and monotone approximation");
  CLI::App* exporter = app.add_subcommand("export", "export genealogy / state JSON");
  for (CLI::App* sub : {simulate, branching, moment, duality, algebra, exporter})
    add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(flags);
    if (branching->parsed()) return run_test_branching(flags);
    if (moment->parsed()) return run_test_moment(flags);
    if (duality->parsed()) return run_test_duality(flags);
    if (algebra->parsed()) return run_test_algebra(flags);
    if (exporter->parsed()) return run_export(flags);
  } catch (const ResourceCapError& e) {
    std::fprintf(stderr, "resource cap: %s\n", e.what());
    return 3;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
