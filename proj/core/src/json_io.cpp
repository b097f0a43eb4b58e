#include "genealogy/json_io.hpp"

#include <json.hpp>

namespace genealogy {

using nlohmann::json;

namespace {

json node_to_json(const Ums& u, int32_t id, const MarkedUms* marked,
                  const std::vector<int32_t>* leaf_index) {
  const Ums::Node& nd = u.node(id);
  json j;
  if (nd.is_leaf()) {
    j["mass"] = nd.mass;
    if (marked) {
      int leaf = (*leaf_index)[id];
      if (marked->mode == MarkMode::location) {
        j["mark"] = marked->sites[leaf];
      } else {
        const AncestralPath& p = marked->paths[leaf];
        json pj;
        pj["initial"] = p.initial_site;
        json times = json::array(), sites = json::array();
        for (size_t k = 0; k < p.jump_times.size(); ++k) {
          times.push_back(p.effective_time(k));
          sites.push_back(p.jump_sites[k]);
        }
        pj["times"] = std::move(times);
        pj["sites"] = std::move(sites);
        j["mark"] = std::move(pj);
      }
    }
    return j;
  }
  j["h"] = nd.height;
  json kids = json::array();
  for (int32_t k : nd.kids) kids.push_back(node_to_json(u, k, marked, leaf_index));
  j["children"] = std::move(kids);
  return j;
}

json forest_to_json(const Ums& u, const MarkedUms* marked) {
  std::vector<int32_t> leaf_index(std::max(u.n_nodes(), 1), -1);
  for (int i = 0; i < u.n_leaves(); ++i) leaf_index[u.leaf_ids()[i]] = i;
  json j;
  j["ceiling"] = u.ceiling();
  json trees = json::array();
  for (int32_t r : u.roots()) trees.push_back(node_to_json(u, r, marked, &leaf_index));
  j["trees"] = std::move(trees);
  return j;
}

int32_t node_from_json(const json& j, UmsBuilder& b, MarkedUms* marked) {
  if (j.contains("mass")) {
    int32_t id = b.add_leaf(j.at("mass").get<double>());
    if (marked && j.contains("mark")) {
      const json& mk = j.at("mark");
      if (mk.is_number()) {
        marked->sites.push_back(mk.get<int32_t>());
      } else {
        AncestralPath p;
        p.initial_site = mk.at("initial").get<int32_t>();
        for (const auto& t : mk.at("times")) p.jump_times.push_back(t.get<double>());
        for (const auto& s : mk.at("sites")) p.jump_sites.push_back(s.get<int32_t>());
        marked->paths.push_back(std::move(p));
      }
    }
    return id;
  }
  std::vector<int32_t> kids;
  for (const json& kj : j.at("children")) kids.push_back(node_from_json(kj, b, marked));
  return b.add_internal(j.at("h").get<double>(), kids);
}

Ums forest_from_json(const json& j, MarkedUms* marked) {
  UmsBuilder b;
  for (const json& tj : j.at("trees")) b.add_root(node_from_json(tj, b, marked));
  b.set_ceiling(j.at("ceiling").get<double>());
  return b.build();
}

}  // namespace

std::string ums_to_json(const Ums& u) { return forest_to_json(u, nullptr).dump(); }

Ums ums_from_json(const std::string& text) {
  return forest_from_json(json::parse(text), nullptr);
}

std::string marked_ums_to_json(const MarkedUms& u) {
  json j = forest_to_json(u.ums, &u);
  j["mode"] = u.mode == MarkMode::location
                  ? "location"
                  : (u.mode == MarkMode::path_raw ? "path_raw" : "path_adjusted");
  if (u.mode == MarkMode::path_raw) j["horizon"] = u.horizon;
  return j.dump();
}

MarkedUms marked_ums_from_json(const std::string& text) {
  json j = json::parse(text);
  MarkedUms out;
  std::string mode = j.at("mode").get<std::string>();
  out.mode = mode == "location"
                 ? MarkMode::location
                 : (mode == "path_raw" ? MarkMode::path_raw : MarkMode::path_adjusted);
  if (j.contains("horizon")) out.horizon = j.at("horizon").get<double>();
  out.ums = forest_from_json(j, &out);
  out.validate();
  return out;
}

std::string TestReport::to_json(bool with_timings) const {
  json j;
  j["id"] = id;
  if (!params.empty()) j["params"] = json::parse(params);
  j["pass"] = pass;
  j["replicates"] = replicates;
  if (!note.empty()) j["note"] = note;
  if (with_timings) j["wall_time_sec"] = wall_time_sec;
  json rows_j = json::array();
  for (const TestRow& r : rows) {
    json rj;
    rj["name"] = r.name;
    rj["estimate"] = r.estimate;
    rj["target"] = r.target;
    if (r.statistical) {
      rj["se"] = r.se;
      rj["z"] = r.statistic;
    } else {
      rj["residual"] = r.statistic;
    }
    if (r.two_sided) {
      rj["lhs"] = r.estimate;
      rj["lhs_se"] = r.lhs_se;
      rj["rhs"] = r.target;
      rj["rhs_se"] = r.rhs_se;
      rj["ess"] = r.ess;
      rj["n_replicates"] = r.n_replicates;
    }
    rj["threshold"] = r.threshold;
    rj["pass"] = r.pass;
    rows_j.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows_j);
  return j.dump(2);
}

std::string genealogy_to_json(const Genealogy& g) {
  json j;
  j["n"] = g.cfg.particles_per_unit_mass;
  j["horizon"] = g.horizon;
  j["n_founders"] = g.n_founders;
  json ps = json::array();
  for (size_t i = 0; i < g.particles.size(); ++i) {
    const Particle& p = g.particles[i];
    json pj;
    pj["id"] = i;
    pj["parent"] = p.parent;
    pj["founder"] = p.founder;
    pj["birth"] = p.birth;
    if (std::isfinite(p.death)) pj["death"] = p.death;
    pj["split"] = p.split;
    ps.push_back(std::move(pj));
  }
  j["particles"] = std::move(ps);
  return j.dump();
}

}  // namespace genealogy
