#include "dgopf/case_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace dgopf {

using nlohmann::json;

Index NetworkCase::slack_index() const {
  for (Index i = 0; i < static_cast<Index>(buses.size()); ++i) {
    if (buses[i].is_slack) return i;
  }
  return -1;
}

Index NetworkCase::bus_index(int bus_id) const {
  for (Index i = 0; i < static_cast<Index>(buses.size()); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  return -1;
}

namespace {

// Union-find over bus indices for the connectivity check.
struct DisjointSet {
  std::vector<Index> parent;
  explicit DisjointSet(Index n) : parent(n) {
    std::iota(parent.begin(), parent.end(), Index{0});
  }
  Index find(Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(Index a, Index b) { parent[find(a)] = find(b); }
};

}  // namespace

void validate_case(const NetworkCase& nc) {
  int n_slack = 0;
  std::unordered_map<int, Index> seen;
  for (Index i = 0; i < static_cast<Index>(nc.buses.size()); ++i) {
    const Bus& b = nc.buses[i];
    if (seen.count(b.id)) {
      throw Error("duplicate bus id " + std::to_string(b.id));
    }
    seen[b.id] = i;
    if (b.is_slack) ++n_slack;
  }
  if (n_slack != 1) {
    throw Error("expected exactly one slack bus, found " +
                std::to_string(n_slack));
  }
  if (nc.base_mva <= 0.0) throw Error("base_mva must be positive");

  auto need_bus = [&](int id, const std::string& what) {
    if (!seen.count(id)) {
      throw Error(what + " references unknown bus " + std::to_string(id));
    }
  };
  for (size_t i = 0; i < nc.branches.size(); ++i) {
    const Branch& br = nc.branches[i];
    const std::string tag = "branch " + std::to_string(i);
    need_bus(br.from_bus, tag);
    need_bus(br.to_bus, tag);
    if (br.from_bus == br.to_bus) throw Error(tag + ": from == to");
    if (!(br.reactance > 0.0)) {
      throw Error(tag + ": reactance must be strictly positive");
    }
    if (br.flow_limit && *br.flow_limit < 0.0) {
      throw Error(tag + ": negative flow limit");
    }
  }
  for (size_t i = 0; i < nc.generators.size(); ++i) {
    const Generator& g = nc.generators[i];
    const std::string tag = "generator " + std::to_string(i);
    need_bus(g.bus, tag);
    if (g.p_min > g.p_max) throw Error(tag + ": p_min > p_max");
    if (g.cost_c2 < 0.0) throw Error(tag + ": negative quadratic cost");
    if (g.r_up_max < 0.0 || g.r_dn_max < 0.0 || g.c_up < 0.0 || g.c_dn < 0.0) {
      throw Error(tag + ": negative reserve limit or price");
    }
  }
  for (size_t i = 0; i < nc.loads.size(); ++i) {
    need_bus(nc.loads[i].bus, "load " + std::to_string(i));
    if (nc.loads[i].demand < 0.0) {
      throw Error("load " + std::to_string(i) + ": negative demand");
    }
  }
  for (size_t i = 0; i < nc.wind_farms.size(); ++i) {
    need_bus(nc.wind_farms[i].bus, "wind farm " + std::to_string(i));
    if (nc.wind_farms[i].forecast < 0.0) {
      throw Error("wind farm " + std::to_string(i) + ": negative forecast");
    }
  }

  // Connectivity over in-service branches.
  DisjointSet ds(static_cast<Index>(nc.buses.size()));
  for (const Branch& br : nc.branches) {
    ds.unite(seen.at(br.from_bus), seen.at(br.to_bus));
  }
  const Index root = nc.buses.empty() ? 0 : ds.find(0);
  for (Index i = 1; i < static_cast<Index>(nc.buses.size()); ++i) {
    if (ds.find(i) != root) {
      throw Error("network is disconnected (bus " +
                  std::to_string(nc.buses[i].id) +
                  " unreachable from bus " + std::to_string(nc.buses[0].id) +
                  ")");
    }
  }
}

// ---------------------------------------------------------------------------
// MATPOWER parser
// ---------------------------------------------------------------------------

namespace {

struct MpcMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> line_numbers;  // source line of each row
};

// Strips MATLAB comments and returns per-line content.
std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  lines.push_back(cur);
  for (std::string& ln : lines) {
    const size_t pos = ln.find('%');
    if (pos != std::string::npos) ln.erase(pos);
  }
  return lines;
}

bool parse_row(const std::string& line, std::vector<double>* out) {
  out->clear();
  std::string cleaned = line;
  for (char& ch : cleaned) {
    if (ch == ';' || ch == ',' || ch == '\t' || ch == '\r') ch = ' ';
  }
  std::istringstream ss(cleaned);
  double v;
  while (ss >> v) out->push_back(v);
  if (!ss.eof()) return false;  // trailing junk that is not a number
  return true;
}

std::optional<MpcMatrix> find_matrix(const std::vector<std::string>& lines,
                                     const std::string& name) {
  const std::string key = "mpc." + name;
  for (size_t i = 0; i < lines.size(); ++i) {
    const size_t at = lines[i].find(key);
    if (at == std::string::npos) continue;
    const size_t open = lines[i].find('[', at);
    if (open == std::string::npos) continue;
    MpcMatrix m;
    std::string rest = lines[i].substr(open + 1);
    size_t li = i;
    while (true) {
      const size_t close = rest.find(']');
      const std::string body =
          close == std::string::npos ? rest : rest.substr(0, close);
      std::vector<double> row;
      if (!parse_row(body, &row)) {
        throw Error("mpc." + name + ": malformed row at line " +
                    std::to_string(li + 1));
      }
      if (!row.empty()) {
        m.rows.push_back(row);
        m.line_numbers.push_back(static_cast<int>(li + 1));
      }
      if (close != std::string::npos) return m;
      ++li;
      if (li >= lines.size()) {
        throw Error("mpc." + name + ": unterminated matrix");
      }
      rest = lines[li];
    }
  }
  return std::nullopt;
}

double scalar_field(const std::vector<std::string>& lines,
                    const std::string& name) {
  const std::string key = "mpc." + name;
  for (const std::string& ln : lines) {
    const size_t at = ln.find(key);
    if (at == std::string::npos) continue;
    const size_t eq = ln.find('=', at);
    if (eq == std::string::npos) continue;
    std::vector<double> vals;
    if (parse_row(ln.substr(eq + 1), &vals) && vals.size() == 1) {
      return vals[0];
    }
  }
  throw Error("missing mpc." + name);
}

void require_cols(const MpcMatrix& m, size_t n, const std::string& name) {
  for (size_t r = 0; r < m.rows.size(); ++r) {
    if (m.rows[r].size() < n) {
      throw Error("mpc." + name + ": row at line " +
                  std::to_string(m.line_numbers[r]) + " has " +
                  std::to_string(m.rows[r].size()) + " columns, need >= " +
                  std::to_string(n));
    }
  }
}

}  // namespace

NetworkCase parse_matpower(const std::string& text,
                           const MatpowerDefaults& defaults) {
  const std::vector<std::string> lines = split_lines(text);
  const auto bus = find_matrix(lines, "bus");
  if (!bus) throw Error("missing mpc.bus");
  const auto gen = find_matrix(lines, "gen");
  if (!gen) throw Error("missing mpc.gen");
  const auto branch = find_matrix(lines, "branch");
  if (!branch) throw Error("missing mpc.branch");
  const auto gencost = find_matrix(lines, "gencost");
  if (!gencost) throw Error("missing mpc.gencost");
  require_cols(*bus, 3, "bus");
  require_cols(*gen, 10, "gen");
  require_cols(*branch, 11, "branch");
  require_cols(*gencost, 4, "gencost");
  if (gencost->rows.size() != gen->rows.size()) {
    throw Error("mpc.gencost has " + std::to_string(gencost->rows.size()) +
                " rows but mpc.gen has " + std::to_string(gen->rows.size()));
  }

  NetworkCase nc;
  nc.base_mva = scalar_field(lines, "baseMVA");

  for (size_t r = 0; r < bus->rows.size(); ++r) {
    const auto& row = bus->rows[r];
    Bus b;
    b.id = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    b.is_slack = (type == 3);
    nc.buses.push_back(b);
    if (row[2] != 0.0) {
      nc.loads.push_back({b.id, row[2]});
    }
  }

  for (size_t r = 0; r < gen->rows.size(); ++r) {
    const auto& row = gen->rows[r];
    Generator g;
    g.bus = static_cast<int>(row[0]);
    g.p_max = row[8];
    g.p_min = row[9];
    const auto& cost = gencost->rows[r];
    const int model = static_cast<int>(cost[0]);
    if (model != 2) {
      throw Error("mpc.gencost row at line " +
                  std::to_string(gencost->line_numbers[r]) +
                  ": only polynomial model 2 is supported");
    }
    const int ncost = static_cast<int>(cost[3]);
    if (ncost < 1 || ncost > 3 ||
        cost.size() < static_cast<size_t>(4 + ncost)) {
      throw Error("mpc.gencost row at line " +
                  std::to_string(gencost->line_numbers[r]) +
                  ": polynomial degree must be <= 2");
    }
    // Coefficients are listed highest degree first.
    double c[3] = {0.0, 0.0, 0.0};  // c2, c1, c0
    for (int k = 0; k < ncost; ++k) {
      c[3 - ncost + k] = cost[4 + k];
    }
    g.cost_c2 = c[0];
    g.cost_c1 = c[1];
    g.cost_c0 = c[2];
    const double range = std::max(0.0, g.p_max - g.p_min);
    g.r_up_max = defaults.reserve_limit_fraction * range;
    g.r_dn_max = defaults.reserve_limit_fraction * range;
    g.c_up = defaults.c_up;
    g.c_dn = defaults.c_dn;
    nc.generators.push_back(g);
  }

  for (size_t r = 0; r < branch->rows.size(); ++r) {
    const auto& row = branch->rows[r];
    if (static_cast<int>(row[10]) == 0) continue;  // out of service
    Branch br;
    br.from_bus = static_cast<int>(row[0]);
    br.to_bus = static_cast<int>(row[1]);
    br.reactance = row[3];
    if (row[5] > 0.0) br.flow_limit = row[5];  // rateA of 0 = unlimited
    if (!(br.reactance > 0.0)) {
      throw Error("mpc.branch row at line " +
                  std::to_string(branch->line_numbers[r]) +
                  ": reactance must be strictly positive");
    }
    nc.branches.push_back(br);
  }

  validate_case(nc);
  return nc;
}

// ---------------------------------------------------------------------------
// JSON case format
// ---------------------------------------------------------------------------

namespace {

double num_or(const json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<double>();
}

}  // namespace

NetworkCase parse_json_case(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("case JSON: ") + e.what());
  }
  NetworkCase nc;
  try {
    nc.name = j.value("name", "");
    nc.base_mva = num_or(j, "base_mva", 100.0);
    if (!j.contains("buses") || !j["buses"].is_array()) {
      throw Error("case JSON: /buses must be an array");
    }
    for (size_t i = 0; i < j["buses"].size(); ++i) {
      const json& b = j["buses"][i];
      nc.buses.push_back(
          {b.at("id").get<int>(), b.value("is_slack", false)});
    }
    for (size_t i = 0; i < j.value("branches", json::array()).size(); ++i) {
      const json& b = j["branches"][i];
      if (!b.value("in_service", true)) continue;
      Branch br;
      br.from_bus = b.at("from").get<int>();
      br.to_bus = b.at("to").get<int>();
      br.reactance = b.at("x").get<double>();
      if (b.contains("flow_limit") && b["flow_limit"].get<double>() > 0.0) {
        br.flow_limit = b["flow_limit"].get<double>();
      }
      nc.branches.push_back(br);
    }
    for (size_t i = 0; i < j.value("generators", json::array()).size(); ++i) {
      const json& g = j["generators"][i];
      Generator gen;
      gen.bus = g.at("bus").get<int>();
      gen.cost_c2 = num_or(g, "cost_c2", 0.0);
      gen.cost_c1 = num_or(g, "cost_c1", 0.0);
      gen.cost_c0 = num_or(g, "cost_c0", 0.0);
      gen.p_min = num_or(g, "p_min", 0.0);
      gen.p_max = g.at("p_max").get<double>();
      gen.r_up_max = num_or(g, "r_up_max", 0.0);
      gen.r_dn_max = num_or(g, "r_dn_max", 0.0);
      gen.c_up = num_or(g, "c_up", 0.0);
      gen.c_dn = num_or(g, "c_dn", 0.0);
      nc.generators.push_back(gen);
    }
    for (size_t i = 0; i < j.value("loads", json::array()).size(); ++i) {
      const json& l = j["loads"][i];
      nc.loads.push_back({l.at("bus").get<int>(), l.at("demand").get<double>()});
    }
    for (size_t i = 0; i < j.value("wind_farms", json::array()).size(); ++i) {
      const json& w = j["wind_farms"][i];
      WindFarm wf;
      wf.bus = w.at("bus").get<int>();
      wf.forecast = w.at("forecast").get<double>();
      wf.name = w.value("name", "w" + std::to_string(i + 1));
      nc.wind_farms.push_back(wf);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("case JSON: ") + e.what());
  }
  validate_case(nc);
  return nc;
}

std::string case_to_json(const NetworkCase& nc) {
  json j;
  j["name"] = nc.name;
  j["base_mva"] = nc.base_mva;
  j["buses"] = json::array();
  for (const Bus& b : nc.buses) {
    j["buses"].push_back({{"id", b.id}, {"is_slack", b.is_slack}});
  }
  j["branches"] = json::array();
  for (const Branch& br : nc.branches) {
    json e = {{"from", br.from_bus}, {"to", br.to_bus}, {"x", br.reactance}};
    e["flow_limit"] = br.flow_limit ? *br.flow_limit : 0.0;
    j["branches"].push_back(e);
  }
  j["generators"] = json::array();
  for (const Generator& g : nc.generators) {
    j["generators"].push_back({{"bus", g.bus},
                               {"cost_c2", g.cost_c2},
                               {"cost_c1", g.cost_c1},
                               {"cost_c0", g.cost_c0},
                               {"p_min", g.p_min},
                               {"p_max", g.p_max},
                               {"r_up_max", g.r_up_max},
                               {"r_dn_max", g.r_dn_max},
                               {"c_up", g.c_up},
                               {"c_dn", g.c_dn}});
  }
  j["loads"] = json::array();
  for (const Load& l : nc.loads) {
    j["loads"].push_back({{"bus", l.bus}, {"demand", l.demand}});
  }
  j["wind_farms"] = json::array();
  for (const WindFarm& w : nc.wind_farms) {
    j["wind_farms"].push_back(
        {{"bus", w.bus}, {"forecast", w.forecast}, {"name", w.name}});
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// PTDF
// ---------------------------------------------------------------------------

PtdfSet build_ptdf(const NetworkCase& nc) {
  const Index n = static_cast<Index>(nc.buses.size());
  const Index nl = static_cast<Index>(nc.branches.size());
  const Index slack = nc.slack_index();
  std::unordered_map<int, Index> idx;
  for (Index i = 0; i < n; ++i) idx[nc.buses[i].id] = i;

  Matrix b_bus = Matrix::Zero(n, n);
  Matrix b_flow = Matrix::Zero(nl, n);
  for (Index l = 0; l < nl; ++l) {
    const Branch& br = nc.branches[l];
    const Index f = idx.at(br.from_bus);
    const Index t = idx.at(br.to_bus);
    const double b = 1.0 / br.reactance;
    b_bus(f, f) += b;
    b_bus(t, t) += b;
    b_bus(f, t) -= b;
    b_bus(t, f) -= b;
    b_flow(l, f) += b;
    b_flow(l, t) -= b;
  }

  // Remove the slack row/column and factor once.
  std::vector<Index> keep;
  keep.reserve(n - 1);
  for (Index i = 0; i < n; ++i) {
    if (i != slack) keep.push_back(i);
  }
  Matrix b_red(n - 1, n - 1);
  Matrix bf_red(nl, n - 1);
  for (Index r = 0; r < n - 1; ++r) {
    bf_red.col(r) = b_flow.col(keep[r]);
    for (Index c = 0; c < n - 1; ++c) b_red(r, c) = b_bus(keep[r], keep[c]);
  }
  Eigen::LDLT<Matrix> ldlt(b_red);
  if (ldlt.info() != Eigen::Success) {
    throw Error("PTDF: reduced susceptance matrix is singular");
  }
  const Matrix x = ldlt.solve(bf_red.transpose());  // (n-1) x L
  const double residual =
      (b_red * x - bf_red.transpose()).cwiseAbs().maxCoeff();
  const double scale = b_red.cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > 1e-6 * (1.0 + scale)) {
    throw Error("PTDF: susceptance solve failed (residual " +
                std::to_string(residual) + ")");
  }

  PtdfSet ptdf;
  ptdf.h_bus = Matrix::Zero(nl, n);
  for (Index r = 0; r < n - 1; ++r) ptdf.h_bus.col(keep[r]) = x.row(r);

  ptdf.h_gen.resize(nl, static_cast<Index>(nc.generators.size()));
  for (Index g = 0; g < ptdf.h_gen.cols(); ++g) {
    ptdf.h_gen.col(g) = ptdf.h_bus.col(idx.at(nc.generators[g].bus));
  }
  ptdf.h_wind.resize(nl, static_cast<Index>(nc.wind_farms.size()));
  for (Index w = 0; w < ptdf.h_wind.cols(); ++w) {
    ptdf.h_wind.col(w) = ptdf.h_bus.col(idx.at(nc.wind_farms[w].bus));
  }
  ptdf.h_load.resize(nl, static_cast<Index>(nc.loads.size()));
  for (Index d = 0; d < ptdf.h_load.cols(); ++d) {
    ptdf.h_load.col(d) = ptdf.h_bus.col(idx.at(nc.loads[d].bus));
  }
  return ptdf;
}

}  // namespace dgopf
