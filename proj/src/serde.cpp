#include "dgopf/serde.hpp"

#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dgopf {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
}

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), compact single-buffer implementation.
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
    0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
    0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) {
  return (x >> n) | (x << (32 - n));
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372,
                                    0xa54ff53a, 0x510e527f, 0x9b05688c,
                                    0x1f83d9ab, 0x5be0cd19};
  std::string msg = bytes;
  const std::uint64_t bitlen = static_cast<std::uint64_t>(msg.size()) * 8;
  msg.push_back(static_cast<char>(0x80));
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i) {
    msg.push_back(static_cast<char>((bitlen >> (8 * i)) & 0xff));
  }
  std::array<std::uint32_t, 64> w{};
  for (size_t block = 0; block < msg.size(); block += 64) {
    for (int t = 0; t < 16; ++t) {
      w[t] = (static_cast<std::uint8_t>(msg[block + 4 * t]) << 24) |
             (static_cast<std::uint8_t>(msg[block + 4 * t + 1]) << 16) |
             (static_cast<std::uint8_t>(msg[block + 4 * t + 2]) << 8) |
             static_cast<std::uint8_t>(msg[block + 4 * t + 3]);
    }
    for (int t = 16; t < 64; ++t) {
      const std::uint32_t s0 =
          rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
      const std::uint32_t s1 =
          rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
      w[t] = w[t - 16] + s0 + w[t - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int t = 0; t < 64; ++t) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t temp1 = hh + s1 + ch + kSha256K[t] + w[t];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t temp2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + temp1;
      d = c;
      c = b;
      b = a;
      a = temp1 + temp2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (std::uint32_t v : h) out << std::setw(8) << v;
  return out.str();
}

std::vector<std::string> manifest_comment_lines(const RunManifest& manifest) {
  std::vector<std::string> lines;
  lines.push_back("command: " + manifest.command);
  lines.push_back("tool_version: " + manifest.tool_version);
  lines.push_back("seed: " + std::to_string(manifest.seed));
  lines.push_back("config_hash: " + manifest.config_hash);
  for (const auto& [path, digest] : manifest.input_digests) {
    lines.push_back("input: " + path + " sha256:" + digest);
  }
  return lines;
}

namespace {

json manifest_to_json_obj(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["inputs"] = json::object();
  for (const auto& [path, digest] : m.input_digests) {
    j["inputs"][path] = digest;
  }
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["wall_seconds"] = m.wall_seconds;
  return j;
}

Vector vector_from_json(const json& j) {
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

json vector_to_json(const Vector& v) {
  json j = json::array();
  for (Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Matrix matrix_from_json(const json& j) {
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (static_cast<Index>(j[r].size()) != cols) {
      throw Error("JSON matrix rows have inconsistent lengths");
    }
    for (Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json j = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string samples_to_csv(const Matrix& rows,
                           const std::vector<std::string>& columns,
                           const std::vector<std::string>& comments) {
  std::ostringstream out;
  for (const std::string& c : comments) out << "# " << c << "\n";
  for (Index c = 0; c < rows.cols(); ++c) {
    if (c > 0) out << ",";
    out << (c < static_cast<Index>(columns.size())
                ? columns[c]
                : "w" + std::to_string(c + 1));
  }
  out << "\n";
  out << std::setprecision(17);
  for (Index r = 0; r < rows.rows(); ++r) {
    for (Index c = 0; c < rows.cols(); ++c) {
      if (c > 0) out << ",";
      out << rows(r, c);
    }
    out << "\n";
  }
  return out.str();
}

SampleSet samples_from_csv(const std::string& text) {
  SampleSet out;
  std::istringstream in(text);
  std::string line;
  bool header_done = false;
  std::vector<std::vector<double>> data;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    fields.push_back(cur);
    if (!header_done) {
      out.columns = fields;
      header_done = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const std::string& f : fields) {
      try {
        size_t pos = 0;
        row.push_back(std::stod(f, &pos));
        if (pos != f.size() && f.find_first_not_of(" \t", pos) !=
                                   std::string::npos) {
          throw std::invalid_argument(f);
        }
      } catch (const std::exception&) {
        throw Error("CSV line " + std::to_string(line_no) +
                    ": not a number: '" + f + "'");
      }
    }
    if (row.size() != out.columns.size()) {
      throw Error("CSV line " + std::to_string(line_no) + ": expected " +
                  std::to_string(out.columns.size()) + " fields, got " +
                  std::to_string(row.size()));
    }
    data.push_back(std::move(row));
  }
  if (!header_done) throw Error("CSV: missing header row");
  out.rows.resize(static_cast<Index>(data.size()),
                  static_cast<Index>(out.columns.size()));
  for (size_t r = 0; r < data.size(); ++r) {
    for (size_t c = 0; c < data[r].size(); ++c) {
      out.rows(static_cast<Index>(r), static_cast<Index>(c)) = data[r][c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON schemas
// ---------------------------------------------------------------------------

std::string gmm_to_json(const GmmParams& params) {
  json j;
  j["weights"] = vector_to_json(params.weights);
  j["means"] = json::array();
  for (const Vector& m : params.means) j["means"].push_back(vector_to_json(m));
  j["covariances"] = json::array();
  for (const Matrix& c : params.covariances) {
    j["covariances"].push_back(matrix_to_json(c));
  }
  return j.dump(2) + "\n";
}

GmmParams gmm_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("GMM JSON: ") + e.what());
  }
  GmmParams p;
  try {
    p.weights = vector_from_json(j.at("weights"));
    for (const json& m : j.at("means")) p.means.push_back(vector_from_json(m));
    for (const json& c : j.at("covariances")) {
      p.covariances.push_back(matrix_from_json(c));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("GMM JSON: ") + e.what());
  }
  validate_params(p);
  return p;
}

std::string fit_to_json(const FitResult& fit) {
  json j = json::parse(gmm_to_json(fit.params));
  j["log_likelihood"] = fit.log_likelihood;
  j["bic"] = fit.bic;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["observations"] = fit.memberships.rows();
  return j.dump(2) + "\n";
}

std::string ambiguity_to_json(const AmbiguitySet& amb,
                              const RunManifest* manifest) {
  json j;
  j["delta"] = amb.delta;
  j["weight_region"] = {{"lower", vector_to_json(amb.weight_region.lower)},
                        {"upper", vector_to_json(amb.weight_region.upper)}};
  j["mean_regions"] = json::array();
  for (const MeanRegion& r : amb.mean_regions) {
    j["mean_regions"].push_back({{"center", vector_to_json(r.center)},
                                 {"shape", matrix_to_json(r.shape)},
                                 {"radius", r.radius}});
  }
  j["cov_regions"] = json::array();
  for (const CovRegion& r : amb.cov_regions) {
    j["cov_regions"].push_back(
        {{"center", matrix_to_json(r.center)}, {"radius", r.radius}});
  }
  if (manifest) j["manifest"] = manifest_to_json_obj(*manifest);
  return j.dump(2) + "\n";
}

AmbiguitySet ambiguity_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("ambiguity JSON: ") + e.what());
  }
  AmbiguitySet amb;
  try {
    amb.delta = j.at("delta").get<double>();
    amb.weight_region.lower =
        vector_from_json(j.at("weight_region").at("lower"));
    amb.weight_region.upper =
        vector_from_json(j.at("weight_region").at("upper"));
    amb.weight_region.delta = amb.delta;
    for (const json& r : j.at("mean_regions")) {
      amb.mean_regions.push_back({vector_from_json(r.at("center")),
                                  matrix_from_json(r.at("shape")),
                                  r.at("radius").get<double>()});
    }
    for (const json& r : j.at("cov_regions")) {
      amb.cov_regions.push_back({matrix_from_json(r.at("center")),
                                 r.at("radius").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(std::string("ambiguity JSON: ") + e.what());
  }
  validate_ambiguity(amb);
  return amb;
}

std::string moment_to_json(const MomentSet& moments) {
  json j;
  j["mean"] = vector_to_json(moments.mean);
  j["cov"] = matrix_to_json(moments.cov);
  return j.dump(2) + "\n";
}

MomentSet moment_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("moment JSON: ") + e.what());
  }
  MomentSet m;
  try {
    m.mean = vector_from_json(j.at("mean"));
    m.cov = matrix_from_json(j.at("cov"));
  } catch (const json::exception& e) {
    throw Error(std::string("moment JSON: ") + e.what());
  }
  if (m.cov.rows() != m.mean.size() || m.cov.cols() != m.mean.size()) {
    throw Error("moment JSON: covariance shape does not match the mean");
  }
  return m;
}

std::string wccvar_to_json(const WcCvarResult& res) {
  json j;
  j["cvar"] = res.cvar;
  j["var"] = res.var;
  j["worst_weights"] = vector_to_json(res.worst_weights);
  j["worst_means"] = json::array();
  for (const Vector& m : res.worst_means) {
    j["worst_means"].push_back(vector_to_json(m));
  }
  j["worst_covs"] = json::array();
  for (const Matrix& c : res.worst_covs) {
    j["worst_covs"].push_back(matrix_to_json(c));
  }
  j["component_stats"] = json::array();
  for (const ComponentStats& s : res.component_stats) {
    j["component_stats"].push_back({{"mu_bar", s.mu_bar},
                                    {"sigma_bar", s.sigma_bar},
                                    {"deterministic", s.deterministic}});
  }
  j["gradient"] = vector_to_json(res.gradient);
  return j.dump(2) + "\n";
}

std::string dispatch_to_json(const DispatchSolution& sol,
                             const RunManifest* manifest) {
  json j;
  j["p_hat"] = vector_to_json(sol.p_hat);
  j["r_up"] = vector_to_json(sol.r_up);
  j["r_dn"] = vector_to_json(sol.r_dn);
  j["alpha"] = vector_to_json(sol.alpha);
  j["flow"] = vector_to_json(sol.flow);
  j["objective"] = sol.objective;
  j["iterations"] = sol.iterations;
  j["cuts_added"] = sol.cuts_added;
  if (manifest) j["manifest"] = manifest_to_json_obj(*manifest);
  return j.dump(2) + "\n";
}

DispatchSolution dispatch_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("solution JSON: ") + e.what());
  }
  DispatchSolution s;
  try {
    s.p_hat = vector_from_json(j.at("p_hat"));
    s.r_up = vector_from_json(j.at("r_up"));
    s.r_dn = vector_from_json(j.at("r_dn"));
    s.alpha = vector_from_json(j.at("alpha"));
    s.flow = vector_from_json(j.at("flow"));
    s.objective = j.value("objective", 0.0);
    s.iterations = j.value("iterations", 0);
    s.cuts_added = j.value("cuts_added", 0);
  } catch (const json::exception& e) {
    throw Error(std::string("solution JSON: ") + e.what());
  }
  return s;
}

std::string solve_report_to_json(const SolveReport& report) {
  json j;
  switch (report.status) {
    case SolveStatus::converged: j["status"] = "converged"; break;
    case SolveStatus::dr_infeasible: j["status"] = "dr_infeasible"; break;
    case SolveStatus::iteration_limit: j["status"] = "iteration_limit"; break;
  }
  j["theta_up"] = report.thetas.theta_up;
  j["theta_dn"] = report.thetas.theta_dn;
  j["iterations"] = json::array();
  for (const IterationRecord& r : report.iterations) {
    j["iterations"].push_back({{"iter", r.iter},
                               {"objective", r.objective},
                               {"cuts_added", r.cuts_added},
                               {"max_violation", r.max_violation}});
  }
  j["final_slacks"] = json::array();
  for (const ConstraintSlack& s : report.final_slacks) {
    j["final_slacks"].push_back({{"kind", to_string(s.kind)},
                                 {"entity", s.entity},
                                 {"cvar", s.cvar},
                                 {"threshold", s.threshold},
                                 {"slack", s.slack}});
  }
  j["violated_specs"] = report.violated_specs;
  j["wall_seconds"] = report.wall_seconds;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

std::string oos_to_json(const OosReport& report, const RunManifest* manifest) {
  json j;
  j["pass"] = report.pass;
  j["constraints"] = json::array();
  for (const OosRow& r : report.rows) {
    j["constraints"].push_back({{"kind", to_string(r.kind)},
                                {"entity", r.entity},
                                {"empirical_cvar", r.empirical_cvar},
                                {"threshold", r.threshold},
                                {"violation", r.violation},
                                {"stderr", r.stderr_mw}});
  }
  if (manifest) j["manifest"] = manifest_to_json_obj(*manifest);
  return j.dump(2) + "\n";
}

std::string attach_manifest(const std::string& json_text,
                            const RunManifest& manifest) {
  json j = json::parse(json_text);
  j["manifest"] = manifest_to_json_obj(manifest);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// TOML subset
// ---------------------------------------------------------------------------

double TomlValue::number() const {
  if (!is_number()) throw Error("TOML: expected a number");
  return std::get<double>(data);
}

const std::string& TomlValue::string() const {
  if (!is_string()) throw Error("TOML: expected a string");
  return std::get<std::string>(data);
}

const std::vector<TomlValue>& TomlValue::array() const {
  if (!is_array()) throw Error("TOML: expected an array");
  return std::get<std::vector<TomlValue>>(data);
}

const TomlValue& TomlTable::at(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw Error("TOML: missing key '" + key + "'");
  return it->second;
}

namespace {

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Removes a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

TomlValue parse_value(const std::string& raw, int line_no);

TomlValue parse_array(const std::string& raw, int line_no) {
  std::vector<TomlValue> items;
  std::string body = strip(raw);
  body = body.substr(1, body.size() - 2);  // strip [ ]
  int depth = 0;
  bool in_str = false;
  std::string cur;
  for (char ch : body) {
    if (ch == '"') in_str = !in_str;
    if (!in_str) {
      if (ch == '[') ++depth;
      if (ch == ']') --depth;
      if (ch == ',' && depth == 0) {
        if (!strip(cur).empty()) items.push_back(parse_value(cur, line_no));
        cur.clear();
        continue;
      }
    }
    cur.push_back(ch);
  }
  if (!strip(cur).empty()) items.push_back(parse_value(cur, line_no));
  return TomlValue{items};
}

TomlValue parse_value(const std::string& raw, int line_no) {
  const std::string v = strip(raw);
  if (v.empty()) throw Error("TOML line " + std::to_string(line_no) +
                             ": empty value");
  if (v.front() == '[') {
    if (v.back() != ']') {
      throw Error("TOML line " + std::to_string(line_no) +
                  ": unbalanced array");
    }
    return parse_array(v, line_no);
  }
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') {
      throw Error("TOML line " + std::to_string(line_no) +
                  ": unterminated string");
    }
    return TomlValue{v.substr(1, v.size() - 2)};
  }
  if (v == "true") return TomlValue{true};
  if (v == "false") return TomlValue{false};
  try {
    size_t pos = 0;
    const double num = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return TomlValue{num};
  } catch (const std::exception&) {
    throw Error("TOML line " + std::to_string(line_no) + ": bad value '" + v +
                "'");
  }
}

}  // namespace

TomlDoc parse_toml(const std::string& text) {
  TomlDoc doc;
  TomlTable* current = &doc.root;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.size() >= 4 && line[1] == '[') {
        if (line.substr(line.size() - 2) != "]]") {
          throw Error("TOML line " + std::to_string(line_no) +
                      ": malformed table array header");
        }
        const std::string name = strip(line.substr(2, line.size() - 4));
        doc.table_arrays[name].emplace_back();
        current = &doc.table_arrays[name].back();
      } else {
        if (line.back() != ']') {
          throw Error("TOML line " + std::to_string(line_no) +
                      ": malformed table header");
        }
        const std::string name = strip(line.substr(1, line.size() - 2));
        current = &doc.tables[name];
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("TOML line " + std::to_string(line_no) +
                  ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    // Arrays may continue on following lines until brackets balance.
    auto bracket_balance = [](const std::string& s) {
      int depth = 0;
      bool in_str = false;
      for (char ch : s) {
        if (ch == '"') in_str = !in_str;
        if (!in_str) {
          if (ch == '[') ++depth;
          if (ch == ']') --depth;
        }
      }
      return depth;
    };
    while (bracket_balance(value) > 0 && std::getline(in, line)) {
      ++line_no;
      value += " " + strip(strip_comment(line));
    }
    current->values.emplace(key, parse_value(value, line_no));
  }
  return doc;
}

SynthSpec synth_spec_from_toml(const std::string& text) {
  const TomlDoc doc = parse_toml(text);
  SynthSpec spec;
  auto farms_it = doc.table_arrays.find("farms");
  if (farms_it == doc.table_arrays.end() || farms_it->second.empty()) {
    throw Error("generator spec: needs at least one [[farms]] entry");
  }
  for (size_t i = 0; i < farms_it->second.size(); ++i) {
    const TomlTable& farm = farms_it->second[i];
    const std::string dist = farm.at("dist").string();
    std::vector<double> params;
    for (const TomlValue& v : farm.at("params").array()) {
      params.push_back(v.number());
    }
    const std::string where = "farms[" + std::to_string(i) + "]";
    if (dist == "normal") {
      if (params.size() != 2 || params[1] <= 0.0) {
        throw Error(where + ": normal needs params = [mean, sd>0]");
      }
      spec.marginals.push_back(NormalMarginal{params[0], params[1]});
    } else if (dist == "uniform") {
      if (params.size() != 2 || params[0] >= params[1]) {
        throw Error(where + ": uniform needs params = [lo, hi] with lo < hi");
      }
      spec.marginals.push_back(UniformMarginal{params[0], params[1]});
    } else if (dist == "beta") {
      if (params.size() != 4 || params[0] <= 0.0 || params[1] <= 0.0 ||
          params[3] <= 0.0) {
        throw Error(where +
                    ": beta needs params = [alpha>0, beta>0, shift, scale>0]");
      }
      spec.marginals.push_back(
          BetaMarginal{params[0], params[1], params[2], params[3]});
    } else if (dist == "gmm2") {
      if (params.size() != 6 || params[2] <= 0.0 || params[5] <= 0.0 ||
          params[0] < 0.0 || params[3] < 0.0 ||
          params[0] + params[3] <= 0.0) {
        throw Error(where +
                    ": gmm2 needs params = [w1, m1, s1>0, w2, m2, s2>0]");
      }
      GmmMarginal g;
      g.weights.resize(2);
      g.means.resize(2);
      g.sds.resize(2);
      g.weights << params[0], params[3];
      g.weights /= g.weights.sum();
      g.means << params[1], params[4];
      g.sds << params[2], params[5];
      spec.marginals.push_back(g);
    } else {
      throw Error(where + ": unknown dist '" + dist +
                  "' (normal|uniform|beta|gmm2)");
    }
    spec.names.push_back(farm.has("name") ? farm.at("name").string()
                                          : "w" + std::to_string(i + 1));
  }
  const Index w = static_cast<Index>(spec.marginals.size());
  spec.correlation = Matrix::Identity(w, w);
  auto corr_it = doc.tables.find("correlation");
  if (corr_it != doc.tables.end()) {
    const auto& rows = corr_it->second.at("matrix").array();
    if (static_cast<Index>(rows.size()) != w) {
      throw Error("correlation matrix must be W x W");
    }
    for (Index r = 0; r < w; ++r) {
      const auto& cols = rows[r].array();
      if (static_cast<Index>(cols.size()) != w) {
        throw Error("correlation matrix must be W x W");
      }
      for (Index c = 0; c < w; ++c) {
        spec.correlation(r, c) = cols[c].number();
      }
    }
  }
  return spec;
}

}  // namespace dgopf
