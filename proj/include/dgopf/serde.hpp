// File formats: JSON schemas for parameters/results, CSV sample sets, the
// TOML-subset generator spec, content hashing and run manifests.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dgopf/ambiguity.hpp"
#include "dgopf/gmm.hpp"
#include "dgopf/opf.hpp"
#include "dgopf/oracle.hpp"

namespace dgopf {

inline constexpr const char* kToolVersion = "0.1.0";

// --- files ---
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// --- hashing / manifest ---
std::string sha256_hex(const std::string& bytes);

struct RunManifest {
  std::string command;
  std::string config_hash;  // sha256 of the flattened configuration
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  double wall_seconds = 0.0;
};

/// Manifest as stable key/value lines for CSV comment headers. Excludes
/// wall_seconds so byte-identical reruns stay byte-identical.
std::vector<std::string> manifest_comment_lines(const RunManifest& manifest);

// --- CSV (SampleSet / ScenarioSet share one layout) ---
std::string samples_to_csv(const Matrix& rows,
                           const std::vector<std::string>& columns,
                           const std::vector<std::string>& comments = {});
SampleSet samples_from_csv(const std::string& text);

// --- JSON schemas ---
std::string gmm_to_json(const GmmParams& params);
GmmParams gmm_from_json(const std::string& text);

std::string fit_to_json(const FitResult& fit);

std::string ambiguity_to_json(const AmbiguitySet& amb,
                              const RunManifest* manifest = nullptr);
AmbiguitySet ambiguity_from_json(const std::string& text);

std::string moment_to_json(const MomentSet& moments);
MomentSet moment_from_json(const std::string& text);

std::string wccvar_to_json(const WcCvarResult& res);

std::string dispatch_to_json(const DispatchSolution& sol,
                             const RunManifest* manifest = nullptr);
DispatchSolution dispatch_from_json(const std::string& text);

std::string solve_report_to_json(const SolveReport& report);

std::string oos_to_json(const OosReport& report,
                        const RunManifest* manifest = nullptr);

/// Appends a "manifest" object to an existing JSON document string.
std::string attach_manifest(const std::string& json_text,
                            const RunManifest& manifest);

// --- TOML subset ---
// Supported: [table], [[array-of-tables]], key = value with numbers,
// booleans, basic "strings" and (nested) arrays; # comments. Arrays may
// span lines until brackets balance.
struct TomlValue {
  std::variant<double, bool, std::string, std::vector<TomlValue>> data;

  bool is_number() const { return std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_array() const {
    return std::holds_alternative<std::vector<TomlValue>>(data);
  }
  double number() const;
  const std::string& string() const;
  const std::vector<TomlValue>& array() const;
};

struct TomlTable {
  std::map<std::string, TomlValue> values;
  bool has(const std::string& key) const { return values.count(key) > 0; }
  const TomlValue& at(const std::string& key) const;
};

struct TomlDoc {
  TomlTable root;
  std::map<std::string, TomlTable> tables;
  std::map<std::string, std::vector<TomlTable>> table_arrays;
};

TomlDoc parse_toml(const std::string& text);

/// Reads a generator spec: [[farms]] entries with dist/params and an optional
/// [correlation] matrix (identity when absent).
SynthSpec synth_spec_from_toml(const std::string& text);

}  // namespace dgopf
