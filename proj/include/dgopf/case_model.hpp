// Power-system case data: ingestion, validation and shift-factor matrices.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgopf/types.hpp"

namespace dgopf {

struct Bus {
  int id = 0;
  bool is_slack = false;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;                // per-unit, > 0
  std::optional<double> flow_limit;      // MW; absent = unlimited
};

struct Generator {
  int bus = 0;
  double cost_c2 = 0.0;  // $/MW^2
  double cost_c1 = 0.0;  // $/MW
  double cost_c0 = 0.0;  // $
  double p_min = 0.0;    // MW
  double p_max = 0.0;    // MW
  double r_up_max = 0.0;  // MW
  double r_dn_max = 0.0;  // MW
  double c_up = 0.0;      // $/MW
  double c_dn = 0.0;      // $/MW
};

struct Load {
  int bus = 0;
  double demand = 0.0;  // MW
};

struct WindFarm {
  int bus = 0;
  double forecast = 0.0;  // MW, central forecast
  std::string name;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;  // in-service branches only
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<WindFarm> wind_farms;

  Index slack_index() const;          // index into buses
  Index bus_index(int bus_id) const;  // -1 if unknown
};

/// Checks the NetworkCase invariants (single slack, connectivity, known bus
/// ids, nonnegative quantities). Throws Error with the offending entity.
void validate_case(const NetworkCase& nc);

/// Fill-in values for fields the MATPOWER format does not carry.
struct MatpowerDefaults {
  double reserve_limit_fraction = 0.25;  // R_max = fraction * (p_max - p_min)
  double c_up = 5.0;                     // $/MW
  double c_dn = 5.0;                     // $/MW
};

/// Parses a MATPOWER version-2 case file (mpc.baseMVA, mpc.bus, mpc.gen,
/// mpc.branch, mpc.gencost; polynomial costs of degree <= 2). Out-of-service
/// branches are dropped; a rateA of 0 means the line is unlimited.
NetworkCase parse_matpower(const std::string& text,
                           const MatpowerDefaults& defaults = {});

/// Parses the JSON case schema (adds wind farms and reserve data that
/// MATPOWER lacks). Errors carry a JSON-pointer-style location.
NetworkCase parse_json_case(const std::string& text);

/// Serializes a NetworkCase to the JSON case schema (pretty-printed).
std::string case_to_json(const NetworkCase& nc);

/// Branch-flow sensitivities to entity injections (dimensionless).
struct PtdfSet {
  Matrix h_bus;   // L x |buses|, slack column identically zero
  Matrix h_gen;   // L x G
  Matrix h_wind;  // L x W
  Matrix h_load;  // L x |loads|
};

/// Dense PTDF via one factorization of the reduced susceptance matrix.
/// Throws Error if the reduced matrix is singular.
PtdfSet build_ptdf(const NetworkCase& nc);

}  // namespace dgopf
