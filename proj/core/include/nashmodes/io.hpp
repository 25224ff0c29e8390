#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nashmodes/certificate.hpp"
#include "nashmodes/game.hpp"
#include "nashmodes/planner.hpp"
#include "nashmodes/refiner.hpp"
#include "nashmodes/scenarios.hpp"

namespace nashmodes {

using Json = nlohmann::json;

inline constexpr const char* kFormatName = "nashmodes";
inline constexpr int kFormatVersion = 1;

/// Matrices: {"diag": [...]} when diagonal, otherwise a list of rows. Both forms load.
Json matrix_to_json(const Mat& M);
Mat matrix_from_json(const Json& j);
Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j);

Json to_json(const GameSpec& game);
GameSpec game_from_json(const Json& j);

Json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_config_from_json(const Json& j);

Json to_json(const JointTrajectory& traj);
JointTrajectory trajectory_from_json(const Json& j);

Json to_json(const RefinedEquilibrium& eq);
RefinedEquilibrium equilibrium_from_json(const Json& j);

Json to_json(const GneCertificate& cert);

Json to_json(const FilterConfig& cfg);
Json to_json(const ClusterConfig& cfg);
Json to_json(const RefinerConfig& cfg);
Json to_json(const PipelineConfig& cfg);
Json to_json(const BaselineConfig& cfg);
Json to_json(const MpcConfig& cfg);

/// 64-bit FNV-1a of the compact JSON text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
std::string config_hash(const Json& config);
std::string game_hash(const GameSpec& game);

struct Provenance {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Self-describing document: {"format", "version", "kind", ...}.
Json make_document(const std::string& kind);
/// Throws ConfigError unless the header names this format, a supported version, and `kind`.
void check_document(const Json& doc, const std::string& kind);
std::string document_kind(const Json& doc);

Json equilibrium_document(const GameSpec& game, const EquilibriumSet& set, const Provenance& provenance,
                          const Json& config = Json::object());

struct EquilibriumDocument {
  GameSpec game;
  EquilibriumSet set;
  Provenance provenance;
};

EquilibriumDocument read_equilibrium_document(const Json& doc);

Json closed_loop_document(const GameSpec& game, const ClosedLoopLog& log, const Json& config = Json::object());

Json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const Json& doc);

/// Output directory from NASHMODES_OUT_DIR, else `fallback`.
std::string default_output_dir(const std::string& fallback = ".");

/// Comma-separated table. Cells are kept as text so parse and write round-trip exactly.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string write_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

/// One row per (mode, step, agent) with the agent's state and control.
CsvTable equilibrium_table(const EquilibriumDocument& doc);
/// One row per step with both agents' positions, belief distances, and lock state.
CsvTable closed_loop_table(const Json& closed_loop_doc);

}  // namespace nashmodes
