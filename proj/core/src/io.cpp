#include "nashmodes/io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nashmodes/errors.hpp"

namespace nashmodes {

namespace {

bool is_diagonal(const Mat& M) {
  if (M.rows() != M.cols()) return false;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      if (i != j && M(i, j) != 0.0) return false;
  return true;
}

Json vectors_to_json(const std::vector<Vec>& vs) {
  Json out = Json::array();
  for (const auto& v : vs) out.push_back(vector_to_json(v));
  return out;
}

std::vector<Vec> vectors_from_json(const Json& j) {
  std::vector<Vec> out;
  for (const auto& v : j) out.push_back(vector_from_json(v));
  return out;
}

Json params_to_json(const ParamMap& params) {
  Json out = Json::object();
  for (const auto& [k, v] : params) out[k] = v;
  return out;
}

ParamMap params_from_json(const Json& j) {
  ParamMap out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<std::vector<double>>();
  return out;
}

Json vec2(const Eigen::Vector2d& v) { return Json::array({v.x(), v.y()}); }
Eigen::Vector2d vec2_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

Json matrix_to_json(const Mat& M) {
  if (is_diagonal(M) && M.rows() > 0) return Json{{"diag", vector_to_json(M.diagonal())}};
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const Json& j) {
  if (j.is_object()) {
    const Vec d = vector_from_json(j.at("diag"));
    return d.asDiagonal();
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Mat M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols) throw ConfigError("matrix rows differ in length");
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = j.at(i).at(c).get<double>();
  }
  return M;
}

Json vector_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vector_from_json(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json to_json(const GameSpec& game) {
  Json agents = Json::array();
  for (const auto& a : game.agents) {
    agents.push_back({{"name", a.name},
                      {"state_dim", a.state_dim},
                      {"input_dim", a.input_dim},
                      {"Q", matrix_to_json(a.Q)},
                      {"Qtau", matrix_to_json(a.Qtau)},
                      {"R", matrix_to_json(a.R)},
                      {"reference", vectors_to_json(a.reference)},
                      {"dynamics", a.dynamics_id},
                      {"dynamics_params", params_to_json(a.dynamics_params)}});
  }
  return {{"horizon", game.horizon},
          {"dt", game.dt},
          {"constraints", game.constraint_id},
          {"constraint_params", params_to_json(game.constraint_params)},
          {"x0", vector_to_json(game.x0)},
          {"agents", std::move(agents)}};
}

GameSpec game_from_json(const Json& j) {
  return guarded("game", [&] {
    GameSpec game;
    game.horizon = j.at("horizon").get<int>();
    game.dt = j.at("dt").get<double>();
    game.constraint_id = j.value("constraints", std::string("none"));
    if (j.contains("constraint_params")) game.constraint_params = params_from_json(j.at("constraint_params"));
    game.x0 = vector_from_json(j.at("x0"));
    for (const auto& ja : j.at("agents")) {
      AgentSpec a;
      a.name = ja.value("name", std::string());
      a.state_dim = ja.at("state_dim").get<int>();
      a.input_dim = ja.at("input_dim").get<int>();
      a.Q = matrix_from_json(ja.at("Q"));
      a.Qtau = matrix_from_json(ja.at("Qtau"));
      a.R = matrix_from_json(ja.at("R"));
      a.reference = vectors_from_json(ja.at("reference"));
      a.dynamics_id = ja.at("dynamics").get<std::string>();
      if (ja.contains("dynamics_params")) a.dynamics_params = params_from_json(ja.at("dynamics_params"));
      game.agents.push_back(std::move(a));
    }
    validate(game);
    return game;
  });
}

Json to_json(const ScenarioConfig& cfg) {
  return {{"kind", to_string(cfg.kind)},
          {"start", {vec2(cfg.start[0]), vec2(cfg.start[1])}},
          {"goal", {vec2(cfg.goal[0]), vec2(cfg.goal[1])}},
          {"r_col", cfg.r_col},
          {"r_obs", cfg.r_obs},
          {"x_obs", vec2(cfg.x_obs)},
          {"u_bound", {vec2(cfg.u_bound[0]), vec2(cfg.u_bound[1])}},
          {"horizon", cfg.horizon},
          {"dt", cfg.dt},
          {"stage_scale", cfg.stage_scale},
          {"terminal_scale", cfg.terminal_scale},
          {"q_base", vector_to_json(cfg.q_base)},
          {"r_diag", vec2(cfg.r_diag)}};
}

ScenarioConfig scenario_config_from_json(const Json& j) {
  return guarded("scenario", [&] {
    ScenarioConfig cfg = scenario_preset(j.at("kind").get<std::string>());
    if (j.contains("start")) cfg.start = {vec2_from(j["start"][0]), vec2_from(j["start"][1])};
    if (j.contains("goal")) cfg.goal = {vec2_from(j["goal"][0]), vec2_from(j["goal"][1])};
    cfg.r_col = j.value("r_col", cfg.r_col);
    cfg.r_obs = j.value("r_obs", cfg.r_obs);
    if (j.contains("x_obs")) cfg.x_obs = vec2_from(j["x_obs"]);
    if (j.contains("u_bound")) cfg.u_bound = {vec2_from(j["u_bound"][0]), vec2_from(j["u_bound"][1])};
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.dt = j.value("dt", cfg.dt);
    cfg.stage_scale = j.value("stage_scale", cfg.stage_scale);
    cfg.terminal_scale = j.value("terminal_scale", cfg.terminal_scale);
    if (j.contains("q_base")) cfg.q_base = vector_from_json(j["q_base"]);
    if (j.contains("r_diag")) cfg.r_diag = vec2_from(j["r_diag"]);
    validate(cfg);
    return cfg;
  });
}

Json to_json(const JointTrajectory& traj) {
  return {{"states", vectors_to_json(traj.states)}, {"controls", vectors_to_json(traj.controls)}};
}

JointTrajectory trajectory_from_json(const Json& j) {
  return guarded("trajectory", [&] {
    JointTrajectory traj;
    traj.states = vectors_from_json(j.at("states"));
    traj.controls = vectors_from_json(j.at("controls"));
    if (traj.states.size() != traj.controls.size()) throw ConfigError("trajectory states and controls differ in length");
    return traj;
  });
}

Json to_json(const RefinedEquilibrium& eq) {
  return {{"trajectory", to_json(eq.trajectory)},
          {"potential", eq.potential},
          {"max_violation", eq.max_violation},
          {"stationarity", eq.stationarity},
          {"converged", eq.converged},
          {"iterations", eq.iterations},
          {"outer_iterations", eq.outer_iterations},
          {"multipliers", vectors_to_json(eq.multipliers)},
          {"merit_trace", eq.merit_trace},
          {"merit_monotone", eq.merit_monotone},
          {"warm_start_id", eq.warm_start_id}};
}

RefinedEquilibrium equilibrium_from_json(const Json& j) {
  return guarded("equilibrium", [&] {
    RefinedEquilibrium eq;
    eq.trajectory = trajectory_from_json(j.at("trajectory"));
    eq.potential = j.at("potential").get<double>();
    eq.max_violation = j.value("max_violation", 0.0);
    eq.stationarity = j.value("stationarity", std::vector<double>{});
    eq.converged = j.value("converged", false);
    eq.iterations = j.value("iterations", 0);
    eq.outer_iterations = j.value("outer_iterations", 0);
    if (j.contains("multipliers")) eq.multipliers = vectors_from_json(j["multipliers"]);
    eq.merit_trace = j.value("merit_trace", std::vector<double>{});
    eq.merit_monotone = j.value("merit_monotone", true);
    eq.warm_start_id = j.value("warm_start_id", -1);
    return eq;
  });
}

Json to_json(const GneCertificate& cert) {
  Json agents = Json::array();
  for (const auto& a : cert.agents)
    agents.push_back({{"cost", a.cost},
                      {"worst_improvement", a.worst_improvement},
                      {"feasible_samples", a.feasible_samples},
                      {"stationarity", a.stationarity},
                      {"active_constraints", a.active_constraints}});
  return {{"radius", cert.radius},
          {"samples", cert.samples},
          {"improvement_tol", cert.improvement_tol},
          {"stationarity_tol", cert.stationarity_tol},
          {"max_violation", cert.max_violation},
          {"feasible", cert.feasible},
          {"agents", std::move(agents)},
          {"passed", cert.passed},
          {"detail", cert.detail}};
}

Json to_json(const FilterConfig& cfg) {
  return {{"particles", cfg.particles},
          {"resample", cfg.resample == ResamplePolicy::Never ? "never" : "ess_threshold"},
          {"ess_ratio", cfg.ess_ratio},
          {"seed", cfg.seed},
          {"ukf", {{"alpha", cfg.ukf.alpha}, {"beta", cfg.ukf.beta}, {"kappa", cfg.ukf.kappa}, {"jitter", cfg.ukf.jitter}}},
          {"init_spread", cfg.init_spread}};
}

Json to_json(const ClusterConfig& cfg) {
  return {{"linkage", to_string(cfg.linkage)},
          {"cut", cfg.cut},
          {"min_size", cfg.min_size},
          {"basis", cfg.basis == DistanceBasis::Joint ? "joint" : "per_agent"}};
}

Json to_json(const RefinerConfig& cfg) {
  return {{"outer_iterations", cfg.outer_iterations}, {"inner_iterations", cfg.inner_iterations},
          {"penalty_growth", cfg.penalty_growth},     {"penalty_init", cfg.penalty_init},
          {"constraint_tol", cfg.constraint_tol},     {"stationarity_tol", cfg.stationarity_tol},
          {"fd_step", cfg.fd_step}};
}

Json to_json(const PipelineConfig& cfg) {
  return {{"filter", to_json(cfg.filter)},
          {"cluster", to_json(cfg.cluster)},
          {"refiner", to_json(cfg.refiner)},
          {"alpha", cfg.barrier.alpha},
          {"slack_weight", cfg.slack_weight},
          {"dedup_distance", cfg.dedup_distance},
          {"guide_iterations", cfg.guide_iterations}};
}

Json to_json(const BaselineConfig& cfg) {
  return {{"target_modes", cfg.target_modes},
          {"budget", cfg.budget},
          {"sigma", cfg.sigma},
          {"seed", cfg.seed},
          {"dedup_distance", cfg.dedup_distance}};
}

Json to_json(const MpcConfig& cfg) {
  return {{"horizon_s", cfg.horizon_s},
          {"dt", cfg.dt},
          {"replan_period", cfg.replan_period},
          {"total_s", cfg.total_s},
          {"tentative_speed_cap", cfg.tentative_speed_cap},
          {"fallback_violation", cfg.fallback_violation},
          {"partner_effort_scale", cfg.partner_effort_scale},
          {"collision_margin", cfg.collision_margin},
          {"ego", cfg.ego},
          {"partner", cfg.partner}};
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

std::string config_hash(const Json& config) { return fnv1a_hex(config.dump()); }
std::string game_hash(const GameSpec& game) { return fnv1a_hex(to_json(game).dump()); }

Json make_document(const std::string& kind) {
  return {{"format", kFormatName}, {"version", kFormatVersion}, {"kind", kind}};
}

std::string document_kind(const Json& doc) {
  if (!doc.is_object() || doc.value("format", std::string()) != kFormatName)
    throw ConfigError("not a nashmodes document");
  return doc.value("kind", std::string());
}

void check_document(const Json& doc, const std::string& kind) {
  const std::string found = document_kind(doc);
  const int version = doc.value("version", 0);
  if (version < 1 || version > kFormatVersion) throw ConfigError("unsupported document version " + std::to_string(version));
  if (found != kind) throw ConfigError("expected a '" + kind + "' document, found '" + found + "'");
}

Json equilibrium_document(const GameSpec& game, const EquilibriumSet& set, const Provenance& provenance,
                          const Json& config) {
  Json doc = make_document("equilibrium_set");
  doc["provenance"] = {{"scenario", provenance.scenario}, {"seed", provenance.seed}, {"config_hash", provenance.config_hash}};
  doc["config"] = config;
  doc["game"] = to_json(game);
  doc["scenario_hash"] = set.scenario_hash;
  doc["clusters"] = set.clusters;
  doc["refinements"] = set.refinements;
  doc["diagnostics"] = set.diagnostics;
  // Wall times are stored apart from the deterministic payload.
  doc["timings"] = {{"filter", set.timings.filter},
                    {"cluster", set.timings.cluster},
                    {"refine", set.timings.refine},
                    {"dedup", set.timings.dedup}};
  Json modes = Json::array();
  for (const auto& eq : set.modes) modes.push_back(to_json(eq));
  doc["modes"] = std::move(modes);
  return doc;
}

EquilibriumDocument read_equilibrium_document(const Json& doc) {
  check_document(doc, "equilibrium_set");
  return guarded("equilibrium document", [&] {
    EquilibriumDocument out;
    out.game = game_from_json(doc.at("game"));
    const auto& prov = doc.at("provenance");
    out.provenance.scenario = prov.value("scenario", std::string());
    out.provenance.seed = prov.value("seed", std::uint64_t{0});
    out.provenance.config_hash = prov.value("config_hash", std::string());
    out.set.scenario_hash = doc.value("scenario_hash", std::string());
    out.set.clusters = doc.value("clusters", 0);
    out.set.refinements = doc.value("refinements", 0);
    out.set.diagnostics = doc.value("diagnostics", std::vector<std::string>{});
    if (doc.contains("timings")) {
      const auto& t = doc["timings"];
      out.set.timings.filter = t.value("filter", 0.0);
      out.set.timings.cluster = t.value("cluster", 0.0);
      out.set.timings.refine = t.value("refine", 0.0);
      out.set.timings.dedup = t.value("dedup", 0.0);
    }
    for (const auto& m : doc.at("modes")) out.set.modes.push_back(equilibrium_from_json(m));
    return out;
  });
}

Json closed_loop_document(const GameSpec& game, const ClosedLoopLog& log, const Json& config) {
  Json doc = make_document("closed_loop");
  doc["config"] = config;
  doc["game"] = to_json(game);
  doc["states"] = vectors_to_json(log.states);
  doc["ego_controls"] = vectors_to_json(log.ego_controls);
  Json beliefs = Json::array();
  for (const auto& b : log.beliefs)
    beliefs.push_back({{"d", b.distances}, {"locked", b.locked}, {"dstar", b.dstar}});
  doc["beliefs"] = std::move(beliefs);
  doc["lock_step"] = log.lock_step;
  doc["locked_mode"] = log.locked_mode;
  doc["min_distance"] = log.min_distance;
  doc["fallbacks"] = log.fallbacks;
  doc["tick_seconds"] = log.tick_seconds;
  return doc;
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void save_json_file(const std::string& path, const Json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << doc.dump(1) << "\n";
}

std::string default_output_dir(const std::string& fallback) {
  const char* env = std::getenv("NASHMODES_OUT_DIR");
  return env && *env ? std::string(env) : fallback;
}

std::string write_csv(const CsvTable& table) {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out += ',';
      out += cells[k];
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size()) throw ConfigError("CSV row width differs from the header");
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

CsvTable equilibrium_table(const EquilibriumDocument& doc) {
  CsvTable table;
  table.header = {"mode", "potential", "t", "agent", "p", "q", "theta", "nu", "omega", "dnu", "domega"};
  const auto blocks = agent_blocks(doc.game);
  for (std::size_t k = 0; k < doc.set.modes.size(); ++k) {
    const auto& eq = doc.set.modes[k];
    for (std::size_t t = 0; t < eq.trajectory.states.size(); ++t) {
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        std::vector<std::string> row{std::to_string(k), format_number(eq.potential), std::to_string(t),
                                     std::to_string(i)};
        for (int s = 0; s < 5; ++s)
          row.push_back(s < b.state_dim ? format_number(eq.trajectory.states[t][b.state_offset + s]) : "");
        for (int u = 0; u < 2; ++u)
          row.push_back(u < b.input_dim ? format_number(eq.trajectory.controls[t][b.input_offset + u]) : "");
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

CsvTable closed_loop_table(const Json& doc) {
  check_document(doc, "closed_loop");
  const GameSpec game = game_from_json(doc.at("game"));
  const auto blocks = agent_blocks(game);
  CsvTable table;
  table.header = {"t"};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    table.header.push_back("p" + std::to_string(i));
    table.header.push_back("q" + std::to_string(i));
  }
  const auto& beliefs = doc.at("beliefs");
  const std::size_t modes = beliefs.empty() ? 0 : beliefs.at(0).at("d").size();
  for (std::size_t m = 0; m < modes; ++m) table.header.push_back("d" + std::to_string(m));
  table.header.push_back("locked");
  const auto states = vectors_from_json(doc.at("states"));
  for (std::size_t t = 0; t < states.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (const auto& b : blocks) {
      row.push_back(format_number(states[t][b.state_offset]));
      row.push_back(format_number(states[t][b.state_offset + 1]));
    }
    // Beliefs are recorded after each step; step 0 has none.
    if (t >= 1 && t - 1 < beliefs.size()) {
      const auto& b = beliefs[t - 1];
      for (std::size_t m = 0; m < modes; ++m) row.push_back(format_number(b.at("d").at(m).get<double>()));
      row.push_back(std::to_string(b.at("locked").get<int>()));
    } else {
      for (std::size_t m = 0; m < modes; ++m) row.push_back("");
      row.push_back("-1");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace nashmodes
