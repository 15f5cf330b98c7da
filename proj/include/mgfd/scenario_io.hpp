#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mgfd/scenario.hpp"

namespace mgfd::scenario {

inline constexpr const char* kVersion = "1.0.0";

// Bundled scenarios: "actuator", "case1", "case2".
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

ScenarioConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& cfg);
ScenarioConfig load_config(const std::string& path);

// Feasibility checks; empty when the config is usable.
std::vector<std::string> validate(const ScenarioConfig& cfg);

std::string config_hash(const ScenarioConfig& cfg);

nlohmann::json design_to_json(const synthesis::FilterDesign& d);

struct WriteOptions {
    bool plots = true;
};

void write_run(const std::string& dir, const ScenarioConfig& cfg, const std::vector<DgDesign>& designs,
               const RunResult& run, const WriteOptions& opt);
void write_monte_carlo(const std::string& dir, const ScenarioConfig& cfg, const std::vector<DgDesign>& designs,
                       const MonteCarloSummary& mc, const WriteOptions& opt);
void write_designs(const std::string& dir, const std::vector<DgDesign>& designs);

}  // namespace mgfd::scenario
