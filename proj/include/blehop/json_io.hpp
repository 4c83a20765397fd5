#pragma once

// JSON forms of the domain types. Durations in configuration documents are
// microseconds; reports and forecasts carry nanoseconds.

#include "blehop/predict.hpp"
#include "blehop/reconstruct.hpp"
#include "blehop/simulator.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace blehop {

nlohmann::json params_to_json(const ConnectionParams& params);
ConnectionParams params_from_json(const nlohmann::json& j);

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& config);

nlohmann::json report_to_json(const EstimationReport& report);
EstimationReport report_from_json(const nlohmann::json& j);

nlohmann::json forecast_to_json(const Forecast& forecast);
Forecast forecast_from_json(const nlohmann::json& j);

nlohmann::json eval_to_json(const EvalReport& eval);
EvalReport eval_from_json(const nlohmann::json& j);

/// Two columns, abs_error_ns and probability (P(|error| > abs_error_ns)).
std::string eccdf_csv(const EvalReport& eval);

/// Hop sequence dump: one row per event with unmapped and used channel.
struct HopgenRequest {
    ConnectionParams params;
    std::int64_t start_k = 0;
    std::int64_t count = 0;
};

HopgenRequest hopgen_from_json(const nlohmann::json& j);
std::string hopgen_csv(const HopgenRequest& request);

} // namespace blehop
