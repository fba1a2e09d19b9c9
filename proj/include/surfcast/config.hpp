#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "surfcast/forecast.hpp"
#include "surfcast/model.hpp"
#include "surfcast/ocean.hpp"
#include "surfcast/training.hpp"

namespace surfcast {

// One JSON document drives every command; unknown keys are rejected with the
// offending path.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    WorldConfig world;
    ObservationConfig observations;
    ModelConfig model;
    std::vector<StageConfig> stages;
    TrainingOptions training;
    ForecastOptions tile;
    std::string eval_region = "Mediterranean";
    std::vector<int> issue_days;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace surfcast
