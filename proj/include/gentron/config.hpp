#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gentron/guidance.hpp"
#include "gentron/model.hpp"
#include "gentron/schedule.hpp"
#include "gentron/trainer.hpp"

namespace gentron {

// One JSON file drives a run; every section is optional and defaulted, any
// unknown key anywhere is rejected so hyperparameter typos fail loudly.
struct RunConfig {
    GenTronConfig model;
    ScheduleConfig schedule;
    TrainConfig train;
    GuidanceConfig guidance;
    std::string data_dir;
    std::string video_data_dir;
    std::string out_dir = "out";
    std::optional<uint64_t> seed; // set only when the file provides one
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

std::string model_config_to_json(const GenTronConfig& cfg);
GenTronConfig model_config_from_json(const std::string& json_text);

// Precedence: explicit flag > config file > GENTRON_SEED env > 0.
uint64_t resolve_seed(std::optional<uint64_t> flag_seed, std::optional<uint64_t> config_seed);

} // namespace gentron
