#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "texadiff/degrade.hpp"
#include "texadiff/denoiser.hpp"
#include "texadiff/diffusion.hpp"
#include "texadiff/predictor.hpp"
#include "texadiff/rtdm.hpp"

namespace texadiff {

struct ScheduleConfig {
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

// Top-level `seed` plus sections [rtdm], [degrade], [train], [sample], [predictor].
// Every field except the seed has a default; unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    RtdmConfig rtdm;
    DegradeConfig degrade;
    SceneDistribution scenes;
    int n_scenes = 8;
    TrainConfig train;
    DenoiserConfig model;
    ScheduleConfig schedule;
    TaSamplerConfig sample;
    double sample_tau = 0.35;
    PredictorTrainConfig predictor;
    PredictorConfig predictor_model;

    // Seeds of the individual stages, all derived from `seed`.
    std::uint64_t stage_seed(int stage) const;
};

RunConfig parse_run_config(const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace texadiff
