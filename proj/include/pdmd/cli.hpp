#pragma once

#include "pdmd/config.hpp"
#include "pdmd/distill.hpp"

namespace pdmd::cli {

// Builders shared by the CLI and tests. All read the flat config keys
// documented in the README.
ToyPrior prior_from_config(const KvConfig& cfg);
NoiseSchedule schedule_from_config(const KvConfig& cfg);
NetConfig net_from_config(const KvConfig& cfg, int dim);
PhasePlan plan_from_config(const KvConfig& cfg);
TrainerConfig trainer_from_config(const KvConfig& cfg);
PretrainConfig pretrain_from_config(const KvConfig& cfg, int dim);

// Commands return the process exit code: 0 iff every internal gate passed.
int cmd_train_teacher(const KvConfig& cfg);
int cmd_toy_fig3(const KvConfig& cfg);
int cmd_distill(const KvConfig& cfg);
int cmd_ablate(const KvConfig& cfg);
int cmd_report(const std::filesystem::path& report_path);

int run_cli(int argc, const char* const* argv);

// Honors the PDMD_THREADS cap; called once per process.
void init_threads();

}  // namespace pdmd::cli
