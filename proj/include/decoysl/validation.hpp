#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "decoysl/neuralnet.hpp"
#include "decoysl/slenv.hpp"

namespace decoysl::validation {

struct SuiteOptions {
  std::uint64_t seed = 2024;
  std::size_t mc_cases = 20;
  std::size_t mc_samples = 100000;
  std::size_t cor_cases = 10;
  std::size_t grid = 1000;
  std::size_t split_cases = 20;
  std::size_t fd_params = 20;
  double fd_step = 1e-6;
  std::size_t mask_episodes = 10000;
  std::size_t ledger_episodes = 50;
  // Negative control: perturbs the one-deceiver power closed form before checking.
  bool corrupt = false;

  static SuiteOptions quick();
};

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  nlohmann::json data;
  double seconds = 0.0;
};

CheckResult check_capture_mc(const SuiteOptions& o);
CheckResult check_powers_one_deceiver(const SuiteOptions& o);
CheckResult check_powers_zero_energy(const SuiteOptions& o);
CheckResult check_powers_interference_free(const SuiteOptions& o);
CheckResult check_powers_equal_split(const SuiteOptions& o);
CheckResult check_split_invisibility(const SuiteOptions& o);
// net: actor, critic, icm_extractor, icm_forward, icm_inverse
CheckResult check_gradients(const std::string& net, const SuiteOptions& o);
CheckResult check_mask_and_rewards(const SuiteOptions& o);
CheckResult check_ledger(const SuiteOptions& o);

const std::vector<std::string>& check_names();
CheckResult run_check(const std::string& name, const SuiteOptions& o);
std::vector<CheckResult> run_suite(const SuiteOptions& o, const std::vector<std::string>& names = check_names());
nlohmann::json suite_report(const std::vector<CheckResult>& results);

// Central-difference check of d loss / d param on randomly chosen entries.
struct FdReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::vector<nlohmann::json> samples;
};
FdReport fd_check(nn::ParamStore& ps, const std::vector<std::size_t>& ids,
                  const std::function<nn::Var(nn::Tape&)>& loss, std::size_t count, double step, Rng& rng);

// Scenario, model and env config of the reference desk setup (U=6, E=2, S=4).
struct Reference {
  Scenario scenario;
  ModelSpec model;
  EnvConfig env;
};
Reference reference_setup(std::uint64_t scenario_seed = 7, std::size_t devices = 6, std::size_t eavesdroppers = 2);

}  // namespace decoysl::validation
