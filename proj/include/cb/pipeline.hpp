#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cb/config.hpp"
#include "cb/provider.hpp"
#include "cb/workflow.hpp"

namespace cb {

// Everything `deploy` and `run` need to know about one invocation.
struct RunRequest {
  std::filesystem::path dir;
  std::optional<std::uint64_t> seed;   // defaults to global.seed, else 0
  std::string provider;                 // replaces every environment's provider when set
  std::filesystem::path results_root;   // defaults to <dir>/results
  std::string label;
  std::vector<std::string> overrides;   // key=value, see apply_override
  std::optional<std::filesystem::path> profiles;  // extra profiles.yaml
  std::function<void(int, int)> on_repetition;
};

// Default catalog, then <dir>/profiles.yaml if present, then `extra`.
ProfileCatalog load_catalog(const std::filesystem::path& dir,
                            const std::optional<std::filesystem::path>& extra = std::nullopt);

struct PreparedConfig {
  ExperimentConfig config;
  ProfileCatalog catalog;
  std::vector<ValidationIssue> warnings;
  std::uint64_t seed = 0;
};

// Parses, applies overrides and validates. Throws Error(validation,
// "validation.failed") with the rendered issues when any error is found.
PreparedConfig prepare_config(const RunRequest& request);

struct Deployment {
  PreparedConfig prepared;
  std::vector<ResourceGrant> grants;
  DeploymentPlan plan;
};

// Acquires resources from the configured providers, maps services onto them
// and installs the network model. Grants are released again on failure.
Deployment deploy_experiment(const RunRequest& request, ProviderRegistry* registry = nullptr);

struct RunOutcome {
  ExperimentRun run;
  std::filesystem::path run_dir;
};

// deploy -> execute -> collect -> release.
RunOutcome run_experiment(const RunRequest& request);

}  // namespace cb
