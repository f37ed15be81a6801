#include "cb/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "cb/error.hpp"
#include "cb/netem.hpp"

namespace fs = std::filesystem;

namespace cb {

namespace {

ProfileCatalog read_profiles(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::usage, "usage.profiles", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ProfileCatalog::parse(ss.str());
}

}  // namespace

ProfileCatalog load_catalog(const fs::path& dir, const std::optional<fs::path>& extra) {
  auto catalog = ProfileCatalog::defaults();
  if (fs::exists(dir / "profiles.yaml")) catalog.merge(read_profiles(dir / "profiles.yaml"));
  if (extra) catalog.merge(read_profiles(*extra));
  return catalog;
}

PreparedConfig prepare_config(const RunRequest& request) {
  if (!fs::is_directory(request.dir)) {
    throw Error(ErrorKind::usage, "usage.dir", "experiment directory not found: " + request.dir.string());
  }
  PreparedConfig out;
  out.catalog = load_catalog(request.dir, request.profiles);
  auto loaded = load_experiment(request.dir);
  if (!loaded.config) throw Error(ErrorKind::validation, "validation.failed", render_text(loaded.issues));
  out.config = std::move(*loaded.config);
  for (const auto& o : request.overrides) apply_override(out.config, o);
  if (!request.provider.empty()) {
    for (auto& [name, env] : out.config.layers.environments) env.provider = request.provider;
  }
  auto issues = validate(out.config, out.catalog, ValidateOptions{request.dir});
  if (has_errors(issues)) throw Error(ErrorKind::validation, "validation.failed", render_text(issues));
  out.warnings = std::move(issues);

  if (request.seed) {
    out.seed = *request.seed;
  } else if (auto it = out.config.layers.global.find("seed"); it != out.config.layers.global.end()) {
    try {
      out.seed = std::stoull(it->second);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, "validation.failed",
                  std::string(kLayersFile) + ":global.seed: expected a non-negative integer");
    }
  }
  return out;
}

Deployment deploy_experiment(const RunRequest& request, ProviderRegistry* registry) {
  Deployment d;
  d.prepared = prepare_config(request);
  std::optional<ProviderRegistry> own;
  if (!registry) {
    own.emplace(ProviderRegistry::with_defaults(d.prepared.catalog, d.prepared.seed));
    registry = &*own;
  }
  const auto& layers = d.prepared.config.layers;
  auto release_all = [&] {
    for (auto it = d.grants.rbegin(); it != d.grants.rend(); ++it) {
      try {
        registry->release(*it);
      } catch (const Error&) {
      }
    }
  };
  try {
    for (const auto& req : resource_requests(layers)) {
      auto env = layers.environments.find(req.environment);
      const std::string provider = env != layers.environments.end() ? env->second.provider : "simulated";
      d.grants.push_back(registry->acquire(req, provider));
    }
    d.plan = map_services(layers, d.grants);
    d.plan.links = build_links(d.prepared.config.network, d.plan);
  } catch (...) {
    release_all();
    throw;
  }
  // The registry owned here dies with this frame; its grants go with it.
  if (own) release_all();
  return d;
}

RunOutcome run_experiment(const RunRequest& request) {
  auto prepared = prepare_config(request);
  auto registry = ProviderRegistry::with_defaults(prepared.catalog, prepared.seed);
  auto d = deploy_experiment(request, &registry);
  RunOutcome out;
  try {
    ExecuteOptions opts;
    opts.experiment_dir = request.dir;
    opts.label = request.label;
    opts.on_repetition = request.on_repetition;
    out.run = WorkflowEngine().execute(d.prepared.config, d.plan, d.prepared.seed, opts);
    const auto root = request.results_root.empty() ? request.dir / "results" : request.results_root;
    out.run_dir = collect_results(out.run, root);
  } catch (...) {
    for (const auto& g : d.grants) registry.release(g);
    throw;
  }
  for (const auto& g : d.grants) registry.release(g);
  return out;
}

}  // namespace cb
