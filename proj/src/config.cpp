#include "cb/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "cb/digest.hpp"
#include "cb/provider.hpp"
#include "json.hpp"

namespace cb {

// ---------------------------------------------------------------------------
// small lookups
// ---------------------------------------------------------------------------

const LayerSpec* LayersServicesConfig::find_layer(std::string_view name) const {
  for (const auto& layer : layers) {
    if (layer.name == name) return &layer;
  }
  return nullptr;
}

const ServiceSpec* LayersServicesConfig::find_service(std::string_view layer,
                                                      std::string_view service) const {
  const auto* l = find_layer(layer);
  if (l == nullptr) return nullptr;
  for (const auto& s : l->services) {
    if (s.name == service) return &s;
  }
  return nullptr;
}

std::vector<const WorkflowTask*> WorkflowConfig::phase_tasks(Phase phase) const {
  std::vector<const WorkflowTask*> out;
  for (const auto& t : tasks) {
    if (t.phase == phase) out.push_back(&t);
  }
  return out;
}

const char* to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::prepare: return "prepare";
    case Phase::launch: return "launch";
    case Phase::finalize: return "finalize";
  }
  return "?";
}

const char* to_string(TaskAction action) noexcept {
  switch (action) {
    case TaskAction::copy_to: return "copy_to";
    case TaskAction::execute: return "execute";
    case TaskAction::fetch_results: return "fetch_results";
  }
  return "?";
}

NetworkConfig expand_symmetric(const NetworkConfig& net) {
  NetworkConfig out;
  for (const auto& rule : net.rules) {
    NetworkRule forward = rule;
    forward.symmetric = false;
    out.rules.push_back(forward);
    if (rule.symmetric && rule.src != rule.dst) {
      NetworkRule back = forward;
      std::swap(back.src, back.dst);
      out.rules.push_back(back);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// selectors
// ---------------------------------------------------------------------------

Selector Selector::parse(std::string_view text) {
  auto fail = [&](const std::string& why) -> Selector {
    throw ConfigError("config.selector", "selector '" + std::string(text) + "'", why);
  };
  if (text.empty()) return fail("empty selector");
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == '.') {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  if (parts.size() > 3) return fail("expected layer[.service[.index]]");
  for (const auto& p : parts) {
    if (p.empty()) return fail("empty component");
  }
  Selector sel;
  sel.layer = parts[0];
  if (parts.size() > 1) sel.service = parts[1];
  if (parts.size() > 2 && parts[2] != "*") {
    int idx = -1;
    auto [ptr, ec] = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), idx);
    if (ec != std::errc{} || ptr != parts[2].data() + parts[2].size() || idx < 0) {
      return fail("instance index must be a non-negative integer or '*'");
    }
    sel.index = idx;
  }
  return sel;
}

bool Selector::matches_service(std::string_view layer_name, std::string_view service_name) const {
  return (layer == "*" || layer == layer_name) && (service == "*" || service == service_name);
}

bool Selector::matches(std::string_view layer_name, std::string_view service_name,
                       int instance) const {
  return matches_service(layer_name, service_name) && (!index || *index == instance);
}

// ---------------------------------------------------------------------------
// YAML helpers
// ---------------------------------------------------------------------------

namespace {

YAML::Node load_yaml(std::string_view text, std::string_view file) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config.syntax", std::string(file) + ":" + std::to_string(e.mark.line + 1),
                      "syntax error: " + e.msg);
  }
}

int node_line(const YAML::Node& n) { return n.Mark().line + 1; }

std::string where(std::string_view file, const std::string& path, const YAML::Node& n) {
  std::string loc = std::string(file);
  if (n.IsDefined() && n.Mark().line >= 0) loc += ":" + std::to_string(node_line(n));
  if (!path.empty()) loc += ":" + path;
  return loc;
}

std::string node_text(const YAML::Node& n) {
  if (n.IsScalar()) return n.Scalar();
  if (n.IsNull()) return "";
  YAML::Emitter e;
  e << YAML::Flow << n;
  return e.c_str();
}

std::string required_scalar(const YAML::Node& parent, const char* key, std::string_view file,
                            const std::string& path) {
  const auto n = parent[key];
  if (!n || n.IsNull() || (n.IsScalar() && n.Scalar().empty())) {
    throw ConfigError("config.missing_field", where(file, path, parent),
                      std::string("missing required field '") + key + "'");
  }
  if (!n.IsScalar()) {
    throw ConfigError("config.type", where(file, path, n),
                      std::string("field '") + key + "' must be a scalar");
  }
  return n.Scalar();
}

ParamMap scalar_map(const YAML::Node& n, std::string_view file, const std::string& path) {
  ParamMap out;
  if (!n || n.IsNull()) return out;
  if (!n.IsMap()) throw ConfigError("config.type", where(file, path, n), "expected a mapping");
  for (const auto& kv : n) out[kv.first.as<std::string>()] = node_text(kv.second);
  return out;
}

template <typename Fn>
auto convert(std::string_view file, const std::string& path, const YAML::Node& n, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config.value", where(file, path, n), e.what());
  }
}

int positive_int(const YAML::Node& n, std::string_view file, const std::string& path) {
  const std::string text = node_text(n);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value < 1) {
    throw ConfigError("config.value", where(file, path, n),
                      "expected a positive integer, got '" + text + "'");
  }
  return value;
}

void emit_map(YAML::Emitter& e, const ParamMap& m) {
  e << YAML::BeginMap;
  for (const auto& [k, v] : m) e << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
  e << YAML::EndMap;
}

}  // namespace

// ---------------------------------------------------------------------------
// layers_services.yaml
// ---------------------------------------------------------------------------

LayersServicesConfig parse_layers_services(std::string_view text) {
  constexpr std::string_view file = kLayersFile;
  const auto root = load_yaml(text, file);
  if (!root.IsMap()) throw ConfigError("config.type", std::string(file), "document must be a mapping");

  LayersServicesConfig cfg;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key == "layers" || key == "environments") continue;
    if (key == "global") {
      for (auto& [k, v] : scalar_map(kv.second, file, "global")) cfg.global[k] = v;
    } else {
      cfg.global[key] = node_text(kv.second);
    }
  }

  if (const auto envs = root["environments"]; envs && !envs.IsNull()) {
    if (!envs.IsMap()) throw ConfigError("config.type", where(file, "environments", envs), "expected a mapping");
    for (const auto& kv : envs) {
      const auto name = kv.first.as<std::string>();
      const std::string path = "environments." + name;
      EnvironmentSpec env;
      if (!kv.second.IsMap()) throw ConfigError("config.type", where(file, path, kv.second), "expected a mapping");
      env.provider = required_scalar(kv.second, "provider", file, path);
      for (const auto& f : kv.second) {
        const auto k = f.first.as<std::string>();
        if (k == "provider") continue;
        if (k == "site") {
          env.site = node_text(f.second);
        } else if (k == "credentials") {
          env.credentials = node_text(f.second);
        } else {
          env.extra[k] = node_text(f.second);
        }
      }
      cfg.environments[name] = std::move(env);
    }
  }

  const auto layers = root["layers"];
  if (!layers || !layers.IsSequence() || layers.size() == 0) {
    throw ConfigError("config.missing_field", std::string(file), "'layers' must be a non-empty sequence");
  }
  std::set<std::string> layer_names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto ln = layers[i];
    const std::string path = "layers[" + std::to_string(i) + "]";
    if (!ln.IsMap()) throw ConfigError("config.type", where(file, path, ln), "expected a mapping");
    LayerSpec layer;
    layer.name = required_scalar(ln, "name", file, path);
    if (!layer_names.insert(layer.name).second) {
      throw ConfigError("config.duplicate_layer", where(file, path, ln), "duplicate layer '" + layer.name + "'");
    }
    const auto services = ln["services"];
    if (!services || !services.IsSequence() || services.size() == 0) {
      throw ConfigError("config.missing_field", where(file, path, ln),
                        "layer '" + layer.name + "' needs at least one service");
    }
    std::set<std::string> service_names;
    for (std::size_t j = 0; j < services.size(); ++j) {
      const auto sn = services[j];
      const std::string spath = path + ".services[" + std::to_string(j) + "]";
      if (!sn.IsMap()) throw ConfigError("config.type", where(file, spath, sn), "expected a mapping");
      ServiceSpec svc;
      svc.name = required_scalar(sn, "name", file, spath);
      svc.environment = required_scalar(sn, "environment", file, spath);
      svc.profile = required_scalar(sn, "profile", file, spath);
      if (sn["quantity"]) svc.quantity = positive_int(sn["quantity"], file, spath + ".quantity");
      for (const auto& f : sn) {
        const auto k = f.first.as<std::string>();
        if (k == "name" || k == "environment" || k == "profile" || k == "quantity") continue;
        if (k == "params") {
          for (auto& [pk, pv] : scalar_map(f.second, file, spath + ".params")) svc.params[pk] = pv;
        } else {
          svc.params[k] = node_text(f.second);
        }
      }
      if (!service_names.insert(svc.name).second) {
        throw ConfigError("config.duplicate_service", where(file, spath, sn),
                          "duplicate service '" + svc.name + "' in layer '" + layer.name + "'");
      }
      if (!cfg.environments.contains(svc.environment)) {
        throw ConfigError("config.unknown_environment", where(file, spath, sn),
                          "service " + layer.name + "." + svc.name + " references undeclared environment '" +
                              svc.environment + "'");
      }
      layer.services.push_back(std::move(svc));
    }
    cfg.layers.push_back(std::move(layer));
  }

  for (const auto& [name, env] : cfg.environments) {
    int total = 0;
    for (const auto& l : cfg.layers) {
      for (const auto& s : l.services) {
        if (s.environment == name) total += s.quantity;
      }
    }
    if (total < 1) {
      throw ConfigError("config.unused_environment", std::string(file) + ":environments." + name,
                        "environment '" + name + "' requests no resources");
    }
  }
  return cfg;
}

std::string serialize(const LayersServicesConfig& cfg) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "environments" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, env] : cfg.environments) {
    e << YAML::Key << name << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "provider" << YAML::Value << YAML::DoubleQuoted << env.provider;
    if (!env.site.empty()) e << YAML::Key << "site" << YAML::Value << YAML::DoubleQuoted << env.site;
    if (!env.credentials.empty()) {
      e << YAML::Key << "credentials" << YAML::Value << YAML::DoubleQuoted << env.credentials;
    }
    for (const auto& [k, v] : env.extra) e << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
    e << YAML::EndMap;
  }
  e << YAML::EndMap;
  e << YAML::Key << "global" << YAML::Value;
  emit_map(e, cfg.global);
  e << YAML::Key << "layers" << YAML::Value << YAML::BeginSeq;
  for (const auto& layer : cfg.layers) {
    e << YAML::BeginMap << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << layer.name;
    e << YAML::Key << "services" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : layer.services) {
      e << YAML::BeginMap;
      e << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << s.name;
      e << YAML::Key << "quantity" << YAML::Value << s.quantity;
      e << YAML::Key << "environment" << YAML::Value << YAML::DoubleQuoted << s.environment;
      e << YAML::Key << "profile" << YAML::Value << YAML::DoubleQuoted << s.profile;
      e << YAML::Key << "params" << YAML::Value;
      emit_map(e, s.params);
      e << YAML::EndMap;
    }
    e << YAML::EndSeq << YAML::EndMap;
  }
  e << YAML::EndSeq << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// network.yaml
// ---------------------------------------------------------------------------

NetworkConfig parse_network(std::string_view text) {
  constexpr std::string_view file = kNetworkFile;
  const auto root = load_yaml(text, file);
  NetworkConfig net;
  if (root.IsNull()) return net;
  if (!root.IsMap()) throw ConfigError("config.type", std::string(file), "document must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "networks") {
      throw ConfigError("config.unknown_key", where(file, key, kv.first), "unknown key '" + key + "'");
    }
  }
  const auto rules = root["networks"];
  if (!rules || rules.IsNull()) return net;
  if (!rules.IsSequence()) throw ConfigError("config.type", where(file, "networks", rules), "expected a sequence");

  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto rn = rules[i];
    const std::string path = "networks[" + std::to_string(i) + "]";
    if (!rn.IsMap()) throw ConfigError("config.type", where(file, path, rn), "expected a mapping");
    NetworkRule rule;
    rule.src = required_scalar(rn, "src", file, path);
    rule.dst = required_scalar(rn, "dst", file, path);
    const auto rate_text = required_scalar(rn, "rate", file, path);
    rule.rate = convert(file, path + ".rate", rn["rate"], [&] { return parse_rate(rate_text); });
    if (!(rule.rate > 0)) {
      throw ConfigError("config.rate", where(file, path + ".rate", rn["rate"]), "rate must be > 0, got '" + rate_text + "'");
    }
    for (const auto& f : rn) {
      const auto k = f.first.as<std::string>();
      const std::string fpath = path + "." + k;
      if (k == "src" || k == "dst" || k == "rate") continue;
      if (k == "delay") {
        rule.delay = convert(file, fpath, f.second,
                             [&] { return parse_duration(node_text(f.second), DurationUnit::milliseconds); });
      } else if (k == "loss") {
        rule.loss = convert(file, fpath, f.second, [&] { return parse_fraction(node_text(f.second)); });
        if (!(rule.loss >= 0 && rule.loss < 1)) {
          throw ConfigError("config.loss", where(file, fpath, f.second),
                            "loss must be in [0, 1), got '" + node_text(f.second) + "'");
        }
      } else if (k == "symmetric") {
        rule.symmetric = convert(file, fpath, f.second, [&] { return parse_bool(node_text(f.second)); });
      } else {
        throw ConfigError("config.unknown_key", where(file, fpath, f.first), "unknown key '" + k + "'");
      }
    }
    net.rules.push_back(rule);
  }
  return expand_symmetric(net);
}

std::string serialize(const NetworkConfig& cfg) {
  YAML::Emitter e;
  e << YAML::BeginMap << YAML::Key << "networks" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : cfg.rules) {
    e << YAML::BeginMap;
    e << YAML::Key << "src" << YAML::Value << YAML::DoubleQuoted << r.src;
    e << YAML::Key << "dst" << YAML::Value << YAML::DoubleQuoted << r.dst;
    e << YAML::Key << "delay" << YAML::Value << format_duration(r.delay);
    e << YAML::Key << "rate" << YAML::Value << format_rate(r.rate);
    e << YAML::Key << "loss" << YAML::Value << format_double(r.loss);
    e << YAML::Key << "symmetric" << YAML::Value << r.symmetric;
    e << YAML::EndMap;
  }
  e << YAML::EndSeq << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// workflow.yaml
// ---------------------------------------------------------------------------

namespace {

TaskAction parse_action(const std::string& text, const std::string& loc) {
  if (text == "copy_to") return TaskAction::copy_to;
  if (text == "execute") return TaskAction::execute;
  if (text == "fetch_results") return TaskAction::fetch_results;
  throw ConfigError("config.action", loc, "unknown action '" + text + "'");
}

constexpr Phase kPhases[] = {Phase::prepare, Phase::launch, Phase::finalize};

}  // namespace

WorkflowConfig parse_workflow(std::string_view text) {
  constexpr std::string_view file = kWorkflowFile;
  const auto root = load_yaml(text, file);
  WorkflowConfig wf;
  if (root.IsNull()) return wf;
  if (!root.IsMap()) throw ConfigError("config.type", std::string(file), "document must be a mapping");

  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key == "repetitions") {
      wf.repetitions = positive_int(kv.second, file, key);
    } else if (key == "interval") {
      wf.interval = convert(file, key, kv.second,
                            [&] { return parse_duration(node_text(kv.second), DurationUnit::seconds); });
    } else if (key != "prepare" && key != "launch" && key != "finalize") {
      throw ConfigError("config.unknown_phase", where(file, key, kv.first), "unknown phase '" + key + "'");
    }
  }

  for (Phase phase : kPhases) {
    const auto seq = root[to_string(phase)];
    if (!seq || seq.IsNull()) continue;
    if (!seq.IsSequence()) {
      throw ConfigError("config.type", where(file, to_string(phase), seq), "phase must be a sequence of tasks");
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto tn = seq[i];
      const std::string path = std::string(to_string(phase)) + "[" + std::to_string(i) + "]";
      if (!tn.IsMap()) throw ConfigError("config.type", where(file, path, tn), "expected a mapping");
      WorkflowTask task;
      task.phase = phase;
      task.id = tn["id"] ? node_text(tn["id"]) : std::string(to_string(phase)) + "-" + std::to_string(i);
      task.hosts = required_scalar(tn, "hosts", file, path);
      try {
        Selector::parse(task.hosts);
      } catch (const ConfigError& e) {
        throw ConfigError("config.selector", where(file, path + ".hosts", tn["hosts"]), e.detail());
      }
      task.action = parse_action(required_scalar(tn, "action", file, path), where(file, path + ".action", tn["action"]));
      for (const auto& f : tn) {
        const auto k = f.first.as<std::string>();
        if (k == "id" || k == "hosts" || k == "action") continue;
        if (k == "args") {
          task.args = scalar_map(f.second, file, path + ".args");
        } else if (k == "depends_on") {
          if (f.second.IsScalar()) {
            task.depends_on.push_back(f.second.Scalar());
          } else if (f.second.IsSequence()) {
            for (const auto& d : f.second) task.depends_on.push_back(node_text(d));
          } else if (!f.second.IsNull()) {
            throw ConfigError("config.type", where(file, path + ".depends_on", f.second), "expected a list of task ids");
          }
        } else {
          throw ConfigError("config.unknown_key", where(file, path + "." + k, f.first), "unknown key '" + k + "'");
        }
      }
      wf.tasks.push_back(std::move(task));
    }
  }

  // Dependency checks need every id first so forward references can be told
  // apart from unknown ones.
  std::map<std::string, std::pair<Phase, std::size_t>> declared;
  for (std::size_t i = 0; i < wf.tasks.size(); ++i) {
    if (!declared.emplace(wf.tasks[i].id, std::make_pair(wf.tasks[i].phase, i)).second) {
      throw ConfigError("config.duplicate_task", std::string(file) + ":" + wf.tasks[i].id,
                        "duplicate task id '" + wf.tasks[i].id + "'");
    }
  }
  for (std::size_t i = 0; i < wf.tasks.size(); ++i) {
    const auto& task = wf.tasks[i];
    const std::string loc = std::string(file) + ":" + task.id;
    for (const auto& dep : task.depends_on) {
      auto it = declared.find(dep);
      if (it == declared.end()) {
        throw ConfigError("config.unknown_dependency", loc, "task '" + task.id + "' depends on unknown task '" + dep + "'");
      }
      if (it->second.second == i) {
        throw ConfigError("config.cyclic_dependency", loc, "task '" + task.id + "' depends on itself");
      }
      if (it->second.first != task.phase) {
        throw ConfigError("config.cross_phase_dependency", loc,
                          "task '" + task.id + "' depends on '" + dep + "' from another phase");
      }
      if (it->second.second > i) {
        throw ConfigError("config.forward_dependency", loc,
                          "forward dependency: task '" + task.id + "' depends on later task '" + dep + "'");
      }
    }
  }
  return wf;
}

std::string serialize(const WorkflowConfig& cfg) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "repetitions" << YAML::Value << cfg.repetitions;
  e << YAML::Key << "interval" << YAML::Value << format_duration(cfg.interval);
  for (Phase phase : kPhases) {
    const auto tasks = cfg.phase_tasks(phase);
    if (tasks.empty()) continue;
    e << YAML::Key << to_string(phase) << YAML::Value << YAML::BeginSeq;
    for (const auto* t : tasks) {
      e << YAML::BeginMap;
      e << YAML::Key << "id" << YAML::Value << YAML::DoubleQuoted << t->id;
      e << YAML::Key << "hosts" << YAML::Value << YAML::DoubleQuoted << t->hosts;
      e << YAML::Key << "action" << YAML::Value << to_string(t->action);
      e << YAML::Key << "args" << YAML::Value;
      emit_map(e, t->args);
      e << YAML::Key << "depends_on" << YAML::Value << YAML::Flow << YAML::BeginSeq;
      for (const auto& d : t->depends_on) e << YAML::DoubleQuoted << d;
      e << YAML::EndSeq;
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string config_digest(const ExperimentConfig& cfg) {
  Sha256 h;
  h.update(serialize(cfg.layers));
  h.update("\n---\n");
  h.update(serialize(cfg.network));
  h.update("\n---\n");
  h.update(serialize(cfg.workflow));
  return h.hex_digest();
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

std::vector<ValidationIssue> validate(const ExperimentConfig& cfg, const ProfileCatalog& catalog,
                                      const ValidateOptions& options) {
  std::vector<ValidationIssue> issues;
  auto error = [&](std::string loc, std::string msg) {
    issues.push_back({Severity::error, std::move(loc), std::move(msg)});
  };
  auto warning = [&](std::string loc, std::string msg) {
    issues.push_back({Severity::warning, std::move(loc), std::move(msg)});
  };
  const auto& layers = cfg.layers;
  const std::string lfile(kLayersFile), nfile(kNetworkFile), wfile(kWorkflowFile);

  for (const auto& layer : layers.layers) {
    for (const auto& svc : layer.services) {
      if (!catalog.contains(svc.profile)) {
        error(lfile + ":" + layer.name + "." + svc.name,
              "profile '" + svc.profile + "' is not in the provider catalog");
      }
    }
  }
  for (const auto& [name, env] : layers.environments) {
    if (!env.credentials.empty() && options.base_dir) {
      std::filesystem::path p(env.credentials);
      if (p.is_relative()) p = *options.base_dir / p;
      std::error_code ec;
      if (!std::filesystem::exists(p, ec)) {
        warning(lfile + ":environments." + name, "credential file '" + env.credentials + "' not found");
      }
    }
  }

  // A dangling layer name is reported once, at the first rule using it; a
  // symmetric rule has already been split into two directed ones here.
  std::set<std::string> unknown_layers;
  for (const auto& rule : cfg.network.rules) {
    const std::string loc = nfile + ":" + rule.src + "->" + rule.dst;
    for (const auto* name : {&rule.src, &rule.dst}) {
      if (layers.find_layer(*name) == nullptr && unknown_layers.insert(*name).second) {
        error(loc, "rule references unknown layer '" + *name + "'");
      }
    }
  }
  std::map<std::pair<std::string, std::string>, int> pair_count;
  for (const auto& rule : expand_symmetric(cfg.network).rules) {
    const std::string loc = nfile + ":" + rule.src + "->" + rule.dst;
    if (++pair_count[{rule.src, rule.dst}] == 2) error(loc, "more than one rule for this directed layer pair");
  }

  for (const auto& task : cfg.workflow.tasks) {
    const std::string loc = wfile + ":" + task.id;
    Selector sel;
    try {
      sel = Selector::parse(task.hosts);
    } catch (const ConfigError& e) {
      error(loc, e.detail());
      continue;
    }
    bool matched = false;
    for (const auto& layer : layers.layers) {
      for (const auto& svc : layer.services) {
        if (sel.matches_service(layer.name, svc.name) && (!sel.index || *sel.index < svc.quantity)) matched = true;
      }
    }
    if (!matched) error(loc, "selector '" + task.hosts + "' matches no declared service instance");
  }
  if (cfg.workflow.phase_tasks(Phase::launch).empty()) {
    warning(wfile + ":launch", "launch phase is empty (deploy-only experiment)");
  }

  std::sort(issues.begin(), issues.end());
  return issues;
}

bool has_errors(const std::vector<ValidationIssue>& issues) {
  return std::any_of(issues.begin(), issues.end(),
                     [](const ValidationIssue& i) { return i.severity == Severity::error; });
}

std::string render_text(const std::vector<ValidationIssue>& issues) {
  std::ostringstream out;
  for (const auto& i : issues) {
    out << (i.severity == Severity::error ? "error: " : "warning: ") << i.location << ": " << i.message << '\n';
  }
  return out.str();
}

std::string render_json(const std::vector<ValidationIssue>& issues) {
  auto arr = nlohmann::json::array();
  for (const auto& i : issues) {
    arr.push_back({{"severity", i.severity == Severity::error ? "error" : "warning"},
                   {"location", i.location},
                   {"message", i.message}});
  }
  return arr.dump(2);
}

// ---------------------------------------------------------------------------
// directory loading
// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T, typename Parse>
std::optional<T> load_doc(const std::filesystem::path& dir, std::string_view name, Parse parse,
                          std::vector<ValidationIssue>& issues) {
  const auto text = read_file(dir / name);
  if (!text) {
    issues.push_back({Severity::error, std::string(name), "file not found in " + dir.string()});
    return std::nullopt;
  }
  try {
    return parse(*text);
  } catch (const ConfigError& e) {
    issues.push_back({Severity::error, e.location(), e.detail()});
  } catch (const YAML::Exception& e) {
    issues.push_back({Severity::error, std::string(name), e.what()});
  }
  return std::nullopt;
}

}  // namespace

LoadedExperiment load_experiment(const std::filesystem::path& dir) {
  LoadedExperiment out;
  auto layers = load_doc<LayersServicesConfig>(dir, kLayersFile, parse_layers_services, out.issues);
  auto network = load_doc<NetworkConfig>(dir, kNetworkFile, parse_network, out.issues);
  auto workflow = load_doc<WorkflowConfig>(dir, kWorkflowFile, parse_workflow, out.issues);
  if (layers && network && workflow) {
    out.config = ExperimentConfig{std::move(*layers), std::move(*network), std::move(*workflow)};
  }
  return out;
}

LoadedExperiment check_experiment(const std::filesystem::path& dir, const ProfileCatalog& catalog) {
  auto loaded = load_experiment(dir);
  if (loaded.config) {
    auto more = validate(*loaded.config, catalog, ValidateOptions{dir});
    loaded.issues.insert(loaded.issues.end(), more.begin(), more.end());
  }
  std::sort(loaded.issues.begin(), loaded.issues.end());
  return loaded;
}

// ---------------------------------------------------------------------------
// overrides
// ---------------------------------------------------------------------------

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorKind::usage, "cli.override", "override must look like key=value: '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  auto bad = [&](const std::string& why) {
    throw Error(ErrorKind::usage, "cli.override", "override '" + std::string(assignment) + "': " + why);
  };
  try {
    if (key == "rate") {
      const double r = parse_rate(value);
      if (!(r > 0)) bad("rate must be > 0");
      for (auto& rule : cfg.network.rules) rule.rate = r;
    } else if (key == "delay") {
      const auto d = parse_duration(value, DurationUnit::milliseconds);
      for (auto& rule : cfg.network.rules) rule.delay = d;
    } else if (key == "loss") {
      const double l = parse_fraction(value);
      if (!(l >= 0 && l < 1)) bad("loss must be in [0, 1)");
      for (auto& rule : cfg.network.rules) rule.loss = l;
    } else if (key == "repetitions") {
      int n = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
      if (ec != std::errc{} || ptr != value.data() + value.size() || n < 1) bad("expected a positive integer");
      cfg.workflow.repetitions = n;
    } else if (key == "interval") {
      cfg.workflow.interval = parse_duration(value, DurationUnit::seconds);
    } else if (key.starts_with("param.") && key.size() > 6) {
      for (auto& layer : cfg.layers.layers) {
        for (auto& svc : layer.services) svc.params[key.substr(6)] = value;
      }
    } else if (key.starts_with("profile.")) {
      const auto rest = key.substr(8);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) bad("expected profile.LAYER.SERVICE");
      bool found = false;
      for (auto& layer : cfg.layers.layers) {
        for (auto& svc : layer.services) {
          if (layer.name == rest.substr(0, dot) && svc.name == rest.substr(dot + 1)) {
            svc.profile = value;
            found = true;
          }
        }
      }
      if (!found) bad("no such service");
    } else if (key.starts_with("environment.") && key.ends_with(".provider")) {
      const auto name = key.substr(12, key.size() - 12 - 9);
      auto it = cfg.layers.environments.find(name);
      if (it == cfg.layers.environments.end()) bad("no such environment");
      it->second.provider = value;
    } else {
      bad("unknown key");
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::usage) throw;
    bad(e.what());
  }
}

}  // namespace cb
