#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "support.hpp"

namespace cbtest {

// One seeded mistake in an otherwise valid savanna directory: replace
// `find` by `replace` in `file`.
struct Defect {
  std::string name;
  std::string file;
  std::string find;
  std::string replace;
};

// Keeps gtest's parameter dump readable.
inline void PrintTo(const Defect& d, std::ostream* os) { *os << d.name; }

inline std::vector<Defect> savanna_defects() {
  return {
      {"dangling_layer", "network.yaml", "dst: cloud", "dst: fog"},
      {"dangling_service_selector", "workflow.yaml", "  - id: classify\n    hosts: cloud.server",
       "  - id: classify\n    hosts: cloud.classifier"},
      {"duplicate_layer", "layers_services.yaml", "  - name: edge\n", "  - name: cloud\n"},
      {"forward_dependency", "workflow.yaml", "      src: data/capture.txt\n",
       "      src: data/capture.txt\n    depends_on: [start-server]\n"},
      {"loss_one", "network.yaml", "loss: 0\n", "loss: 1\n"},
      {"rate_zero", "network.yaml", "rate: 15Kbit", "rate: 0"},
  };
}

// Copies the savanna experiment to `dest` and applies `d`.
inline void write_defective(const Defect& d, const fs::path& dest) {
  copy_tree(savanna_dir(), dest);
  fs::remove_all(dest / "results");
  auto text = read_file(dest / d.file);
  const auto pos = text.find(d.find);
  if (pos == std::string::npos) throw std::runtime_error("defect anchor not found: " + d.name);
  text.replace(pos, d.find.size(), d.replace);
  write_file(dest / d.file, text);
}

}  // namespace cbtest
