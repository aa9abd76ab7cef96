#pragma once

#include <cstdint>
#include <vector>

#include "shot/adapt.hpp"
#include "shot/data.hpp"

namespace shot {

// A synthetic source/target pair. Source and target are independent blob draws
// (seeded from seed and seed + 1) passed through their own shifts.
struct TaskSpec {
  BlobSpec blobs;
  ShiftSpec source_shift;
  ShiftSpec target_shift{35.0, {0.6, 0.6}, 1.0, 0.0};
  Scenario scenario = Scenario::Closed;
  std::vector<int> target_classes{0, 1};   // partial: classes present in the target
  std::vector<int> known_classes{0, 1, 2};  // open: classes shared with the source
  int source_domain_tag = 0;
  int target_domain_tag = 1;
};

struct DomainPair {
  Dataset source;
  Dataset target;
};

// Closed: both domains keep all classes. Partial: the target keeps
// target_classes under the full label space. Open: the source keeps
// known_classes (relabelled 0..), the target keeps every sample and marks the
// rest with the unknown label.
DomainPair make_task(const TaskSpec& spec, std::uint64_t seed);

// Calibrated defaults per scenario. Closed and partial use a 35 degree rotation
// plus a (0.6, 0.6) translation; open uses a -20 degree rotation so the novel
// class lands where the source model is unsure.
TaskSpec preset_task(Scenario scenario);

nlohmann::json to_json(const TaskSpec& spec);

}  // namespace shot
