#include "shot/tasks.hpp"

namespace shot {

DomainPair make_task(const TaskSpec& spec, std::uint64_t seed) {
  Dataset source = apply_shift(make_blobs(spec.blobs, seed, spec.source_domain_tag), spec.source_shift, seed + 2);
  Dataset target = apply_shift(make_blobs(spec.blobs, seed + 1, spec.target_domain_tag), spec.target_shift, seed + 3);
  switch (spec.scenario) {
    case Scenario::Closed:
      break;
    case Scenario::Partial:
      target = subset_classes(target, spec.target_classes, false, Excluded::Drop);
      break;
    case Scenario::Open:
      source = subset_classes(source, spec.known_classes, true, Excluded::Drop);
      target = subset_classes(target, spec.known_classes, true, Excluded::MarkUnknown);
      break;
  }
  return {std::move(source), std::move(target)};
}

TaskSpec preset_task(Scenario scenario) {
  TaskSpec spec;
  spec.scenario = scenario;
  if (scenario == Scenario::Open) spec.target_shift = ShiftSpec{-20.0, {}, 1.0, 0.0};
  return spec;
}

namespace {

nlohmann::json shift_json(const ShiftSpec& s) {
  return {{"rotation_deg", s.rotation_deg}, {"translation", s.translation}, {"scale", s.scale}, {"noise_sigma", s.noise_sigma}};
}

}  // namespace

nlohmann::json to_json(const TaskSpec& spec) {
  return {{"num_classes", spec.blobs.num_classes},
          {"n_per_class", spec.blobs.n_per_class},
          {"dim", spec.blobs.dim},
          {"class_sep", spec.blobs.class_sep},
          {"noise_sigma", spec.blobs.noise_sigma},
          {"source_shift", shift_json(spec.source_shift)},
          {"target_shift", shift_json(spec.target_shift)},
          {"scenario", to_string(spec.scenario)},
          {"target_classes", spec.target_classes},
          {"known_classes", spec.known_classes}};
}

}  // namespace shot
