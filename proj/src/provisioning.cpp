#include "de/provisioning.hpp"

namespace de {

void to_json(Value& j, const JobRequirements& v) {
  j = Value{{"cpus", v.cpus}, {"memory_mb", v.memory_mb}, {"wall_hours", v.wall_hours}};
}

void from_json(const Value& j, JobRequirements& v) {
  v.cpus = j.value("cpus", 1);
  v.memory_mb = j.value("memory_mb", 0);
  v.wall_hours = j.value("wall_hours", 0.0);
}

void to_json(Value& j, const JobBundle& v) {
  j = Value{{"bundle_id", v.bundle_id},
            {"count", v.count},
            {"requirements", v.requirements},
            {"preferred_resources", v.preferred_resources}};
}

void from_json(const Value& j, JobBundle& v) {
  j.at("bundle_id").get_to(v.bundle_id);
  j.at("count").get_to(v.count);
  j.at("requirements").get_to(v.requirements);
  j.at("preferred_resources").get_to(v.preferred_resources);
}

void to_json(Value& j, const ResourceClassInfo& v) {
  j = Value{{"class_id", v.class_id},
            {"kind", v.kind},
            {"price_performance", v.price_performance},
            {"unit_cost", v.unit_cost},
            {"capacity_limit", v.capacity_limit},
            {"current_occupancy", v.current_occupancy},
            {"state", v.up ? "up" : "down"}};
}

void from_json(const Value& j, ResourceClassInfo& v) {
  j.at("class_id").get_to(v.class_id);
  j.at("kind").get_to(v.kind);
  v.price_performance = j.value("price_performance", 1.0);
  v.unit_cost = j.value("unit_cost", 0.0);
  v.capacity_limit = j.value("capacity_limit", 0);
  v.current_occupancy = j.value("current_occupancy", 0);
  v.up = j.value("state", "up") == std::string("up");
}

void to_json(Value& j, const BudgetStatus& v) {
  j = Value{{"cloud_funds_remaining", v.cloud_funds_remaining},
            {"hpc_allocation_remaining", v.hpc_allocation_remaining}};
}

void from_json(const Value& j, BudgetStatus& v) {
  j.at("cloud_funds_remaining").get_to(v.cloud_funds_remaining);
  j.at("hpc_allocation_remaining").get_to(v.hpc_allocation_remaining);
}

void to_json(Value& j, const ProvisionRequest& v) {
  j = Value{{"class_id", v.class_id},
            {"slots", v.slots},
            {"for_bundle", v.for_bundle},
            {"justification", v.justification}};
}

void from_json(const Value& j, ProvisionRequest& v) {
  j.at("class_id").get_to(v.class_id);
  j.at("slots").get_to(v.slots);
  j.at("for_bundle").get_to(v.for_bundle);
  v.justification = j.value("justification", Value::object());
}

void to_json(Value& j, const Receipt& v) {
  j = Value{{"class_id", v.class_id},
            {"slots", v.slots},
            {"for_bundle", v.for_bundle},
            {"accepted", v.accepted},
            {"reason", v.reason}};
}

void from_json(const Value& j, Receipt& v) {
  j.at("class_id").get_to(v.class_id);
  j.at("slots").get_to(v.slots);
  v.for_bundle = j.value("for_bundle", "");
  j.at("accepted").get_to(v.accepted);
  v.reason = j.value("reason", "");
}

}  // namespace de
