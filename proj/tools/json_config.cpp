#include "json_config.hpp"

#include <algorithm>

#include "json.hpp"

namespace picar::cli {

namespace {

using nlohmann::json;

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

void flatten(const json& obj, std::vector<std::string>& parents,
             std::vector<CLI::ConfigItem>& out) {
  for (const auto& [key, value] : obj.items()) {
    if (value.is_object()) {
      parents.push_back(key);
      flatten(value, parents, out);
      parents.pop_back();
      continue;
    }
    CLI::ConfigItem item;
    item.parents = parents;
    item.name = flag_name(key);
    if (value.is_array()) {
      for (const auto& v : value) item.inputs.push_back(scalar_text(v));
    } else if (!value.is_null()) {
      item.inputs.push_back(scalar_text(value));
    }
    out.push_back(std::move(item));
  }
}

void dump(const CLI::App* app, bool default_also, json& into) {
  for (const CLI::Option* opt : app->get_options()) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    std::string key = opt->get_lnames().front();
    std::replace(key.begin(), key.end(), '-', '_');
    if (opt->count() > 0) {
      const auto& res = opt->results();
      into[key] = res.size() == 1 ? json(res[0]) : json(res);
    } else if (default_also && !opt->get_default_str().empty()) {
      into[key] = opt->get_default_str();
    }
  }
  for (const CLI::App* sub : app->get_subcommands({})) {
    json child = json::object();
    dump(sub, default_also, child);
    if (!child.empty()) into[sub->get_name()] = child;
  }
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also, bool, std::string) const {
  json j = json::object();
  dump(app, default_also, j);
  return j.dump(2) + "\n";
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  json j;
  try {
    input >> j;
  } catch (const json::exception& e) {
    throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
  std::vector<CLI::ConfigItem> items;
  std::vector<std::string> parents;
  flatten(j, parents, items);
  return items;
}

}  // namespace picar::cli
