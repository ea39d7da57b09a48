#pragma once

#include "CLI11.hpp"

namespace picar::cli {

/// Reads options from JSON. Nested objects address subcommands
/// ({"loop": {"period_ms": 20}}); underscores in keys match dashes in flag
/// names. Values already given on the command line win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

}  // namespace picar::cli
