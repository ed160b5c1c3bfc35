#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace clat::cli {

enum class ValueType { kString, kInt, kDouble, kBool, kIntList, kStringList, kObjectList };

struct KeySpec {
  std::string name;  // config key; the flag is --name with '_' written as '-'
  ValueType type = ValueType::kString;
  bool required = false;
  nlohmann::json default_value;  // null: unset unless given
  std::string help;
  bool has_flag = true;  // object lists can only come from the config file
};

const std::vector<std::string>& subcommands();
bool is_subcommand(const std::string& name);

// Keys accepted by a subcommand. InvalidConfig for an unknown subcommand.
const std::vector<KeySpec>& schema(const std::string& command);

std::string flag_name(const KeySpec& spec);

// Rejects non-objects, unknown keys and values of the wrong type.
void check_config(const std::string& command, const nlohmann::json& doc);

// Converts one flag's text to the key's type ("1,2,3" for lists).
nlohmann::json parse_flag_value(const KeySpec& spec, const std::string& text);

// defaults, then the config file, then flags; required keys must end up set.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& file_doc,
                              const std::map<std::string, std::string>& flags);

// threads > 0 wins, then CLAT_THREADS, then 1.
unsigned resolve_threads(const nlohmann::json& cfg);

std::string usage();

// Runs one already-resolved subcommand; writes artifacts under cfg["out"].
void run_command(const std::string& command, const nlohmann::json& cfg, std::ostream& out);

// args excludes the program name. 0 success, 1 validation error or bad usage,
// 2 runtime failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clat::cli
