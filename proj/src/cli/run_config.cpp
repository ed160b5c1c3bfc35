#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "clat/cli.hpp"
#include "clat/common.hpp"

namespace clat::cli {

namespace {

using nlohmann::json;
using T = ValueType;

std::vector<KeySpec> common_keys(bool needs_dump) {
  return {
      {"dump", T::kString, needs_dump, nullptr, "CLAD dump with embeddings, head and text banks"},
      {"manifest", T::kString, needs_dump, nullptr, "JSON manifest of the dump"},
      {"out", T::kString, true, nullptr, "output directory"},
      {"seed", T::kInt, false, 0, "random seed"},
      {"threads", T::kInt, false, 0, "worker threads (0: CLAT_THREADS or 1)"},
  };
}

std::vector<KeySpec> with(std::vector<KeySpec> base, std::vector<KeySpec> extra) {
  base.insert(base.end(), extra.begin(), extra.end());
  return base;
}

const KeySpec kSae{"sae", T::kString, true, nullptr, "SAE dump written by train-sae (manifest next to it as .json)"};
const KeySpec kBank{"bank", T::kString, false, "", "text bank name (empty: the only bank)"};

const std::map<std::string, std::vector<KeySpec>>& schemas() {
  static const std::map<std::string, std::vector<KeySpec>> table = {
      {"train-sae",
       with(common_keys(true),
            {
                {"preset", T::kString, false, "imagenet", "imagenet or medical schedule"},
                {"k", T::kInt, false, 64, "active latents per sample"},
                {"dsae", T::kInt, false, 30000, "dictionary size"},
                {"lr", T::kDouble, false, nullptr, "learning rate (preset default)"},
                {"epochs", T::kInt, false, nullptr, "epochs (preset default)"},
                {"decay_epochs", T::kIntList, false, nullptr, "epochs after which lr is divided"},
                {"decay_factor", T::kDouble, false, nullptr, "lr divisor"},
                {"fraction", T::kDouble, false, nullptr, "fraction of samples drawn per epoch"},
                {"batch_size", T::kInt, false, nullptr, "mini-batch size"},
                {"weight_decay", T::kDouble, false, nullptr, "AdamW weight decay"},
                {"spatial", T::kBool, false, false, "also train on spatial tokens"},
            })},
      {"attribute",
       with(common_keys(true),
            {
                kSae,
                kBank,
                {"method", T::kString, false, "act-x-grad", "attribution method"},
                {"prompt_index", T::kInt, false, -1, "bank row to explain (-1: each sample's class)"},
                {"ig_steps", T::kInt, false, 10, "integrated gradients steps"},
                {"samples", T::kIntList, false, json::array(), "sample indices (empty: all)"},
            })},
      {"label",
       with(common_keys(true),
            {
                kSae,
                kBank,
                {"q", T::kInt, false, 20, "top-activating samples per component"},
                {"min_firing", T::kInt, false, 20, "minimum firings for a profile"},
                {"scoring_role", T::kString, false, "scoring_embeddings", "manifest role of the scoring space"},
            })},
      {"mine",
       with(common_keys(true),
            {
                kSae,
                kBank,
                {"method", T::kString, false, "act-x-grad", "attribution method"},
                {"slack", T::kDouble, false, 1.5, "confidence slack in output std units"},
                {"z", T::kDouble, false, 3.0, "z-score threshold"},
                {"min_firing", T::kInt, false, 10, "minimum firings of a flagged component"},
                {"stride", T::kInt, false, 1, "keep every stride-th sample"},
                {"classes", T::kIntList, false, json::array(), "classes to mine (empty: all)"},
            })},
      {"faithfulness",
       with(common_keys(true),
            {
                kSae,
                kBank,
                {"methods", T::kStringList, false, json::array({"act-x-grad", "act-x-logit-lens", "random"}),
                 "attribution methods"},
                {"modes", T::kStringList, false, json::array({"deletion_local", "insertion_local"}), "curve modes"},
                {"max_steps", T::kInt, false, 10, "perturbation steps"},
                {"pool_size", T::kInt, false, 500, "random reference pool size"},
                {"subsets", T::kInt, false, 9, "subsets for the AUC standard error"},
                {"ig_steps", T::kInt, false, 10, "integrated gradients steps"},
            })},
      {"benchmark",
       with(common_keys(true),
            {
                {"cases", T::kString, true, nullptr, "JSON file of failure cases"},
                {"strategies", T::kStringList, false,
                 json::array({"short_name", "templated", "extended_description"}), "banks or 'probe'"},
                {"baseline", T::kString, false, "short_name", "strategy the deltas are taken against"},
                {"probes", T::kString, false, "", "directory holding probe_<class>.clad"},
            })},
      {"probe",
       with(common_keys(true),
            {
                {"positive_class", T::kInt, true, nullptr, "class labelled 1"},
                {"negative_class", T::kInt, false, -1, "class labelled 0 (-1: all others)"},
                {"lr", T::kDouble, false, 0.5, "learning rate"},
                {"epochs", T::kInt, false, 2000, "gradient steps"},
                {"l2", T::kDouble, false, 0.0, "L2 penalty"},
                {"augment_component", T::kInt, false, -1, "SAE component for latent augmentation (-1: none)"},
                {"sae", T::kString, false, "", "SAE dump, needed for augmentation"},
                {"low", T::kDouble, false, 1e-9, "activations below this form the low set"},
                {"high", T::kDouble, false, 0.0, "activations above this form the high set"},
                {"alpha", T::kDouble, false, 0.5, "augmentation strength"},
            })},
      {"sweep",
       with(common_keys(false),
            {
                {"probe", T::kString, true, nullptr, "probe dump"},
                {"positive_class", T::kInt, true, nullptr, "class labelled 1"},
                {"negative_class", T::kInt, false, -1, "class labelled 0 (-1: all others)"},
                {"sweep", T::kObjectList, true, nullptr, "[{delta, dump, manifest}, ...]", false},
            })},
  };
  return table;
}

bool type_ok(ValueType type, const json& v) {
  switch (type) {
    case T::kString: return v.is_string();
    case T::kInt: return v.is_number_integer();
    case T::kDouble: return v.is_number();
    case T::kBool: return v.is_boolean();
    case T::kIntList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
    case T::kStringList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    case T::kObjectList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_object(); });
  }
  return false;
}

std::string type_name(ValueType type) {
  switch (type) {
    case T::kString: return "string";
    case T::kInt: return "integer";
    case T::kDouble: return "number";
    case T::kBool: return "boolean";
    case T::kIntList: return "list of integers";
    case T::kStringList: return "list of strings";
    case T::kObjectList: return "list of objects";
  }
  return "?";
}

long long parse_int(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == text.size() && !text.empty(), ErrorCode::kInvalidConfig,
          "--" + key + " expects an integer, got '" + text + "'");
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  if (text.empty()) return parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  return parts;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"train-sae", "attribute",  "label", "mine",
                                                 "faithfulness", "benchmark", "probe", "sweep"};
  return names;
}

bool is_subcommand(const std::string& name) {
  const auto& n = subcommands();
  return std::find(n.begin(), n.end(), name) != n.end();
}

const std::vector<KeySpec>& schema(const std::string& command) {
  auto it = schemas().find(command);
  require(it != schemas().end(), ErrorCode::kInvalidConfig, "unknown subcommand '" + command + "'");
  return it->second;
}

std::string flag_name(const KeySpec& spec) {
  std::string f = spec.name;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

void check_config(const std::string& command, const nlohmann::json& doc) {
  require(doc.is_object(), ErrorCode::kInvalidConfig, "run config must be a JSON object");
  const auto& keys = schema(command);
  for (const auto& [key, value] : doc.items()) {
    if (key == "command") {
      require(value.is_string() && value.get<std::string>() == command, ErrorCode::kInvalidConfig,
              "config 'command' does not match '" + command + "'");
      continue;
    }
    auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& s) { return s.name == key; });
    require(it != keys.end(), ErrorCode::kInvalidConfig, "unknown config key '" + key + "' for " + command);
    require(value.is_null() || type_ok(it->type, value), ErrorCode::kInvalidConfig,
            "config key '" + key + "' must be a " + type_name(it->type));
  }
}

nlohmann::json parse_flag_value(const KeySpec& spec, const std::string& text) {
  switch (spec.type) {
    case T::kString: return text;
    case T::kInt: return parse_int(spec.name, text);
    case T::kDouble: {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == text.size() && !text.empty(), ErrorCode::kInvalidConfig,
              flag_name(spec) + " expects a number, got '" + text + "'");
      return v;
    }
    case T::kBool:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw Error(ErrorCode::kInvalidConfig, flag_name(spec) + " expects true or false, got '" + text + "'");
    case T::kIntList: {
      json arr = json::array();
      for (const auto& p : split_list(text)) arr.push_back(parse_int(spec.name, p));
      return arr;
    }
    case T::kStringList: {
      json arr = json::array();
      for (const auto& p : split_list(text)) arr.push_back(p);
      return arr;
    }
    case T::kObjectList: break;
  }
  throw Error(ErrorCode::kInvalidConfig, spec.name + " can only be set in the config file");
}

nlohmann::json resolve_config(const std::string& command, const nlohmann::json& file_doc,
                              const std::map<std::string, std::string>& flags) {
  const auto& keys = schema(command);
  if (!file_doc.is_null()) check_config(command, file_doc);
  json cfg = json::object();
  for (const auto& s : keys)
    if (!s.default_value.is_null()) cfg[s.name] = s.default_value;
  if (!file_doc.is_null())
    for (const auto& [key, value] : file_doc.items())
      if (key != "command" && !value.is_null()) cfg[key] = value;
  for (const auto& [key, text] : flags) {
    auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& s) { return s.name == key; });
    require(it != keys.end(), ErrorCode::kInvalidConfig, "unknown flag for " + command + ": " + key);
    cfg[key] = parse_flag_value(*it, text);
  }
  for (const auto& s : keys)
    require(!s.required || cfg.contains(s.name), ErrorCode::kInvalidConfig,
            command + " needs " + (s.has_flag ? flag_name(s) : "config key '" + s.name + "'"));
  require(cfg.value("threads", 0) >= 0, ErrorCode::kInvalidConfig, "threads must be non-negative");
  cfg["command"] = command;
  return cfg;
}

unsigned resolve_threads(const nlohmann::json& cfg) {
  const long long t = cfg.value("threads", 0LL);
  if (t > 0) return static_cast<unsigned>(t);
  if (const char* env = std::getenv("CLAT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

std::string usage() {
  std::string s = "usage: clat <subcommand> [--config run.json] [--key value ...]\n\nsubcommands:\n";
  for (const auto& c : subcommands()) s += "  " + c + "\n";
  s += "\nRun 'clat <subcommand> --help' for its options.\n";
  return s;
}

}  // namespace clat::cli
