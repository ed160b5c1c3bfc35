#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include "clat/cli.hpp"
#include "clat/common.hpp"

namespace clat::cli {

namespace {

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kInvalidConfig, "cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, "config file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << usage();
    return 1;
  }
  const std::string& command = args.front();
  if (command == "--help" || command == "-h" || command == "help") {
    out << usage();
    return 0;
  }
  if (!is_subcommand(command)) {
    err << "clat: unknown subcommand '" << command << "'\n\n" << usage();
    return 1;
  }

  CLI::App app("clat " + command, "clat " + command);
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; flags override its values");
  const auto& keys = schema(command);
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> options;
  for (const auto& spec : keys) {
    if (!spec.has_flag) continue;
    options[spec.name] = app.add_option(flag_name(spec), raw[spec.name], spec.help);
  }

  try {
    std::vector<std::string> rest(args.begin() + 1, args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "clat " << command << ": " << e.what() << "\n\n" << app.help();
    return 1;
  }

  std::map<std::string, std::string> flags;
  for (const auto& [name, opt] : options)
    if (opt->count() > 0) flags[name] = raw[name];

  nlohmann::json cfg;
  try {
    const nlohmann::json file_doc = config_path.empty() ? nlohmann::json() : read_config_file(config_path);
    cfg = resolve_config(command, file_doc, flags);
  } catch (const Error& e) {
    err << "clat " << command << ": " << e.what() << "\n";
    return 1;
  }

  try {
    const std::filesystem::path out_dir = cfg.at("out").get<std::string>();
    std::filesystem::create_directories(out_dir);
    std::ofstream echo(out_dir / "run-config.json");
    require(static_cast<bool>(echo), ErrorCode::kIo, "cannot write " + (out_dir / "run-config.json").string());
    echo << cfg.dump(2) << "\n";
    echo.close();
    err << "clat " << command << ": resolved config written to " << (out_dir / "run-config.json").string() << "\n";
    run_command(command, cfg, out);
  } catch (const Error& e) {
    err << "clat " << command << ": " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const nlohmann::json::exception& e) {
    err << "clat " << command << ": bad input document: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "clat " << command << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace clat::cli
