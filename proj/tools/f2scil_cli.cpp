// Command-line front end: run | partition-inspect | report | compare.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "f2scil/error.hpp"
#include "f2scil/orchestrator.hpp"
#include "f2scil/report.hpp"

using namespace f2scil;
using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string config_file;
  std::string manifest;
  std::vector<std::string> presets;
  std::vector<std::string> overrides;
  std::string method;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("-c,--config", f.config_file, "JSON config file (an empty file means all defaults)");
  app->add_option("--manifest", f.manifest, "rerun the config stored in a run manifest");
  app->add_option("-p,--preset", f.presets, "named override bundle, applied before --set")->take_all();
  app->add_option("-s,--set", f.overrides, "key=value override, e.g. --set loss.k=0.5")->take_all();
  app->add_option("-m,--method", f.method, "finetune | baseline_kd | sdd | sdd_nagr_only | sdd_cswa_only");
  app->add_option("--seed", f.seed, "master seed");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
  return j;
}

// Later layers win: file or manifest, presets, --set, then the dedicated flags.
ExperimentConfig resolve(const ConfigFlags& f) {
  json j = json::object();
  if (!f.manifest.empty()) {
    const json m = read_json_file(f.manifest);
    if (!m.contains("config")) throw ConfigError(f.manifest + " has no config snapshot");
    j = m["config"];
  }
  if (!f.config_file.empty()) j.merge_patch(read_json_file(f.config_file));
  for (const auto& p : f.presets) j.merge_patch(preset(p));
  for (const auto& o : f.overrides) apply_override(j, o);
  if (!f.method.empty()) j["method"] = f.method;
  if (f.seed) j["seed"] = *f.seed;
  return config_from_json(j);
}

std::filesystem::path run_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("F2SCIL_RUN_ROOT"); env && *env) return env;
  return "runs";
}

int cmd_run(const ConfigFlags& f, const std::string& out_flag, bool print_only, bool quiet) {
  const ExperimentConfig cfg = resolve(f);
  if (print_only) {
    std::cout << to_json(cfg).dump(2) << '\n';
    return 0;
  }
  const auto dir = run_root(out_flag) / run_id(cfg);
  if (!quiet) std::cerr << "run " << run_id(cfg) << " -> " << dir.string() << '\n';
  const ExperimentResult r = run_experiment(cfg, dir);
  if (!quiet) {
    std::vector<RunSummary> rows{load_metrics(dir / "metrics.jsonl")};
    std::cout << render_report(rows);
  }
  std::cout << (dir / "metrics.jsonl").string() << '\n';
  (void)r;
  return 0;
}

int cmd_partition(const ConfigFlags& f, const std::string& out_file) {
  const ExperimentConfig cfg = resolve(f);
  const ScheduledData data = prepare_data(cfg);
  json doc = schedule_to_json(data);
  doc["clients"] = cfg.federation.clients;
  doc["alpha"] = cfg.federation.alpha;
  doc["partitions"] = json::array();
  for (std::size_t t = 1; t < data.sessions.size(); ++t) {
    const auto& train = data.sessions[t].train;
    const auto shards = dirichlet_partition(train, cfg.federation.clients, cfg.federation.alpha,
                                            derive_seed(cfg.seed, SeedTag::partition, {t}));
    doc["partitions"].push_back({{"session", t}, {"shards", shards_to_json(train, shards)}});
  }
  if (out_file.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    std::ofstream(out_file) << doc.dump(2) << '\n';
  }
  return 0;
}

void write_or_print(const std::string& text, const std::string& csv_text, const std::string& csv_file) {
  std::cout << text;
  if (!csv_file.empty()) {
    std::ofstream out(csv_file);
    if (!out) throw ConfigError("cannot write " + csv_file);
    out << csv_text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated few-shot class-incremental learning simulator"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  std::string out_dir;
  bool print_config = false, quiet = false;
  auto* run = app.add_subcommand("run", "run one experiment; writes <run root>/<run id>/");
  add_config_flags(run, run_flags);
  run->add_option("-o,--out", out_dir, "run root (default: $F2SCIL_RUN_ROOT, else ./runs)");
  run->add_flag("--print-config", print_config, "print the resolved config and exit");
  run->add_flag("-q,--quiet", quiet, "print only the metrics path");

  ConfigFlags part_flags;
  std::string part_out;
  auto* part = app.add_subcommand("partition-inspect", "dump the session schedule and client shards as JSON");
  add_config_flags(part, part_flags);
  part->add_option("-o,--out", part_out, "write JSON here instead of stdout");

  std::vector<std::string> report_files;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "session table from metrics files");
  report->add_option("metrics", report_files, "metrics.jsonl files")->required()->check(CLI::ExistingFile);
  report->add_option("--csv", report_csv, "also write the table as CSV");

  std::vector<std::string> compare_files;
  std::string compare_csv;
  auto* compare = app.add_subcommand(
      "compare", "one row per metrics file (runs inside a file are averaged); the first file is the reference");
  compare->add_option("metrics", compare_files, "metrics.jsonl files")->required()->check(CLI::ExistingFile);
  compare->add_option("--csv", compare_csv, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run_flags, out_dir, print_config, quiet);
    if (*part) return cmd_partition(part_flags, part_out);
    if (*report) {
      std::vector<RunSummary> rows;
      for (const auto& f : report_files)
        for (auto& r : load_metrics(f)) rows.push_back(std::move(r));
      write_or_print(render_report(rows), render_report_csv(rows), report_csv);
      return 0;
    }
    if (*compare) {
      std::vector<RunSummary> rows;
      for (const auto& f : compare_files) rows.push_back(mean_of(load_metrics(f)));
      write_or_print(render_compare(rows), render_compare_csv(rows), compare_csv);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
