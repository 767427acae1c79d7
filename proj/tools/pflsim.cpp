#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfl/errors.hpp"
#include "pfl/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

pfl::ExperimentConfig load_config(const std::string& path, uint64_t* seed_override,
                                  const std::vector<std::string>& overrides) {
    pfl::ExperimentConfig cfg = pfl::config_from_json_text(pfl::read_text_file(path));
    for (const auto& ov : overrides) {
        const size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw pfl::ConfigError("override must look like key=value: " + ov);
        cfg = pfl::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();
    return cfg;
}

void write_outputs(const pfl::ExperimentReport& report, const pfl::ExperimentConfig& cfg,
                   const fs::path& out_dir) {
    fs::create_directories(out_dir);
    pfl::write_text_file((out_dir / "report.json").string(), pfl::report_to_json_text(report));
    pfl::write_text_file((out_dir / "metrics.csv").string(), pfl::report_to_csv_text(report, cfg));
    pfl::write_text_file((out_dir / "trigger.txt").string(), pfl::trigger_to_text(report.eval_trigger));
}

int cmd_run(const std::string& config_path, const std::string& out_dir, bool have_seed,
            uint64_t seed, const std::vector<std::string>& overrides) {
    pfl::ExperimentConfig cfg = load_config(config_path, have_seed ? &seed : nullptr, overrides);
    pfl::ExperimentReport report = pfl::run_experiment(cfg);
    write_outputs(report, cfg, out_dir);
    std::cout << "acc_mean=" << report.acc_mean << " asr_mean=" << report.asr_mean
              << " (report in " << out_dir << ")\n";
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& grid_path, const std::string& out_dir) {
    pfl::ExperimentConfig base = pfl::config_from_json_text(pfl::read_text_file(config_path));
    json grid;
    try {
        grid = json::parse(pfl::read_text_file(grid_path));
    } catch (const json::exception& e) {
        throw pfl::ConfigError(std::string("grid file is not valid JSON: ") + e.what());
    }
    if (!grid.is_object() || grid.empty())
        throw pfl::ConfigError("grid must be a non-empty object of key -> [values]");

    std::vector<std::string> keys;
    std::vector<std::vector<json>> values;
    for (auto it = grid.begin(); it != grid.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw pfl::ConfigError("grid entry '" + it.key() + "' must be a non-empty array");
        keys.push_back(it.key());
        values.emplace_back(it.value().begin(), it.value().end());
    }

    size_t total = 1;
    for (const auto& v : values) total *= v.size();

    fs::create_directories(out_dir);
    std::ostringstream summary;
    summary << "run,config_hash,strategy,attack,defense,seed";
    for (const auto& k : keys) summary << "," << k;
    summary << ",acc_mean,asr_mean\n";

    std::vector<size_t> idx(keys.size(), 0);
    for (size_t run = 0; run < total; ++run) {
        pfl::ExperimentConfig cfg = base;
        for (size_t k = 0; k < keys.size(); ++k)
            cfg = pfl::apply_override(cfg, keys[k], values[k][idx[k]].dump());
        char name[32];
        std::snprintf(name, sizeof(name), "run_%03zu", run);
        const fs::path run_dir = fs::path(out_dir) / name;
        pfl::ExperimentReport report = pfl::run_experiment(cfg);
        write_outputs(report, cfg, run_dir);

        summary << name << "," << report.config_hash << "," << pfl::to_string(cfg.strategy.kind)
                << "," << pfl::to_string(cfg.attack.kind) << "," << pfl::to_string(cfg.defense.kind)
                << "," << cfg.seed;
        for (size_t k = 0; k < keys.size(); ++k) summary << "," << values[k][idx[k]].dump();
        summary << "," << report.acc_mean << "," << report.asr_mean << "\n";
        std::cout << name << ": acc=" << report.acc_mean << " asr=" << report.asr_mean << "\n";

        for (size_t k = keys.size(); k-- > 0;) {
            if (++idx[k] < values[k].size()) break;
            idx[k] = 0;
        }
    }
    pfl::write_text_file((fs::path(out_dir) / "summary.csv").string(), summary.str());
    std::cout << "sweep summary in " << (fs::path(out_dir) / "summary.csv").string() << "\n";
    return kExitOk;
}

int cmd_dump_trigger(const std::string& report_path, const std::string& out_path) {
    json j;
    try {
        j = json::parse(pfl::read_text_file(report_path));
    } catch (const json::exception& e) {
        throw pfl::ConfigError(std::string("report is not valid JSON: ") + e.what());
    }
    if (!j.contains("trigger")) throw pfl::ConfigError("report has no trigger section");
    std::ostringstream out;
    out << "# Feature ID: Value (target class " << j["trigger"]["target"].get<int>() << ")\n";
    for (const auto& e : j["trigger"]["values"]) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", e["value"].get<double>());
        out << e["coord"].get<int>() << ": " << buf << "\n";
    }
    if (out_path.empty())
        std::cout << out.str();
    else
        pfl::write_text_file(out_path, out.str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pflsim - personalized federated learning backdoor simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", grid_path, report_path, trigger_out;
    uint64_t seed = 0;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "run one experiment from a config file");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory");
    auto* seed_opt = run->add_option("--seed", seed, "override the config seed");
    run->add_option("--override", overrides, "section.key=value config overrides");

    auto* sweep = app.add_subcommand("sweep", "cross product of config overrides");
    sweep->add_option("--config", config_path, "base experiment config (JSON)")->required();
    sweep->add_option("--grid", grid_path, "grid file: {\"section.key\": [values...]}")->required();
    sweep->add_option("--out", out_dir, "output directory");

    auto* dump = app.add_subcommand("dump-trigger", "extract trigger.txt from a report");
    dump->add_option("--report", report_path, "report.json produced by run")->required();
    dump->add_option("--out", trigger_out, "output path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, seed_opt->count() > 0, seed, overrides);
        if (sweep->parsed()) return cmd_sweep(config_path, grid_path, out_dir);
        if (dump->parsed()) return cmd_dump_trigger(report_path, trigger_out);
    } catch (const pfl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
