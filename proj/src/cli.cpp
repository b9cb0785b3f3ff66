#include "pkan/cli.hpp"

#include <cstdlib>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pkan/diagnostics.hpp"
#include "pkan/experiment.hpp"
#include "pkan/serialize.hpp"

namespace pkan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> parallelism;
    std::string format = "csv";
};

fs::path output_dir(const Common& c, const std::string& configured) {
    if (!c.out.empty()) return c.out;
    if (!configured.empty()) return configured;
    const std::string stem = fs::path(c.config).stem().string();
    if (const char* root = std::getenv(kOutputRootVariable); root != nullptr && *root != '\0') {
        return fs::path(root) / stem;
    }
    return fs::path("pkan-out") / stem;
}

void prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error(fmt::format("cannot create output directory {}", dir.string()));
}

// Seeds and parallelism given on the command line override the suite file.
json with_overrides(json j, const Common& c) {
    if (c.seed) {
        if (!j.contains("base")) j["base"] = json::object();
        if (j["base"].is_object()) j["base"]["seed"] = *c.seed;
    }
    if (c.parallelism) j["parallelism"] = *c.parallelism;
    return j;
}

int cmd_train(const Common& c, std::ostream& out) {
    json j = load_json_file(c.config);
    if (c.seed) j["seed"] = *c.seed;
    const RunConfig config = run_config_from_json(j);
    config.validate();
    const fs::path dir = output_dir(c, config.output);
    prepare_dir(dir);

    const RunOutcome o = run_experiment(config);
    atomic_write(dir / "config.json", run_config_to_json(config).dump(2) + "\n");
    {
        std::ostringstream ds;
        write_dataset_csv(ds, o.data);
        atomic_write(dir / "dataset.csv", ds.str());
    }
    atomic_write(dir / "rounds.jsonl", round_log_text(o));
    atomic_write(dir / "diagnostics.csv", diagnostics_csv(o));
    if (o.result.aborted) {
        const fs::path snap = dir / "divergence_snapshot.json";
        save_checkpoint(snap, o.result.net, nullptr);
        out << fmt::format("training diverged: {}\nsnapshot: {}\n", o.result.abort_reason, snap.string());
        return kExitDivergence;
    }
    save_checkpoint(dir / "checkpoint.json", o.result.net, &o.optimizer);
    atomic_write(dir / "symbolic.txt", symbolic_text(o));
    out << fmt::format("trained {} on {}: train R2 {:.4f}, validation R2 {:.4f}, {} of {} edges fixed\n",
                       config.architecture.to_string(), to_string(config.dataset.function), o.train_r2,
                       o.validation_r2, o.result.net.fixed_edge_count(), o.result.net.edges().size());
    out << fmt::format("outputs in {}\n", dir.string());
    return kExitOk;
}

int cmd_ablate(const Common& c, std::ostream& out) {
    const AblationConfig config = ablation_config_from_json(with_overrides(load_json_file(c.config), c));
    const fs::path dir = output_dir(c, config.base.output);
    prepare_dir(dir);
    const auto results = run_ablation(config);
    atomic_write(dir / "summary.csv", ablation_summary_csv(results));
    atomic_write(dir / "trajectories.csv", ablation_trajectory_csv(results));
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.seeds.size() - r.succeeded();
    out << fmt::format("{} cells x {} seeds, {} failed runs; outputs in {}\n", results.size(), config.seeds.size(),
                       failed, dir.string());
    return kExitOk;
}

int cmd_noise_sweep(const Common& c, std::ostream& out) {
    json j = with_overrides(load_json_file(c.config), c);
    const NoiseSweepConfig config = noise_sweep_config_from_json(j);
    const fs::path dir = output_dir(c, config.base.output);
    prepare_dir(dir);
    const auto results = run_noise_sweep(config);
    atomic_write(dir / "noise.csv", noise_sweep_csv(results));
    out << fmt::format("{} cells; outputs in {}\n", results.size(), dir.string());
    return kExitOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
    const Checkpoint cp = load_checkpoint(path);
    const Network& net = cp.net;
    const EdgeConfig& ec = net.edge_config();
    const ParameterCount pc = net.parameter_counts();
    out << fmt::format("architecture {}\n", net.architecture().to_string());
    out << fmt::format("edges: degree {} B-splines, {} intervals, domain [{}, {}], transform grid {}\n", ec.degree,
                       ec.intervals, ec.lo, ec.hi, ec.transform_size);
    out << fmt::format("parameters: {} total ({} in edges, {} biases), {} of {} edges fixed\n", pc.total,
                       pc.total - pc.biases, pc.biases, net.fixed_edge_count(), net.edges().size());
    const Objective objective(ec, default_spaces(ec));
    const auto symbolic = render_symbolic(net);
    for (std::size_t e = 0; e < net.edges().size(); ++e) {
        const Edge& edge = net.edges()[e];
        if (const auto* sp = std::get_if<TrainableSpline>(&edge.state)) {
            const auto ent = objective.edge_entropies(sp->spline);
            std::string ents;
            for (std::size_t s = 0; s < ent.size(); ++s) {
                ents += fmt::format(" {}={:.4f}", to_string(objective.spaces()[s].kind()), ent[s]);
            }
            out << fmt::format("{} spline params={} entropy:{}\n", edge.id.label(), pc.per_edge[e], ents);
        } else {
            const auto& fe = std::get<FixedEdge>(edge.state);
            out << fmt::format("{} fixed {} params={} fit_r2={:.4f}\n", edge.id.label(),
                               to_string(fe.fixed.space.kind()), pc.per_edge[e], fe.fit_r2);
        }
    }
    out << "symbolic:\n";
    for (const auto& s : symbolic) {
        out << fmt::format("  {} = {}", s.id.label(), s.expression);
        if (!s.variable.empty()) out << fmt::format("    [{}]", s.variable);
        out << '\n';
    }
    if (cp.optimizer) out << fmt::format("optimizer: {} steps, learning rate {}\n", cp.optimizer->steps, cp.optimizer->learning_rate);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Projective KAN training, ablations, noise sweeps and checkpoint inspection", "pkan"};
    app.require_subcommand(1);
    Common common;
    std::string checkpoint;

    auto add_common = [&](CLI::App* sub, bool with_parallelism) {
        sub->add_option("--config", common.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory (default: $PKAN_OUT_ROOT/<config name>)");
        sub->add_option("--seed", common.seed, "override the configured seed");
        if (with_parallelism) sub->add_option("--parallelism", common.parallelism, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--format", common.format, "output format")->check(CLI::IsMember({"csv"}));
    };
    CLI::App* train = app.add_subcommand("train", "train one network and write checkpoint, logs and diagnostics");
    add_common(train, false);
    CLI::App* ablate = app.add_subcommand("ablate", "run a function x space x weight suite");
    add_common(ablate, true);
    CLI::App* noise = app.add_subcommand("noise-sweep", "compare P-KAN with a spline-only baseline under noise");
    add_common(noise, true);
    CLI::App* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
    inspect->add_option("checkpoint", checkpoint, "checkpoint file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train(common, out);
        if (ablate->parsed()) return cmd_ablate(common, out);
        if (noise->parsed()) return cmd_noise_sweep(common, out);
        if (inspect->parsed()) return cmd_inspect(checkpoint, out);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        err << "corrupt input: " << e.what() << "\n";
        return kExitCorrupt;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace pkan
