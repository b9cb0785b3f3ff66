#include "pkan/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "pkan/diagnostics.hpp"
#include "pkan/serialize.hpp"

namespace pkan {

using nlohmann::json;

namespace {

// Strict reader over one JSON object: every key must be consumed.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where()));
    }

    std::string at(std::string_view key) const { return path_.empty() ? std::string(key) : fmt::format("{}.{}", path_, key); }

    const json* raw(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class F>
    void number(const char* key, F&& set) {
        if (const json* v = raw(key)) {
            if (!v->is_number()) throw ConfigError(fmt::format("{}: expected a number", at(key)));
            set(v->get<double>());
        }
    }

    template <class T>
    void integer(const char* key, T& dest) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer()) throw ConfigError(fmt::format("{}: expected an integer", at(key)));
            if constexpr (std::is_unsigned_v<T>) {
                if (v->get<std::int64_t>() < 0) throw ConfigError(fmt::format("{}: must be nonnegative", at(key)));
                dest = static_cast<T>(v->get<std::uint64_t>());
            } else {
                dest = static_cast<T>(v->get<std::int64_t>());
            }
        }
    }

    void boolean(const char* key, bool& dest) {
        if (const json* v = raw(key)) {
            if (!v->is_boolean()) throw ConfigError(fmt::format("{}: expected true or false", at(key)));
            dest = v->get<bool>();
        }
    }

    std::optional<std::string> string(const char* key) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) throw ConfigError(fmt::format("{}: expected a string", at(key)));
            return v->get<std::string>();
        }
        return std::nullopt;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) throw ConfigError(fmt::format("{}: unknown key", at(it.key())));
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string, std::less<>> seen_;
};

std::vector<std::size_t> size_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(fmt::format("{}: expected an array of integers", path));
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
            throw ConfigError(fmt::format("{}: expected nonnegative integers", path));
        }
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

std::vector<SpaceKind> space_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(fmt::format("{}: expected an array of space names", path));
    std::vector<SpaceKind> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw ConfigError(fmt::format("{}: expected space names", path));
        try {
            out.push_back(parse_space_kind(e.get<std::string>()));
        } catch (const ConfigError& err) {
            throw ConfigError(fmt::format("{}: {}", path, err.what()));
        }
    }
    return out;
}

template <class Parse>
auto parse_at(const std::string& path, Parse&& parse) {
    try {
        return parse();
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path, e.what()));
    }
}

void apply_weights(const json& j, CostWeights& w, const std::string& path) {
    Fields f(j, path);
    f.number("alpha", [&](double v) { w.alpha = v; });
    f.number("beta", [&](double v) { w.beta = v; });
    f.number("gamma", [&](double v) { w.gamma = v; });
    f.integer("norm_order", w.norm_order);
    f.number("lambda_min", [&](double v) { w.schedule.lambda_min = v; });
    f.number("lambda_max", [&](double v) { w.schedule.lambda_max = v; });
    f.number("r2_min", [&](double v) { w.r2_min = v; });
    f.number("tau_regret", [&](double v) { w.tau_regret = v; });
    f.integer("rounds", w.rounds);
    f.finish();
    w.schedule.rounds = w.rounds;
}

std::string space_label(const std::vector<SpaceKind>& spaces) {
    std::string out;
    for (std::size_t i = 0; i < spaces.size(); ++i) {
        if (i > 0) out += '+';
        out += to_string(spaces[i]);
    }
    return out;
}

std::string weights_label(const json& w) {
    if (!w.is_object() || w.empty()) return "default";
    std::string out;
    for (auto it = w.begin(); it != w.end(); ++it) {
        if (!out.empty()) out += ';';
        out += fmt::format("{}={}", it.key(), it.value().dump());
    }
    return out;
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", v);
}

std::string csv_text(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
    }
    return s;
}

double mse(const Network& net, std::span<const Example> examples) {
    if (examples.empty()) return std::nan("");
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& ex : examples) {
        const auto pred = net.evaluate(ex.x);
        for (std::size_t o = 0; o < pred.size(); ++o) {
            const double r = pred[o] - ex.y[o];
            acc += r * r;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace

// ---- RunConfig ----------------------------------------------------------------

void RunConfig::validate() const {
    std::vector<std::string> errors;
    auto check = [&](const char* field, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError& e) {
            errors.push_back(fmt::format("{}: {}", field, e.what()));
        }
    };
    check("architecture", [&] { architecture.validate(); });
    check("spline", [&] { edges.validate(); });
    check("weights", [&] { trainer.weights.validate(); });
    check("training", [&] { trainer.validate(); });
    check("spaces", [&] {
        if (spaces.empty()) throw ConfigError("at least one space is required");
        std::set<SpaceKind> unique(spaces.begin(), spaces.end());
        if (unique.size() != spaces.size()) throw ConfigError("spaces are listed more than once");
    });
    check("training.n_keep", [&] {
        if (trainer.n_keep > edges.transform_size) {
            throw ConfigError(fmt::format("{} exceeds the transform size {}", trainer.n_keep, edges.transform_size));
        }
    });
    check("dataset", [&] {
        if (dataset.samples < 10) throw ConfigError(fmt::format("samples must be >= 10, got {}", dataset.samples));
        if (!(dataset.validation_fraction > 0.0 && dataset.validation_fraction < 1.0)) {
            throw ConfigError("validation_fraction must lie in (0, 1)");
        }
        const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(dataset.samples) * dataset.validation_fraction));
        if (n_val == 0 || n_val == dataset.samples) throw ConfigError("validation split would be empty");
        noise().validate();
    });
    check("architecture", [&] {
        if (architecture.widths.size() < 2) return;
        const std::size_t dim = function().dimension();
        if (architecture.inputs() != dim) {
            throw ConfigError(fmt::format("input width {} does not match the {}-dimensional function {}",
                                          architecture.inputs(), dim, to_string(dataset.function)));
        }
        if (architecture.outputs() != 1) throw ConfigError("output width must be 1 for scalar benchmarks");
    });
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
}

TestFunction RunConfig::function() const {
    return dataset.time ? make_function(dataset.function, *dataset.time) : make_function(dataset.function);
}

NoiseSpec RunConfig::noise() const { return NoiseSpec{dataset.noise, dataset.snr_db, seed}; }

RunConfig run_config_from_json(const json& j, const RunConfig& base) {
    RunConfig c = base;
    Fields f(j, "");
    if (const json* v = f.raw("architecture")) c.architecture.widths = size_list(*v, "architecture");
    if (const json* v = f.raw("spline")) {
        Fields s(*v, "spline");
        s.integer("degree", c.edges.degree);
        s.integer("intervals", c.edges.intervals);
        s.integer("transform_size", c.edges.transform_size);
        if (const json* d = s.raw("domain")) {
            if (!d->is_array() || d->size() != 2 || !(*d)[0].is_number() || !(*d)[1].is_number()) {
                throw ConfigError("spline.domain: expected [lo, hi]");
            }
            c.edges.lo = (*d)[0].get<double>();
            c.edges.hi = (*d)[1].get<double>();
        }
        s.finish();
    }
    if (const json* v = f.raw("spaces")) c.spaces = space_list(*v, "spaces");
    if (const json* v = f.raw("weights")) apply_weights(*v, c.trainer.weights, "weights");
    if (const json* v = f.raw("training")) {
        Fields t(*v, "training");
        TrainerConfig& tc = c.trainer;
        t.integer("pretrain_epochs", tc.pretrain_epochs);
        t.integer("finetune_epochs", tc.finetune_epochs);
        t.integer("n_keep", tc.n_keep);
        t.number("learning_rate", [&](double x) { tc.learning_rate = x; });
        t.number("regret_window_fraction", [&](double x) { tc.regret_window_fraction = x; });
        t.number("hidden_margin", [&](double x) { tc.hidden_margin = x; });
        t.number("r2_relaxation", [&](double x) { tc.r2_relaxation = x; });
        t.boolean("fixing_enabled", tc.fixing_enabled);
        t.number("divergence_limit", [&](double x) { tc.divergence_limit = x; });
        t.integer("jacobian_points", tc.jacobian_points);
        t.finish();
    }
    if (const json* v = f.raw("dataset")) {
        Fields d(*v, "dataset");
        DatasetSpec& ds = c.dataset;
        if (auto name = d.string("function")) ds.function = parse_at("dataset.function", [&] { return parse_function_kind(*name); });
        d.integer("samples", ds.samples);
        d.number("validation_fraction", [&](double x) { ds.validation_fraction = x; });
        if (const json* t = d.raw("time")) {
            if (t->is_null()) {
                ds.time.reset();
            } else if (t->is_number()) {
                ds.time = t->get<double>();
            } else {
                throw ConfigError("dataset.time: expected a number or null");
            }
        }
        if (const json* n = d.raw("noise")) {
            Fields nf(*n, "dataset.noise");
            if (auto kind = nf.string("kind")) ds.noise = parse_at("dataset.noise.kind", [&] { return parse_noise_kind(*kind); });
            if (const json* s = nf.raw("snr_db")) {
                if (s->is_null()) {
                    ds.snr_db = std::numeric_limits<double>::infinity();
                } else if (s->is_number()) {
                    ds.snr_db = s->get<double>();
                } else {
                    throw ConfigError("dataset.noise.snr_db: expected a number or null");
                }
            }
            nf.finish();
            if (ds.noise == NoiseKind::None) ds.snr_db = std::numeric_limits<double>::infinity();
        }
        d.finish();
    }
    f.integer("seed", c.seed);
    if (auto out = f.string("output")) c.output = *out;
    f.finish();
    return c;
}

json run_config_to_json(const RunConfig& c) {
    const CostWeights& w = c.trainer.weights;
    const TrainerConfig& t = c.trainer;
    json spaces = json::array();
    for (auto s : c.spaces) spaces.push_back(std::string(to_string(s)));
    json noise{{"kind", std::string(to_string(c.dataset.noise))}};
    noise["snr_db"] = std::isfinite(c.dataset.snr_db) ? json(c.dataset.snr_db) : json(nullptr);
    json dataset{{"function", std::string(to_string(c.dataset.function))},
                 {"samples", c.dataset.samples},
                 {"validation_fraction", c.dataset.validation_fraction},
                 {"noise", noise}};
    dataset["time"] = c.dataset.time ? json(*c.dataset.time) : json(nullptr);
    return json{{"architecture", c.architecture.widths},
                {"spline",
                 {{"degree", c.edges.degree},
                  {"intervals", c.edges.intervals},
                  {"domain", {c.edges.lo, c.edges.hi}},
                  {"transform_size", c.edges.transform_size}}},
                {"spaces", spaces},
                {"weights",
                 {{"alpha", w.alpha},
                  {"beta", w.beta},
                  {"gamma", w.gamma},
                  {"norm_order", w.norm_order},
                  {"lambda_min", w.schedule.lambda_min},
                  {"lambda_max", w.schedule.lambda_max},
                  {"r2_min", w.r2_min},
                  {"tau_regret", w.tau_regret},
                  {"rounds", w.rounds}}},
                {"training",
                 {{"pretrain_epochs", t.pretrain_epochs},
                  {"finetune_epochs", t.finetune_epochs},
                  {"n_keep", t.n_keep},
                  {"learning_rate", t.learning_rate},
                  {"regret_window_fraction", t.regret_window_fraction},
                  {"hidden_margin", t.hidden_margin},
                  {"r2_relaxation", t.r2_relaxation},
                  {"fixing_enabled", t.fixing_enabled},
                  {"divergence_limit", t.divergence_limit},
                  {"jacobian_points", t.jacobian_points}}},
                {"dataset", dataset},
                {"seed", c.seed},
                {"output", c.output}};
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{} is not valid JSON: {}", path.string(), e.what()));
    }
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(load_json_file(path)); }

// ---- single runs ----------------------------------------------------------------

double safe_r2(const Network& net, std::span<const Example> examples) {
    std::vector<double> pred;
    std::vector<double> target;
    for (const auto& ex : examples) {
        const auto p = net.evaluate(ex.x);
        pred.insert(pred.end(), p.begin(), p.end());
        target.insert(target.end(), ex.y.begin(), ex.y.end());
    }
    try {
        return r2_score(pred, target);
    } catch (const DegenerateInputError&) {
        return std::nan("");
    }
}

RunOutcome run_experiment(const RunConfig& config) {
    config.validate();
    RunOutcome out{config, {}, {Network::make_empty(config.architecture, config.edges), {}, {}, {}, {}, false, {}},
                   {}, {}, 0, 0, 0, 0, 0, 0, 0, 0};
    const TestFunction f = config.function();
    out.data = sample_dataset(f, config.dataset.samples, config.noise(), config.dataset.validation_fraction, config.seed);
    const auto train = out.data.train_examples();
    const auto validation = out.data.validation_examples();
    const auto clean_validation = out.data.validation_examples(true);

    std::vector<FunctionalSpace> spaces;
    for (auto kind : config.spaces) spaces.emplace_back(kind, config.edges.transform_size, config.edges.lo, config.edges.hi);
    TrainerConfig tc = config.trainer;
    tc.jacobian_seed = config.seed;
    tc.weights.schedule.rounds = tc.weights.rounds;
    const Objective objective(config.edges, spaces);
    Trainer trainer(tc, objective);
    trainer.set_round_observer([&](int round, Network& net) {
        RoundMetrics m;
        m.round = round;
        m.parameter_count = net.parameter_count();
        m.fixed_edges = net.fixed_edge_count();
        m.train_r2 = safe_r2(net, train);
        m.validation_r2 = safe_r2(net, validation);
        m.mean_space_entropy.assign(spaces.size(), 0.0);
        std::size_t count = 0;
        for (const auto& e : net.edges()) {
            if (const auto* sp = std::get_if<TrainableSpline>(&e.state)) {
                const auto ent = objective.edge_entropies(sp->spline);
                for (std::size_t s = 0; s < ent.size(); ++s) m.mean_space_entropy[s] += ent[s];
                ++count;
            }
        }
        for (double& v : m.mean_space_entropy) v = count == 0 ? std::nan("") : v / static_cast<double>(count);
        out.metrics.push_back(std::move(m));
    });

    const auto start = std::chrono::steady_clock::now();
    out.result = trainer.run(Network(config.architecture, config.edges, config.seed), train, validation, f.domain());
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.optimizer = snapshot_of(trainer.optimizer());

    const Network& net = out.result.net;
    out.train_mse = mse(net, train);
    out.validation_mse = mse(net, validation);
    out.clean_validation_mse = mse(net, clean_validation);
    out.train_r2 = safe_r2(net, train);
    out.validation_r2 = safe_r2(net, validation);
    out.unfixed_fraction = 1.0 - static_cast<double>(net.fixed_edge_count()) / static_cast<double>(net.edges().size());
    for (const auto& r : out.result.rounds) out.reverted_total += r.reverted.size();
    return out;
}

std::string diagnostics_csv(const RunOutcome& outcome) {
    const auto& spectra = outcome.result.spectra;
    const std::size_t rows = std::min(spectra.size(), outcome.metrics.size());
    std::size_t k = 0;
    for (std::size_t r = 0; r < rows; ++r) k = std::max(k, spectra[r].singular_values.size());
    std::string out = fmt::format("# {}\n", kDiagnosticsSchema);
    out += "round,param_count,fixed_edges,jac_std";
    for (std::size_t i = 1; i <= k; ++i) out += fmt::format(",sv_{}", i);
    out += ",train_r2,val_r2";
    for (auto s : outcome.config.spaces) out += fmt::format(",entropy_{}", to_string(s));
    out += '\n';
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& sp = spectra[r];
        const auto& m = outcome.metrics[r];
        out += fmt::format("{},{},{},{}", m.round, m.parameter_count, m.fixed_edges, csv_number(sp.jac_std));
        for (std::size_t i = 0; i < k; ++i) {
            out += ',';
            if (i < sp.singular_values.size()) out += csv_number(sp.singular_values[i]);
        }
        out += fmt::format(",{},{}", csv_number(m.train_r2), csv_number(m.validation_r2));
        for (double e : m.mean_space_entropy) out += "," + csv_number(e);
        out += '\n';
    }
    return out;
}

std::string symbolic_text(const RunOutcome& outcome) {
    std::string out;
    for (const auto& s : outcome.result.symbolic) {
        out += fmt::format("{} {}: {}", s.id.label(), s.space ? std::string(to_string(*s.space)) : "spline", s.expression);
        if (!s.variable.empty()) out += fmt::format("    [{}]", s.variable);
        out += '\n';
    }
    return out;
}

std::string round_log_text(const RunOutcome& outcome) {
    std::string out;
    for (const auto& r : outcome.result.rounds) out += round_log_line(r) + "\n";
    return out;
}

// ---- worker pool ------------------------------------------------------------------

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> values) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---- ablation suite ------------------------------------------------------------------

std::vector<AblationCell> AblationConfig::cells() const {
    std::vector<std::vector<SpaceKind>> subsets = space_subsets;
    if (subsets.empty()) subsets.push_back(base.spaces);
    std::vector<json> grid = weight_grid;
    if (grid.empty()) grid.push_back(json::object());
    std::vector<AblationCell> out;
    for (auto fn : functions) {
        for (const auto& sub : subsets) {
            for (const auto& w : grid) out.push_back({fn, sub, w, weights_label(w)});
        }
    }
    return out;
}

AblationConfig ablation_config_from_json(const json& j) {
    AblationConfig c;
    Fields f(j, "");
    if (const json* b = f.raw("base")) c.base = run_config_from_json(*b);
    if (const json* v = f.raw("functions")) {
        if (!v->is_array()) throw ConfigError("functions: expected an array of names");
        for (const auto& e : *v) {
            if (!e.is_string()) throw ConfigError("functions: expected names");
            c.functions.push_back(parse_at("functions", [&] { return parse_function_kind(e.get<std::string>()); }));
        }
    }
    if (const json* v = f.raw("space_subsets")) {
        if (!v->is_array()) throw ConfigError("space_subsets: expected an array of arrays");
        for (const auto& e : *v) c.space_subsets.push_back(space_list(e, "space_subsets"));
    }
    if (const json* v = f.raw("weight_grid")) {
        if (!v->is_array()) throw ConfigError("weight_grid: expected an array of objects");
        for (std::size_t i = 0; i < v->size(); ++i) {
            CostWeights probe = c.base.trainer.weights;
            apply_weights((*v)[i], probe, fmt::format("weight_grid[{}]", i));
            c.weight_grid.push_back((*v)[i]);
        }
    }
    std::size_t repeats = 0;
    f.integer("repeats", repeats);
    if (const json* v = f.raw("seeds")) {
        for (std::size_t s : size_list(*v, "seeds")) c.seeds.push_back(s);
    }
    if (c.seeds.empty()) {
        for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) c.seeds.push_back(c.base.seed + r);
    }
    f.integer("parallelism", c.parallelism);
    f.finish();
    if (c.functions.empty()) throw ConfigError("functions: the suite is empty");
    if (c.parallelism == 0) throw ConfigError("parallelism must be >= 1");
    return c;
}

std::size_t CellResult::succeeded() const {
    return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const SeedResult& s) { return s.ok; }));
}

double CellResult::mean_unfixed() const {
    std::vector<double> v;
    for (const auto& s : seeds) {
        if (s.ok) v.push_back(s.unfixed_fraction);
    }
    return mean_of(v);
}

std::vector<CellResult> run_ablation(const AblationConfig& config) {
    const auto cells = config.cells();
    std::vector<CellResult> results(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        results[c].cell = cells[c];
        results[c].seeds.resize(config.seeds.size());
    }
    const std::size_t per_cell = config.seeds.size();
    parallel_for(cells.size() * per_cell, config.parallelism, [&](std::size_t job) {
        const std::size_t c = job / per_cell;
        const std::size_t s = job % per_cell;
        SeedResult& r = results[c].seeds[s];
        r.seed = config.seeds[s];
        try {
            RunConfig rc = config.base;
            rc.dataset.function = cells[c].function;
            rc.spaces = cells[c].spaces;
            apply_weights(cells[c].weights, rc.trainer.weights, "weights");
            rc.seed = r.seed;
            const RunOutcome o = run_experiment(rc);
            if (o.result.aborted) throw NumericError(o.result.abort_reason);
            r.ok = true;
            r.train_r2 = o.train_r2;
            r.validation_r2 = o.validation_r2;
            r.unfixed_fraction = o.unfixed_fraction;
            r.fixed_edges = o.result.net.fixed_edge_count();
            r.reverted_total = o.reverted_total;
            r.jac_std_initial = o.result.spectra.front().jac_std;
            r.jac_std_final = o.result.spectra.back().jac_std;
            for (const auto& e : o.result.pretrain) r.log_loss.push_back(std::log10(e.total));
            for (const auto& round : o.result.rounds) {
                for (const auto& e : round.trajectory) r.log_loss.push_back(std::log10(e.total));
            }
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
    });
    return results;
}

std::string ablation_summary_csv(const std::vector<CellResult>& cells) {
    std::string out = fmt::format("# {}\n", kAblationSchema);
    out += "cell,function,spaces,weights,seeds,succeeded,failed,mean_train_r2,mean_val_r2,mean_unfixed,"
           "mean_fixed_edges,mean_reverted,mean_jac_std_initial,mean_jac_std_final,mean_final_log_loss,first_error\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        std::vector<double> tr, va, fixed, rev, j0, j1, last;
        std::string err;
        for (const auto& s : cell.seeds) {
            if (!s.ok) {
                if (err.empty()) err = s.error;
                continue;
            }
            tr.push_back(s.train_r2);
            va.push_back(s.validation_r2);
            fixed.push_back(static_cast<double>(s.fixed_edges));
            rev.push_back(static_cast<double>(s.reverted_total));
            j0.push_back(s.jac_std_initial);
            j1.push_back(s.jac_std_final);
            if (!s.log_loss.empty()) last.push_back(s.log_loss.back());
        }
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", c, to_string(cell.cell.function),
                           space_label(cell.cell.spaces), csv_text(cell.cell.weights_label), cell.seeds.size(),
                           cell.succeeded(), cell.seeds.size() - cell.succeeded(), csv_number(mean_of(tr)),
                           csv_number(mean_of(va)), csv_number(cell.mean_unfixed()), csv_number(mean_of(fixed)),
                           csv_number(mean_of(rev)), csv_number(mean_of(j0)), csv_number(mean_of(j1)),
                           csv_number(mean_of(last)), csv_text(err));
    }
    return out;
}

std::string ablation_trajectory_csv(const std::vector<CellResult>& cells) {
    std::string out = fmt::format("# {}\n", kTrajectorySchema);
    out += "cell,seed,epoch,log10_q\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (const auto& s : cells[c].seeds) {
            for (std::size_t e = 0; e < s.log_loss.size(); ++e) {
                if (e % 10 != 0 && e + 1 != s.log_loss.size()) continue;
                out += fmt::format("{},{},{},{}\n", c, s.seed, e, csv_number(s.log_loss[e]));
            }
        }
    }
    return out;
}

// ---- noise sweep -----------------------------------------------------------------------

RunConfig baseline_of(const RunConfig& config) {
    RunConfig b = config;
    b.trainer.weights.beta = 0.0;
    b.trainer.fixing_enabled = false;
    return b;
}

NoiseSweepConfig noise_sweep_config_from_json(const json& j) {
    NoiseSweepConfig c;
    Fields f(j, "");
    if (const json* b = f.raw("base")) c.base = run_config_from_json(*b);
    if (const json* v = f.raw("noise_kinds")) {
        if (!v->is_array()) throw ConfigError("noise_kinds: expected an array of names");
        for (const auto& e : *v) {
            if (!e.is_string()) throw ConfigError("noise_kinds: expected names");
            c.kinds.push_back(parse_at("noise_kinds", [&] { return parse_noise_kind(e.get<std::string>()); }));
        }
    }
    if (const json* v = f.raw("snr_db")) {
        if (!v->is_array()) throw ConfigError("snr_db: expected an array of numbers");
        for (const auto& e : *v) {
            if (!e.is_number()) throw ConfigError("snr_db: expected numbers");
            c.snr_db.push_back(e.get<double>());
        }
    }
    if (const json* v = f.raw("architectures")) {
        if (!v->is_array()) throw ConfigError("architectures: expected an array of width lists");
        for (const auto& e : *v) c.architectures.push_back(Architecture{size_list(e, "architectures")});
    }
    f.integer("repeats", c.repeats);
    f.integer("parallelism", c.parallelism);
    f.finish();
    if (c.kinds.empty()) throw ConfigError("noise_kinds: list is empty");
    if (c.snr_db.empty()) throw ConfigError("snr_db: list is empty");
    if (c.architectures.empty()) c.architectures.push_back(c.base.architecture);
    if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
    if (c.parallelism == 0) throw ConfigError("parallelism must be >= 1");
    for (auto k : c.kinds) {
        if (k == NoiseKind::None) throw ConfigError("noise_kinds: 'none' is not a noise condition");
    }
    for (double s : c.snr_db) {
        if (!std::isfinite(s)) throw ConfigError("snr_db: values must be finite");
    }
    return c;
}

std::vector<NoiseCellResult> run_noise_sweep(const NoiseSweepConfig& config) {
    struct Job {
        std::size_t cell;
        RunConfig run;
    };
    std::vector<NoiseCellResult> cells;
    std::vector<Job> jobs;
    for (auto kind : config.kinds) {
        for (double snr : config.snr_db) {
            for (const auto& arch : config.architectures) {
                for (const char* model : {"pkan", "baseline"}) {
                    NoiseCellResult cell;
                    cell.kind = kind;
                    cell.snr_db = snr;
                    cell.architecture = arch;
                    cell.model = model;
                    RunConfig rc = config.base;
                    rc.architecture = arch;
                    rc.dataset.noise = kind;
                    rc.dataset.snr_db = snr;
                    if (cell.model == "baseline") rc = baseline_of(rc);
                    for (std::size_t r = 0; r < config.repeats; ++r) {
                        RunConfig seeded = rc;
                        seeded.seed = config.base.seed + r;
                        jobs.push_back({cells.size(), std::move(seeded)});
                    }
                    cells.push_back(std::move(cell));
                }
            }
        }
    }
    struct Sample {
        bool ok = false;
        std::string error;
        double train = 0, val = 0, clean = 0, secs = 0;
    };
    std::vector<Sample> samples(jobs.size());
    parallel_for(jobs.size(), config.parallelism, [&](std::size_t i) {
        try {
            const RunOutcome o = run_experiment(jobs[i].run);
            if (o.result.aborted) throw NumericError(o.result.abort_reason);
            samples[i] = {true, {}, o.train_mse, o.validation_mse, o.clean_validation_mse, o.seconds};
        } catch (const std::exception& e) {
            samples[i].error = e.what();
        }
    });
    std::vector<std::vector<double>> tr(cells.size()), va(cells.size()), cl(cells.size()), se(cells.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        NoiseCellResult& cell = cells[jobs[i].cell];
        if (!samples[i].ok) {
            ++cell.failed;
            if (cell.first_error.empty()) cell.first_error = samples[i].error;
            continue;
        }
        ++cell.succeeded;
        tr[jobs[i].cell].push_back(samples[i].train);
        va[jobs[i].cell].push_back(samples[i].val);
        cl[jobs[i].cell].push_back(samples[i].clean);
        se[jobs[i].cell].push_back(samples[i].secs);
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
        cells[c].median_train_loss = median(tr[c]);
        cells[c].median_validation_loss = median(va[c]);
        cells[c].median_clean_validation_loss = median(cl[c]);
        cells[c].median_seconds = median(se[c]);
    }
    return cells;
}

std::string noise_sweep_csv(const std::vector<NoiseCellResult>& cells) {
    std::string out = fmt::format("# {}\n", kNoiseSchema);
    out += "cell,noise,snr_db,architecture,model,succeeded,failed,median_train_loss,median_val_loss,"
           "median_clean_val_loss,median_seconds,first_error\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& r = cells[c];
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", c, to_string(r.kind), csv_number(r.snr_db),
                           csv_text(r.architecture.to_string()), r.model, r.succeeded, r.failed,
                           csv_number(r.median_train_loss), csv_number(r.median_validation_loss),
                           csv_number(r.median_clean_validation_loss), csv_number(r.median_seconds),
                           csv_text(r.first_error));
    }
    return out;
}

}  // namespace pkan
