#include "pkan/serialize.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

namespace pkan {

using nlohmann::json;

namespace {

json edge_id_json(const EdgeId& id) { return json::array({id.layer, id.source, id.target}); }

json spectral_json(const SpectralReport& s) {
    return json{{"round", s.round},
                {"jac_std", s.jac_std},
                {"parameter_count", s.parameter_count},
                {"singular_values", s.singular_values},
                {"empty", s.empty}};
}

template <class T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(fmt::format("checkpoint is missing '{}'", key));
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("checkpoint field '{}': {}", key, e.what()));
    }
}

SplineEdge spline_from(const json& coeffs, const KnotGrid& grid) {
    auto c = coeffs.get<std::vector<double>>();
    if (c.size() != grid.basis_count()) {
        throw FormatError(fmt::format("spline has {} coefficients, expected {}", c.size(), grid.basis_count()));
    }
    return SplineEdge(grid, std::move(c));
}

}  // namespace

json network_to_json(const Network& net) {
    const EdgeConfig& ec = net.edge_config();
    json edges = json::array();
    for (const auto& e : net.edges()) {
        json je{{"id", edge_id_json(e.id)}};
        if (const auto* sp = std::get_if<TrainableSpline>(&e.state)) {
            je["state"] = "spline";
            je["coefficients"] = sp->spline.coefficients;
        } else {
            const auto& fe = std::get<FixedEdge>(e.state);
            je["state"] = "fixed";
            je["space"] = std::string(to_string(fe.fixed.space.kind()));
            je["indices"] = fe.fixed.indices;
            je["coefficients"] = fe.fixed.coefficients;
            je["snapshot"] = fe.snapshot.coefficients;
            je["fit_r2"] = fe.fit_r2;
        }
        edges.push_back(std::move(je));
    }
    json norms = json::array();
    for (const auto& layer : net.normalizers()) {
        json row = json::array();
        for (const auto& m : layer) row.push_back(json::array({m.scale, m.offset}));
        norms.push_back(std::move(row));
    }
    return json{{"architecture", net.architecture().widths},
                {"edge_config",
                 {{"degree", ec.degree},
                  {"intervals", ec.intervals},
                  {"lo", ec.lo},
                  {"hi", ec.hi},
                  {"transform_size", ec.transform_size}}},
                {"normalizers", std::move(norms)},
                {"biases", net.biases()},
                {"edges", std::move(edges)}};
}

Network network_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("network record must be an object");
    Architecture arch{field<std::vector<std::size_t>>(j, "architecture")};
    const json& jc = j.contains("edge_config") ? j.at("edge_config") : throw FormatError("checkpoint is missing 'edge_config'");
    EdgeConfig ec;
    ec.degree = field<int>(jc, "degree");
    ec.intervals = field<int>(jc, "intervals");
    ec.lo = field<double>(jc, "lo");
    ec.hi = field<double>(jc, "hi");
    ec.transform_size = field<std::size_t>(jc, "transform_size");

    Network net = [&] {
        try {
            return Network::make_empty(arch, ec);
        } catch (const ConfigError& e) {
            throw FormatError(fmt::format("invalid network shape: {}", e.what()));
        }
    }();
    const KnotGrid grid = ec.grid();

    const auto norms = field<std::vector<std::vector<std::array<double, 2>>>>(j, "normalizers");
    if (norms.size() != net.normalizers().size()) throw FormatError("normalizer layer count mismatch");
    for (std::size_t l = 0; l < norms.size(); ++l) {
        if (norms[l].size() != net.normalizers()[l].size()) throw FormatError("normalizer width mismatch");
        for (std::size_t i = 0; i < norms[l].size(); ++i) net.normalizers()[l][i] = {norms[l][i][0], norms[l][i][1]};
    }
    const auto biases = field<std::vector<std::vector<double>>>(j, "biases");
    if (biases.size() != net.biases().size()) throw FormatError("bias layer count mismatch");
    for (std::size_t l = 0; l < biases.size(); ++l) {
        if (biases[l].size() != net.biases()[l].size()) throw FormatError("bias width mismatch");
    }
    net.biases() = biases;

    const json& edges = j.contains("edges") ? j.at("edges") : throw FormatError("checkpoint is missing 'edges'");
    if (!edges.is_array() || edges.size() != net.edges().size()) throw FormatError("edge count mismatch");
    try {
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const json& je = edges[e];
            const auto id = field<std::array<std::size_t, 3>>(je, "id");
            Edge& edge = net.edges()[e];
            if (edge.id != EdgeId{id[0], id[1], id[2]}) throw FormatError(fmt::format("edge {} is out of order", e));
            const auto state = field<std::string>(je, "state");
            if (state == "spline") {
                edge.state = TrainableSpline{spline_from(je.at("coefficients"), grid)};
            } else if (state == "fixed") {
                edge.state = TrainableSpline{spline_from(field<json>(je, "snapshot"), grid)};
                FunctionalSpace space(parse_space_kind(field<std::string>(je, "space")), ec.transform_size, ec.lo, ec.hi);
                FixedParametric fp(std::move(space), field<std::vector<std::size_t>>(je, "indices"),
                                   field<std::vector<double>>(je, "coefficients"));
                net.fix_edge(edge.id, std::move(fp), field<double>(je, "fit_r2"));
            } else {
                throw FormatError(fmt::format("unknown edge state '{}'", state));
            }
        }
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(fmt::format("invalid edge record: {}", e.what()));
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("invalid edge record: {}", e.what()));
    }
    return net;
}

OptimizerSnapshot snapshot_of(const AdamOptimizer& opt) {
    return OptimizerSnapshot{opt.learning_rate(), opt.step_count(),
                             {opt.first_moment().begin(), opt.first_moment().end()},
                             {opt.second_moment().begin(), opt.second_moment().end()}};
}

std::string checkpoint_to_string(const Network& net, const OptimizerSnapshot* optimizer) {
    json j{{"format", "pkan-checkpoint"}, {"version", kCheckpointVersion}, {"network", network_to_json(net)}};
    if (optimizer != nullptr) {
        const OptimizerSnapshot& s = *optimizer;
        j["optimizer"] = {{"learning_rate", s.learning_rate},
                          {"steps", s.steps},
                          {"first_moment", s.first_moment},
                          {"second_moment", s.second_moment}};
    }
    return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("checkpoint is not valid JSON: {}", e.what()));
    }
    if (field<std::string>(j, "format") != "pkan-checkpoint") throw FormatError("not a checkpoint file");
    const int version = field<int>(j, "version");
    if (version != kCheckpointVersion) throw FormatError(fmt::format("unsupported checkpoint version {}", version));
    Checkpoint cp{network_from_json(field<json>(j, "network")), std::nullopt};
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        OptimizerSnapshot s{field<double>(o, "learning_rate"), field<std::uint64_t>(o, "steps"),
                            field<std::vector<double>>(o, "first_moment"),
                            field<std::vector<double>>(o, "second_moment")};
        if (s.first_moment.size() != cp.net.parameter_count() || s.second_moment.size() != cp.net.parameter_count()) {
            throw FormatError("optimizer state does not match the network parameter count");
        }
        cp.optimizer = std::move(s);
    }
    return cp;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const OptimizerSnapshot* optimizer) {
    atomic_write(path, checkpoint_to_string(net, optimizer));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot read checkpoint {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_string(ss.str());
}

std::string round_log_line(const RoundLog& log) {
    json fixed = json::array();
    for (const auto& f : log.fixed) {
        fixed.push_back({{"edge", edge_id_json(f.id)},
                         {"space", std::string(to_string(f.space))},
                         {"r2", f.r2},
                         {"indices", f.indices},
                         {"coefficients", f.coefficients}});
    }
    json reverted = json::array();
    for (const auto& r : log.reverted) {
        reverted.push_back({{"edge", edge_id_json(r.id)},
                            {"space", std::string(to_string(r.space))},
                            {"regret", r.regret},
                            {"fixed_this_round", r.fixed_this_round}});
    }
    json traj{{"total", json::array()},
              {"reconstruction", json::array()},
              {"entropy", json::array()},
              {"regularization", json::array()}};
    for (const auto& e : log.trajectory) {
        traj["total"].push_back(e.total);
        traj["reconstruction"].push_back(e.reconstruction);
        traj["entropy"].push_back(e.entropy);
        traj["regularization"].push_back(e.regularization);
    }
    json j{{"round", log.round},
           {"lambda", log.lambda},
           {"r2_min", log.r2_min},
           {"fixed", std::move(fixed)},
           {"reverted", std::move(reverted)},
           {"unchanged", log.unchanged},
           {"total_edges", log.total_edges},
           {"validation_loss", log.validation_loss},
           {"spectrum_before", spectral_json(log.spectrum_before)},
           {"spectrum_after", spectral_json(log.spectrum_after)},
           {"trajectory", std::move(traj)}};
    return j.dump();
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(fmt::format("cannot open {} for writing", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(fmt::format("failed writing {}", tmp.string()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(fmt::format("cannot move {} into place", path.string()));
    }
}

}  // namespace pkan
