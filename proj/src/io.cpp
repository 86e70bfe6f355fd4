#include "mvfbsde/io.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mvfbsde {

using nlohmann::json;

namespace {

[[noreturn]] void key_error(const std::string& path, const std::string& what) {
    throw ConfigError("config key '" + path + "': " + what);
}

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) key_error(path, "expected an object");
}

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& path) {
    for (const auto& item : obj.items())
        if (!known.count(item.key()))
            key_error(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
}

double get_number(const json& obj, const char* key, double def, const std::string& path) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number()) key_error(path + "." + key, "expected a number");
    return v.get<double>();
}

std::uint64_t get_count(const json& obj, const char* key, std::uint64_t def,
                        const std::string& path) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        key_error(path + "." + key, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& obj, const char* key, bool def, const std::string& path) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_boolean()) key_error(path + "." + key, "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& obj, const char* key, const std::string& def,
                       const std::string& path) {
    if (!obj.contains(key)) return def;
    const json& v = obj.at(key);
    if (!v.is_string()) key_error(path + "." + key, "expected a string");
    return v.get<std::string>();
}

void check_positive(double v, const std::string& key) {
    if (!(v > 0.0)) key_error(key, "must be positive");
}

} // namespace

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not well-formed JSON: ") + e.what());
    }
    require_object(doc, "<root>");
    reject_unknown(doc, {"model", "grid", "sampling", "training", "loop", "output"}, "");

    RunConfig cfg;

    if (!doc.contains("model") || !doc.at("model").is_object() ||
        !doc.at("model").contains("name"))
        key_error("model.name", "required key missing");
    const json& model = doc.at("model");
    reject_unknown(model, {"name", "params"}, "model");
    cfg.model_name = model.at("name").get<std::string>();
    if (cfg.model_name != "systemic_risk" && cfg.model_name != "quantile_interaction" &&
        cfg.model_name != "growth")
        key_error("model.name", "unknown model '" + cfg.model_name + "'");

    const json params = model.contains("params") ? model.at("params") : json::object();
    require_object(params, "model.params");
    if (cfg.model_name == "growth") {
        reject_unknown(params, {"C", "delta", "sigma", "rho", "k0_mean", "k0_sd", "y_clamp"},
                       "model.params");
        GrowthModelParams& g = cfg.growth;
        g.curvature = get_number(params, "C", g.curvature, "model.params");
        g.depreciation = get_number(params, "delta", g.depreciation, "model.params");
        g.sigma = get_number(params, "sigma", g.sigma, "model.params");
        g.rho = get_number(params, "rho", g.rho, "model.params");
        g.k0_mean = get_number(params, "k0_mean", g.k0_mean, "model.params");
        g.k0_sd = get_number(params, "k0_sd", g.k0_sd, "model.params");
        g.y_clamp = get_number(params, "y_clamp", g.y_clamp, "model.params");
        check_positive(g.curvature, "model.params.C");
        check_positive(g.sigma, "model.params.sigma");
    } else {
        std::set<std::string> known{"a", "q", "c", "sigma", "epsilon", "rho", "xi_mean",
                                    "xi_var"};
        if (cfg.model_name == "quantile_interaction") known.insert("alpha");
        reject_unknown(params, known, "model.params");
        SystemicRiskParams& p = cfg.systemic;
        p.a = get_number(params, "a", p.a, "model.params");
        p.q = get_number(params, "q", p.q, "model.params");
        p.c = get_number(params, "c", p.c, "model.params");
        p.sigma = get_number(params, "sigma", p.sigma, "model.params");
        p.epsilon = get_number(params, "epsilon", p.epsilon, "model.params");
        p.rho = get_number(params, "rho", p.rho, "model.params");
        p.xi_mean = get_number(params, "xi_mean", p.xi_mean, "model.params");
        p.xi_var = get_number(params, "xi_var", p.xi_var, "model.params");
        check_positive(p.sigma, "model.params.sigma");
        if (cfg.model_name == "quantile_interaction") {
            cfg.quantile_alpha = get_number(params, "alpha", cfg.quantile_alpha, "model.params");
            if (!(cfg.quantile_alpha > 0.0 && cfg.quantile_alpha < 1.0))
                key_error("model.params.alpha", "must lie in (0,1)");
        }
    }

    const json grid = doc.contains("grid") ? doc.at("grid") : json::object();
    require_object(grid, "grid");
    reject_unknown(grid, {"T", "N"}, "grid");
    cfg.horizon = get_number(grid, "T", 1.0, "grid");
    cfg.steps = get_count(grid, "N", 101, "grid");
    check_positive(cfg.horizon, "grid.T");
    if (cfg.steps < 2) key_error("grid.N", "need at least 2 steps");

    const json sampling = doc.contains("sampling") ? doc.at("sampling") : json::object();
    require_object(sampling, "sampling");
    reject_unknown(sampling, {"M", "seed"}, "sampling");
    cfg.paths = get_count(sampling, "M", 10000, "sampling");
    cfg.seed = get_count(sampling, "seed", 1, "sampling");
    if (cfg.paths < 1) key_error("sampling.M", "need at least one path");

    const json training = doc.contains("training") ? doc.at("training") : json::object();
    require_object(training, "training");
    reject_unknown(training,
                   {"E_Y", "E_Z0", "E_S", "I", "lr", "decay", "decay_every", "p_T_weight"},
                   "training");
    cfg.plan.epochs_y = get_count(training, "E_Y", 1000, "training");
    cfg.plan.epochs_z0 = get_count(training, "E_Z0", 500, "training");
    cfg.plan.epochs_s = get_count(training, "E_S", 1000, "training");
    cfg.plan.batch = get_count(training, "I", 2048, "training");
    cfg.plan.adam.lr = get_number(training, "lr", 0.005, "training");
    cfg.plan.adam.decay = get_number(training, "decay", 0.9997, "training");
    cfg.plan.adam.decay_every = get_count(training, "decay_every", 5, "training");
    check_positive(cfg.plan.adam.lr, "training.lr");
    check_positive(cfg.plan.adam.decay, "training.decay");
    if (cfg.plan.adam.decay_every < 1) key_error("training.decay_every", "must be at least 1");
    if (training.contains("p_T_weight")) {
        const double w = get_number(training, "p_T_weight", 0.0, "training");
        check_positive(w, "training.p_T_weight");
        cfg.plan.terminal_weight = w;
    }
    if (cfg.plan.epochs_y == 0 || cfg.plan.epochs_z0 == 0 || cfg.plan.epochs_s == 0)
        key_error("training.E_Y", "epoch counts must be positive");
    if (cfg.plan.batch == 0) key_error("training.I", "batch size must be positive");

    const json loop = doc.contains("loop") ? doc.at("loop") : json::object();
    require_object(loop, "loop");
    reject_unknown(loop, {"K", "delta", "tolerance", "warm_start"}, "loop");
    cfg.outer_iterations = get_count(loop, "K", 20, "loop");
    cfg.damping = get_number(loop, "delta", 0.5, "loop");
    cfg.tolerance = get_number(loop, "tolerance", 1e-4, "loop");
    cfg.warm_start = get_bool(loop, "warm_start", true, "loop");
    if (cfg.outer_iterations < 1) key_error("loop.K", "need at least one iteration");
    if (!(cfg.damping >= 0.0 && cfg.damping < 1.0)) key_error("loop.delta", "must lie in [0,1)");
    check_positive(cfg.tolerance, "loop.tolerance");

    const json output = doc.contains("output") ? doc.at("output") : json::object();
    require_object(output, "output");
    reject_unknown(output, {"dir", "checkpoint_every"}, "output");
    cfg.output_dir = get_string(output, "dir", "out", "output");
    cfg.checkpoint_every = get_count(output, "checkpoint_every", 0, "output");

    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read config file " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& config) {
    json doc;
    doc["model"]["name"] = config.model_name;
    json& params = doc["model"]["params"];
    if (config.model_name == "growth") {
        params["C"] = config.growth.curvature;
        params["delta"] = config.growth.depreciation;
        params["sigma"] = config.growth.sigma;
        params["rho"] = config.growth.rho;
        params["k0_mean"] = config.growth.k0_mean;
        params["k0_sd"] = config.growth.k0_sd;
        params["y_clamp"] = config.growth.y_clamp;
    } else {
        params["a"] = config.systemic.a;
        params["q"] = config.systemic.q;
        params["c"] = config.systemic.c;
        params["sigma"] = config.systemic.sigma;
        params["epsilon"] = config.systemic.epsilon;
        params["rho"] = config.systemic.rho;
        params["xi_mean"] = config.systemic.xi_mean;
        params["xi_var"] = config.systemic.xi_var;
        if (config.model_name == "quantile_interaction") params["alpha"] = config.quantile_alpha;
    }
    doc["grid"]["T"] = config.horizon;
    doc["grid"]["N"] = config.steps;
    doc["sampling"]["M"] = config.paths;
    doc["sampling"]["seed"] = config.seed;
    doc["training"]["E_Y"] = config.plan.epochs_y;
    doc["training"]["E_Z0"] = config.plan.epochs_z0;
    doc["training"]["E_S"] = config.plan.epochs_s;
    doc["training"]["I"] = config.plan.batch;
    doc["training"]["lr"] = config.plan.adam.lr;
    doc["training"]["decay"] = config.plan.adam.decay;
    doc["training"]["decay_every"] = config.plan.adam.decay_every;
    if (config.plan.terminal_weight) doc["training"]["p_T_weight"] = *config.plan.terminal_weight;
    doc["loop"]["K"] = config.outer_iterations;
    doc["loop"]["delta"] = config.damping;
    doc["loop"]["tolerance"] = config.tolerance;
    doc["loop"]["warm_start"] = config.warm_start;
    doc["output"]["dir"] = config.output_dir;
    doc["output"]["checkpoint_every"] = config.checkpoint_every;
    return doc.dump(2) + "\n";
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    const auto& sa = a.systemic;
    const auto& sb = b.systemic;
    const auto& ga = a.growth;
    const auto& gb = b.growth;
    return a.model_name == b.model_name && sa.a == sb.a && sa.q == sb.q && sa.c == sb.c &&
           sa.sigma == sb.sigma && sa.epsilon == sb.epsilon && sa.rho == sb.rho &&
           sa.xi_mean == sb.xi_mean && sa.xi_var == sb.xi_var &&
           ga.curvature == gb.curvature && ga.depreciation == gb.depreciation &&
           ga.sigma == gb.sigma && ga.rho == gb.rho && ga.k0_mean == gb.k0_mean &&
           ga.k0_sd == gb.k0_sd && ga.y_clamp == gb.y_clamp &&
           a.quantile_alpha == b.quantile_alpha && a.horizon == b.horizon &&
           a.steps == b.steps && a.paths == b.paths && a.seed == b.seed &&
           a.outer_iterations == b.outer_iterations && a.damping == b.damping &&
           a.tolerance == b.tolerance && a.warm_start == b.warm_start &&
           a.plan.epochs_y == b.plan.epochs_y && a.plan.epochs_z0 == b.plan.epochs_z0 &&
           a.plan.epochs_s == b.plan.epochs_s && a.plan.batch == b.plan.batch &&
           a.plan.terminal_weight == b.plan.terminal_weight &&
           a.plan.adam.lr == b.plan.adam.lr && a.plan.adam.decay == b.plan.adam.decay &&
           a.plan.adam.decay_every == b.plan.adam.decay_every &&
           a.output_dir == b.output_dir && a.checkpoint_every == b.checkpoint_every;
}

namespace {

json mat_to_json(const Mat& m) {
    json arr = json::array();
    for (double v : m.flat()) arr.push_back(v);
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(arr)}};
}

Mat mat_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw IoError("checkpoint: malformed matrix at " + where);
    Mat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const json& data = j.at("data");
    if (!data.is_array() || data.size() != m.size())
        throw IoError("checkpoint: matrix size mismatch at " + where);
    std::size_t e = 0;
    for (const auto& v : data) m.flat()[e++] = v.get<double>();
    return m;
}

json gru_to_json(const GruNet& net) {
    json j;
    j["input_dim"] = net.input_dim();
    j["hidden_dim"] = net.hidden_dim();
    j["extra_dim"] = net.extra_dim();
    j["output_dim"] = net.output_dim();
    const char* names[] = {"wz", "uz", "bz", "wr", "ur", "br",
                           "wn", "bn", "un", "bhn", "wo", "bo"};
    auto mats = net.params();
    for (std::size_t k = 0; k < mats.size(); ++k) j["mats"][names[k]] = mat_to_json(*mats[k]);
    return j;
}

GruNet gru_from_json(const json& j, const std::string& where) {
    GruNet net(j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>(),
               j.at("extra_dim").get<std::size_t>(), j.at("output_dim").get<std::size_t>(), 0);
    const char* names[] = {"wz", "uz", "bz", "wr", "ur", "br",
                           "wn", "bn", "un", "bhn", "wo", "bo"};
    auto mats = net.params();
    for (std::size_t k = 0; k < mats.size(); ++k) {
        Mat loaded = mat_from_json(j.at("mats").at(names[k]), where + "." + names[k]);
        if (!loaded.same_shape(*mats[k]))
            throw IoError("checkpoint: shape mismatch for " + where + "." + names[k]);
        *mats[k] = std::move(loaded);
    }
    return net;
}

} // namespace

void save_checkpoint(const std::filesystem::path& file, const TrainedNets& nets,
                     const RunConfig& config, const CheckpointMeta& meta) {
    json doc;
    doc["format"] = "mvfbsde-checkpoint-v1";
    doc["meta"]["model"] = meta.model_name;
    doc["meta"]["iteration"] = meta.iteration;
    doc["meta"]["seed"] = meta.seed;
    doc["meta"]["activation"] = meta.activation;
    doc["config"] = json::parse(serialize_config(config));

    json& u = doc["networks"]["decoupling_field"];
    u["layer_sizes"] = nets.u.layer_sizes();
    u["activation"] = activation_name(nets.u.activation());
    u["weights"] = json::array();
    u["biases"] = json::array();
    for (const Mat& w : nets.u.weights()) u["weights"].push_back(mat_to_json(w));
    for (const Mat& b : nets.u.biases()) u["biases"].push_back(mat_to_json(b));

    doc["networks"]["statistic"] = gru_to_json(nets.s);
    doc["networks"]["integrand"] = gru_to_json(nets.v);

    std::ofstream out(file);
    if (!out) throw IoError("cannot write checkpoint " + file.string());
    out << doc.dump(1, '\t') << "\n";
    if (!out) throw IoError("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file, const std::string& expect_model) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read checkpoint " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + file.string() + " is corrupted: " + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "mvfbsde-checkpoint-v1")
            throw IoError("checkpoint " + file.string() + ": unknown format");
        Checkpoint cp;
        cp.meta.model_name = doc.at("meta").at("model").get<std::string>();
        cp.meta.iteration = doc.at("meta").at("iteration").get<std::size_t>();
        cp.meta.seed = doc.at("meta").at("seed").get<std::uint64_t>();
        cp.meta.activation = doc.at("meta").at("activation").get<std::string>();
        if (!expect_model.empty() && cp.meta.model_name != expect_model)
            throw IoError("checkpoint holds model '" + cp.meta.model_name + "', expected '" +
                          expect_model + "'");
        cp.config = parse_config(doc.at("config").dump());
        if (cp.config.model_name != cp.meta.model_name)
            throw IoError("checkpoint metadata and config disagree on the model name");

        const json& u = doc.at("networks").at("decoupling_field");
        const auto sizes = u.at("layer_sizes").get<std::vector<std::size_t>>();
        cp.nets.u = FeedForwardNet(sizes, activation_from_name(u.at("activation").get<std::string>()),
                                   0);
        const json& ws = u.at("weights");
        const json& bs = u.at("biases");
        if (ws.size() != cp.nets.u.weights().size() || bs.size() != cp.nets.u.biases().size())
            throw IoError("checkpoint: layer count mismatch in decoupling_field");
        for (std::size_t l = 0; l < ws.size(); ++l) {
            Mat w = mat_from_json(ws[l], "decoupling_field.weights");
            Mat b = mat_from_json(bs[l], "decoupling_field.biases");
            if (!w.same_shape(cp.nets.u.weights()[l]) || !b.same_shape(cp.nets.u.biases()[l]))
                throw IoError("checkpoint: layer shape mismatch in decoupling_field");
            cp.nets.u.weights()[l] = std::move(w);
            cp.nets.u.biases()[l] = std::move(b);
        }
        cp.nets.s = gru_from_json(doc.at("networks").at("statistic"), "statistic");
        cp.nets.v = gru_from_json(doc.at("networks").at("integrand"), "integrand");
        return cp;
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + file.string() + " is incomplete: " + e.what());
    }
}

void write_paths_csv(const std::filesystem::path& file, const SolverState& state,
                     const NoisePair& noise) {
    state.validate();
    if (state.x.paths() != noise.w.paths() || state.x.nodes() != noise.w.nodes())
        throw ConfigError("write_paths_csv: state/noise shape mismatch");
    std::FILE* f = std::fopen(file.string().c_str(), "w");
    if (!f) throw IoError("cannot write " + file.string());
    std::fputs("path_id,t,W,W0,X,Y,Z,Z0,S\n", f);
    const TimeGrid& grid = noise.grid;
    for (std::size_t i = 0; i < state.x.paths(); ++i)
        for (std::size_t j = 0; j < state.x.nodes(); ++j)
            std::fprintf(f, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i, grid.node(j),
                         noise.w.at(i, j), noise.w0.at(i, j), state.x.at(i, j), state.y.at(i, j),
                         state.z.at(i, j), state.z0.at(i, j), state.s.at(i, j));
    if (std::fclose(f) != 0) throw IoError("failed writing " + file.string());
}

namespace {

json report_to_json(const ConvergenceReport& report) {
    json doc;
    doc["stopped_early"] = report.stopped_early;
    doc["aborted"] = report.aborted;
    doc["abort_reason"] = report.abort_reason;
    doc["iterations"] = json::array();
    for (const auto& rec : report.iterations) {
        json it;
        it["iteration"] = rec.iteration;
        it["dist_x"] = rec.dist_x;
        it["dist_y"] = rec.dist_y;
        it["dist_z"] = rec.dist_z;
        it["dist_z0"] = rec.dist_z0;
        it["picard_errors"] = rec.picard_errors;
        it["picard_converged"] = rec.picard_converged;
        it["loss_s"] = rec.loss_s;
        it["loss_y"] = rec.loss_y;
        it["loss_z0"] = rec.loss_z0;
        it["clamp_picard"] = rec.clamp_picard;
        it["clamp_backward"] = rec.clamp_backward;
        it["clamp_z0"] = rec.clamp_z0;
        doc["iterations"].push_back(std::move(it));
    }
    return doc;
}

} // namespace

void write_metrics(const std::filesystem::path& file, const ConvergenceReport& report) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << report_to_json(report).dump(1, '\t') << "\n";
}

void write_timings(const std::filesystem::path& file, const ConvergenceReport& report) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    double total = 0.0;
    for (const auto& rec : report.iterations) {
        out << "iteration " << rec.iteration << ": " << rec.wall_seconds << " s\n";
        total += rec.wall_seconds;
    }
    out << "total: " << total << " s\n";
}

ConvergenceReport load_metrics(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("metrics " + file.string() + ": " + e.what());
    }
    ConvergenceReport rep;
    rep.stopped_early = doc.value("stopped_early", false);
    rep.aborted = doc.value("aborted", false);
    rep.abort_reason = doc.value("abort_reason", "");
    for (const auto& it : doc.at("iterations")) {
        IterationRecord rec;
        rec.iteration = it.at("iteration").get<std::size_t>();
        rec.dist_x = it.at("dist_x").get<double>();
        rec.dist_y = it.at("dist_y").get<double>();
        rec.dist_z = it.at("dist_z").get<double>();
        rec.dist_z0 = it.at("dist_z0").get<double>();
        rec.picard_errors = it.at("picard_errors").get<std::vector<double>>();
        rec.picard_converged = it.at("picard_converged").get<bool>();
        rec.loss_s = it.at("loss_s").get<std::vector<double>>();
        rec.loss_y = it.at("loss_y").get<std::vector<double>>();
        rec.loss_z0 = it.at("loss_z0").get<std::vector<double>>();
        rec.clamp_picard = it.at("clamp_picard").get<std::uint64_t>();
        rec.clamp_backward = it.at("clamp_backward").get<std::uint64_t>();
        rec.clamp_z0 = it.at("clamp_z0").get<std::uint64_t>();
        rep.iterations.push_back(std::move(rec));
    }
    return rep;
}

void write_error_report(const std::filesystem::path& dir, const ErrorReport& report,
                        const TimeGrid& grid) {
    write_error_report(dir, report, grid, "");
}

void write_error_report(const std::filesystem::path& dir, const ErrorReport& report,
                        const TimeGrid& grid, const std::string& extra_json_object) {
    std::filesystem::create_directories(dir);
    json doc;
    for (const auto& p : report.processes) {
        json jp;
        jp["bias"] = p.bias;
        jp["rmse"] = p.rmse;
        if (p.r2_defined)
            jp["r2"] = p.r2;
        else
            jp["r2"] = "undefined (degenerate reference)";
        jp["node_bias"] = p.node_bias;
        jp["node_rmse"] = p.node_rmse;
        doc["processes"][p.name] = std::move(jp);
    }
    if (!extra_json_object.empty()) {
        const json extra = json::parse(extra_json_object);
        for (const auto& item : extra.items()) doc[item.key()] = item.value();
    }
    std::ofstream out(dir / "error_report.json");
    if (!out) throw IoError("cannot write error report in " + dir.string());
    out << doc.dump(1, '\t') << "\n";

    for (const auto& p : report.processes) {
        std::FILE* f =
            std::fopen((dir / ("error_bands_" + p.name + ".csv")).string().c_str(), "w");
        if (!f) throw IoError("cannot write error bands in " + dir.string());
        std::fputs("t,q05,q25,q50,q75,q95\n", f);
        for (std::size_t j = 0; j < grid.nodes(); ++j)
            std::fprintf(f, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", grid.node(j), p.bands[0][j],
                         p.bands[1][j], p.bands[2][j], p.bands[3][j], p.bands[4][j]);
        std::fclose(f);
    }
}

} // namespace mvfbsde
