#include "metacurv/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace metacurv {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double x) {
    if (!std::isfinite(x)) throw std::runtime_error("refusing to serialize non-finite float");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

// ---- canonical JSON writer ------------------------------------------------
// nlohmann prints doubles in shortest-round-trip form; the file formats here
// pin 17 significant digits instead, so dumping is done by hand. Objects get
// one key per line, arrays stay on a single line.

void dump_string(const std::string& s, std::string& out) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(c));
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

void dump_value(const ordered_json& j, std::string& out, int depth) {
    switch (j.type()) {
        case ordered_json::value_t::null: out += "null"; return;
        case ordered_json::value_t::boolean: out += j.get<bool>() ? "true" : "false"; return;
        case ordered_json::value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            return;
        case ordered_json::value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            return;
        case ordered_json::value_t::number_float: out += format_double(j.get<double>()); return;
        case ordered_json::value_t::string: dump_string(j.get<std::string>(), out); return;
        case ordered_json::value_t::array: {
            out += '[';
            bool first = true;
            for (const auto& item : j) {
                if (!first) out += ',';
                first = false;
                dump_value(item, out, depth);
            }
            out += ']';
            return;
        }
        case ordered_json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            const std::string pad((depth + 1) * 2, ' ');
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad;
                dump_string(it.key(), out);
                out += ": ";
                dump_value(it.value(), out, depth + 1);
            }
            out += '\n';
            out += std::string(depth * 2, ' ');
            out += '}';
            return;
        }
        default: throw std::runtime_error("unsupported JSON value type");
    }
}

std::string dump_document(const ordered_json& j) {
    std::string out;
    dump_value(j, out, 0);
    out += '\n';
    return out;
}

// ---- typed field access ----------------------------------------------------

[[noreturn]] void fail(const std::string& origin, const std::string& msg) {
    throw ConfigError(origin + ": " + msg);
}

const ordered_json& require_field(const ordered_json& j, const std::string& key,
                                  const std::string& origin) {
    auto it = j.find(key);
    if (it == j.end()) fail(origin, "missing required field '" + key + "'");
    return *it;
}

std::uint64_t get_count(const ordered_json& j, const std::string& key, const std::string& origin) {
    const auto& v = require_field(j, key, origin);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        fail(origin, "field '" + key + "' must be an integer");
    }
    if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
        fail(origin, "field '" + key + "' must be non-negative");
    }
    return v.get<std::uint64_t>();
}

double get_double(const ordered_json& j, const std::string& key, const std::string& origin) {
    const auto& v = require_field(j, key, origin);
    if (!v.is_number()) fail(origin, "field '" + key + "' must be a number");
    return v.get<double>();
}

std::string get_string(const ordered_json& j, const std::string& key, const std::string& origin) {
    const auto& v = require_field(j, key, origin);
    if (!v.is_string()) fail(origin, "field '" + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<double> get_double_array(const ordered_json& v, const std::string& what,
                                     const std::string& origin) {
    if (!v.is_array()) fail(origin, what + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& item : v) {
        if (!item.is_number()) fail(origin, what + " must contain only numbers");
        out.push_back(item.get<double>());
    }
    return out;
}

std::string mode_name(MetaGradMode mode) {
    return mode == MetaGradMode::Exact ? "exact" : "first_order";
}

MetaGradMode mode_from_name(const std::string& name, const std::string& origin) {
    if (name == "exact") return MetaGradMode::Exact;
    if (name == "first_order") return MetaGradMode::FirstOrder;
    fail(origin, "meta_grad_mode must be 'exact' or 'first_order', got '" + name + "'");
}

// ---- TrainConfig -----------------------------------------------------------

ordered_json config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["method"] = method_name(cfg.method);
    j["k_shot"] = cfg.k_shot;
    j["inner_lr"] = cfg.inner_lr;
    j["outer_lr"] = cfg.outer_lr;
    j["meta_batch"] = cfg.meta_batch;
    j["iterations"] = cfg.iterations;
    j["inner_steps"] = cfg.inner_steps;
    j["meta_grad_mode"] = mode_name(cfg.meta_grad_mode);
    j["eval_every"] = cfg.eval_every;
    j["eval_tasks"] = cfg.eval_tasks;
    j["seed"] = cfg.seed;
    j["per_step_curvature"] = cfg.per_step_curvature;
    return j;
}

TrainConfig config_from_json(const ordered_json& j, const std::string& origin) {
    TrainConfig cfg;
    try {
        cfg.method = method_from_name(get_string(j, "method", origin));
    } catch (const std::invalid_argument& e) {
        fail(origin, e.what());
    }
    if (j.contains("k_shot")) cfg.k_shot = get_count(j, "k_shot", origin);
    if (j.contains("inner_lr")) cfg.inner_lr = get_double(j, "inner_lr", origin);
    if (j.contains("outer_lr")) cfg.outer_lr = get_double(j, "outer_lr", origin);
    if (j.contains("meta_batch")) cfg.meta_batch = get_count(j, "meta_batch", origin);
    if (j.contains("iterations")) cfg.iterations = get_count(j, "iterations", origin);
    if (j.contains("inner_steps")) cfg.inner_steps = get_count(j, "inner_steps", origin);
    if (j.contains("meta_grad_mode")) {
        cfg.meta_grad_mode = mode_from_name(get_string(j, "meta_grad_mode", origin), origin);
    }
    if (j.contains("eval_every")) cfg.eval_every = get_count(j, "eval_every", origin);
    if (j.contains("eval_tasks")) cfg.eval_tasks = get_count(j, "eval_tasks", origin);
    if (j.contains("seed")) cfg.seed = get_count(j, "seed", origin);
    if (j.contains("per_step_curvature")) {
        const auto& v = j.at("per_step_curvature");
        if (!v.is_boolean()) fail(origin, "field 'per_step_curvature' must be a boolean");
        cfg.per_step_curvature = v.get<bool>();
    }
    return cfg;
}

const std::vector<std::string> kRunConfigKeys = {
    "method",     "k_shot",     "inner_lr",       "outer_lr",
    "meta_batch", "iterations", "inner_steps",    "meta_grad_mode",
    "eval_every", "eval_tasks", "seed",           "per_step_curvature",
    "out_dir",    "deterministic"};

// ---- rules -----------------------------------------------------------------

ordered_json matrix_entries(const DenseMatrix& m) { return ordered_json(m.data()); }

ordered_json block_to_json(const CurvatureBlock& b) {
    ordered_json j;
    j["Mo"] = matrix_entries(b.mo);
    j["Mi"] = matrix_entries(b.mi);
    j["Mf"] = matrix_entries(b.mf);
    return j;
}

CurvatureBlock block_from_json(const ordered_json& j, const LayerShape& shape, McVariant variant,
                               const std::string& origin) {
    auto load = [&](const char* key, std::size_t n) {
        std::vector<double> vals = get_double_array(require_field(j, key, origin), key, origin);
        if (vals.size() != n * n) fail(origin, std::string(key) + " has wrong size");
        return DenseMatrix(n, n, std::move(vals));
    };
    return CurvatureBlock{load("Mo", shape.cout), load("Mi", shape.cin), load("Mf", shape.d),
                          variant};
}

ordered_json rule_to_json(const InnerRule& rule) {
    ordered_json j;
    if (const auto* fixed = std::get_if<FixedLR>(&rule)) {
        j["type"] = "FixedLR";
        j["alpha"] = fixed->alpha;
        return j;
    }
    if (const auto* perco = std::get_if<PerCoordinate>(&rule)) {
        j["type"] = "PerCoordinate";
        j["alpha"] = ordered_json(to_param_vector(perco->alpha));
        return j;
    }
    if (const auto* perlayer = std::get_if<PerLayer>(&rule)) {
        j["type"] = "PerLayer";
        j["alpha"] = ordered_json(perlayer->alpha);
        return j;
    }
    const auto& mc = std::get<MetaCurv>(rule);
    j["type"] = "MetaCurv";
    j["variant"] = mc.variant == McVariant::MC1 ? "MC1" : "MC2";
    j["alpha"] = mc.alpha;
    ordered_json steps = ordered_json::array();
    for (const auto& stack : mc.steps) {
        ordered_json layers = ordered_json::array();
        for (const auto& bp : stack) {
            ordered_json layer;
            layer["cout"] = bp.weight.mo.rows();
            layer["cin"] = bp.weight.mi.rows();
            layer["d"] = bp.weight.mf.rows();
            layer["weight"] = block_to_json(bp.weight);
            layer["bias"] = block_to_json(bp.bias);
            layers.push_back(std::move(layer));
        }
        steps.push_back(std::move(layers));
    }
    j["steps"] = std::move(steps);
    return j;
}

InnerRule rule_from_json(const ordered_json& j, const std::string& origin) {
    const std::string type = get_string(j, "type", origin);
    if (type == "FixedLR") return FixedLR{get_double(j, "alpha", origin)};
    if (type == "PerCoordinate") {
        const std::vector<double> flat =
            get_double_array(require_field(j, "alpha", origin), "alpha", origin);
        PerCoordinate rule;
        rule.alpha = from_param_vector(kDefaultWidths, flat);
        return rule;
    }
    if (type == "PerLayer") {
        return PerLayer{get_double_array(require_field(j, "alpha", origin), "alpha", origin)};
    }
    if (type != "MetaCurv") fail(origin, "unknown rule type '" + type + "'");

    MetaCurv mc;
    const std::string variant = get_string(j, "variant", origin);
    if (variant == "MC1") {
        mc.variant = McVariant::MC1;
    } else if (variant == "MC2") {
        mc.variant = McVariant::MC2;
    } else {
        fail(origin, "rule variant must be MC1 or MC2");
    }
    mc.alpha = get_double(j, "alpha", origin);
    const auto& steps = require_field(j, "steps", origin);
    if (!steps.is_array() || steps.empty()) fail(origin, "rule steps must be a non-empty array");
    for (const auto& stack_json : steps) {
        if (!stack_json.is_array()) fail(origin, "rule step entry must be an array of layers");
        BlockStack stack;
        for (const auto& layer : stack_json) {
            const LayerShape ws{get_count(layer, "cout", origin), get_count(layer, "cin", origin),
                                get_count(layer, "d", origin)};
            const LayerShape bs{ws.cout, 1, 1};
            stack.push_back(BlockPair{
                block_from_json(require_field(layer, "weight", origin), ws, mc.variant, origin),
                block_from_json(require_field(layer, "bias", origin), bs, mc.variant, origin)});
        }
        mc.steps.push_back(std::move(stack));
    }
    return mc;
}

// ---- adam ------------------------------------------------------------------

ordered_json adam_to_json(const AdamState& s) {
    ordered_json j;
    j["t"] = s.t;
    j["beta1"] = s.beta1;
    j["beta2"] = s.beta2;
    j["eps"] = s.eps;
    j["m"] = ordered_json(s.m);
    j["v"] = ordered_json(s.v);
    return j;
}

AdamState adam_from_json(const ordered_json& j, const std::string& origin) {
    AdamState s;
    s.t = get_count(j, "t", origin);
    s.beta1 = get_double(j, "beta1", origin);
    s.beta2 = get_double(j, "beta2", origin);
    s.eps = get_double(j, "eps", origin);
    s.m = get_double_array(require_field(j, "m", origin), "m", origin);
    s.v = get_double_array(require_field(j, "v", origin), "v", origin);
    if (s.m.size() != s.v.size()) fail(origin, "adam moments have different sizes");
    return s;
}

ordered_json parse_text(const std::string& text, const std::string& origin) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
    const ordered_json j = parse_text(text, origin);
    if (!j.is_object()) fail(origin, "config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const auto& key : kRunConfigKeys) known = known || key == it.key();
        if (!known) fail(origin, "unknown key '" + it.key() + "'");
    }
    RunConfig cfg;
    cfg.train = config_from_json(j, origin);
    if (j.contains("out_dir")) cfg.out_dir = get_string(j, "out_dir", origin);
    if (j.contains("deterministic")) {
        const auto& v = j.at("deterministic");
        if (!v.is_boolean()) fail(origin, "field 'deterministic' must be a boolean");
        cfg.deterministic = v.get<bool>();
    }
    try {
        validate_config(cfg.train);
    } catch (const std::invalid_argument& e) {
        fail(origin, e.what());
    }
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    return parse_run_config_text(read_text_file(path), path);
}

std::string resolved_config_json(const RunConfig& cfg) {
    ordered_json j = config_to_json(cfg.train);
    j["out_dir"] = cfg.out_dir;
    j["deterministic"] = cfg.deterministic;
    return dump_document(j);
}

std::string checkpoint_json(const Checkpoint& ckpt) {
    ordered_json j;
    j["schema_version"] = ckpt.schema_version;
    j["method"] = method_name(ckpt.config.method);
    j["iteration"] = ckpt.iteration;
    j["seed"] = ckpt.config.seed;
    j["config"] = config_to_json(ckpt.config);
    ordered_json best;
    best["iteration"] = ckpt.best.iteration;
    best["val_loss"] =
        std::isfinite(ckpt.best.val_loss) ? ordered_json(ckpt.best.val_loss) : ordered_json();
    best["val_ci"] = ckpt.best.val_ci;
    j["best"] = std::move(best);
    ordered_json stats;
    stats["negative_alpha_entries"] = ckpt.negative_alpha_entries;
    j["stats"] = std::move(stats);
    j["theta0"] = ordered_json(ckpt.theta0);
    j["rule"] = rule_to_json(ckpt.rule);
    ordered_json adam;
    adam["theta"] = adam_to_json(ckpt.adam_theta);
    ordered_json groups = ordered_json::array();
    const auto names = rule_group_names(ckpt.rule);
    for (std::size_t i = 0; i < ckpt.adam_groups.size(); ++i) {
        ordered_json g = adam_to_json(ckpt.adam_groups[i]);
        ordered_json named;
        named["name"] = i < names.size() ? names[i] : std::string("group") + std::to_string(i);
        for (auto it = g.begin(); it != g.end(); ++it) named[it.key()] = it.value();
        groups.push_back(std::move(named));
    }
    adam["groups"] = std::move(groups);
    j["adam"] = std::move(adam);
    return dump_document(j);
}

Checkpoint checkpoint_from_json(const std::string& text, const std::string& origin) {
    const ordered_json j = parse_text(text, origin);
    if (!j.is_object()) fail(origin, "checkpoint must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const char* keys[] = {"schema_version", "method", "iteration", "seed", "config",
                                     "best",           "stats",  "theta0",    "rule", "adam"};
        bool known = false;
        for (const char* key : keys) known = known || it.key() == key;
        if (!known) fail(origin, "unknown key '" + it.key() + "'");
    }
    Checkpoint ckpt;
    const auto version = get_count(j, "schema_version", origin);
    if (version != 1) fail(origin, "unsupported schema_version " + std::to_string(version));
    ckpt.schema_version = 1;
    ckpt.config = config_from_json(require_field(j, "config", origin), origin);
    ckpt.iteration = get_count(j, "iteration", origin);
    const auto& best = require_field(j, "best", origin);
    ckpt.best.iteration = get_count(best, "iteration", origin);
    const auto& best_loss = require_field(best, "val_loss", origin);
    ckpt.best.val_loss =
        best_loss.is_null() ? std::numeric_limits<double>::infinity() : best_loss.get<double>();
    ckpt.best.val_ci = get_double(best, "val_ci", origin);
    const auto& stats = require_field(j, "stats", origin);
    ckpt.negative_alpha_entries = get_count(stats, "negative_alpha_entries", origin);
    ckpt.theta0 = get_double_array(require_field(j, "theta0", origin), "theta0", origin);
    ckpt.rule = rule_from_json(require_field(j, "rule", origin), origin);
    const auto& adam = require_field(j, "adam", origin);
    ckpt.adam_theta = adam_from_json(require_field(adam, "theta", origin), origin);
    const auto& groups = require_field(adam, "groups", origin);
    if (!groups.is_array()) fail(origin, "adam groups must be an array");
    for (const auto& g : groups) ckpt.adam_groups.push_back(adam_from_json(g, origin));

    // structural consistency
    MLP shape(kDefaultWidths);
    if (ckpt.theta0.size() != shape.param_count()) {
        fail(origin, "theta0 length does not match the model");
    }
    if (method_name(ckpt.config.method) != get_string(j, "method", origin)) {
        fail(origin, "method does not match config");
    }
    const auto packed = rule_groups_pack(ckpt.rule);
    if (packed.size() != ckpt.adam_groups.size()) {
        fail(origin, "adam group count does not match the rule");
    }
    for (std::size_t i = 0; i < packed.size(); ++i) {
        if (packed[i].size() != ckpt.adam_groups[i].m.size()) {
            fail(origin, "adam group size does not match the rule parameters");
        }
    }
    if (ckpt.adam_theta.m.size() != ckpt.theta0.size()) {
        fail(origin, "adam state does not match theta0");
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    write_text_file(path, checkpoint_json(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(read_text_file(path), path);
}

std::string eval_record_json(const std::string& checkpoint_path, const EvalResult& result,
                             std::size_t k_shot, std::size_t inner_steps, std::uint64_t seed) {
    std::string out = "{\"checkpoint\":";
    dump_string(checkpoint_path, out);
    out += ",\"tasks\":" + std::to_string(result.n_tasks);
    out += ",\"k_shot\":" + std::to_string(k_shot);
    out += ",\"inner_steps\":" + std::to_string(inner_steps);
    out += ",\"seed\":" + std::to_string(seed);
    out += ",\"mean_mse\":" + format_double(result.mean_mse);
    out += ",\"ci95\":" + format_double(result.ci95);
    out += "}\n";
    return out;
}

void write_matrix_csv(const DenseMatrix& m, const std::string& path) {
    std::string out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

DenseMatrix read_matrix_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<std::vector<double>> rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            std::size_t pos = 0;
            row.push_back(std::stod(cell, &pos));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ConfigError(path + ": ragged CSV rows");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError(path + ": empty matrix file");
    DenseMatrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

std::string metrics_csv_header() { return "iteration,train_loss,val_loss,val_ci,wall_ms,method,seed\n"; }

std::string metrics_csv_row(const MetricsRow& row, Method method, std::uint64_t seed,
                            bool deterministic) {
    std::string out = std::to_string(row.iteration);
    out += ',';
    out += format_double(row.train_loss);
    out += ',';
    if (row.has_val) out += format_double(row.val_loss);
    out += ',';
    if (row.has_val) out += format_double(row.val_ci);
    out += ',';
    out += deterministic ? "0" : format_double(row.wall_ms);
    out += ',';
    out += method_name(method);
    out += ',';
    out += std::to_string(seed);
    out += '\n';
    return out;
}

}  // namespace metacurv
