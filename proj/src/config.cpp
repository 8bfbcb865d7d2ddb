// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "anapipe/errors.hpp"
#include "anapipe/expcli.hpp"

namespace anapipe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        out.push_back(trim(item));
    }
    if (!s.empty() && s.back() == ',') {
        out.emplace_back();
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
    throw ConfigError("key '" + key + "': invalid value '" + value + "' (" + why + ")");
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (v.empty() || ec != std::errc() || ptr != last || !std::isfinite(out)) {
        bad_value(key, v, "expected a finite number");
    }
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        bad_value(key, v, "expected a non-negative integer");
    }
    return out;
}

std::uint64_t to_positive(const std::string& key, const std::string& v) {
    const auto out = to_uint(key, v);
    if (out == 0) {
        bad_value(key, v, "must be positive");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    bad_value(key, v, "expected true or false");
}

double to_tau(const std::string& key, const std::string& v) {
    if (v == "inf" || v == "infinity") {
        return std::numeric_limits<double>::infinity();
    }
    const double t = to_double(key, v);
    if (!(t > 0.0)) {
        bad_value(key, v, "must be positive or inf");
    }
    return t;
}

std::string fmt(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// A tau whose reciprocal reproduces inv_tau exactly.
std::string fmt_tau(double inv_tau) {
    if (inv_tau == 0.0) {
        return "inf";
    }
    double t = 1.0 / inv_tau;
    for (int i = 0; i < 8 && 1.0 / t != inv_tau; ++i) {
        const double up = std::nextafter(t, std::numeric_limits<double>::infinity());
        const double down = std::nextafter(t, 0.0);
        t = (1.0 / up == inv_tau) ? up : down;
    }
    return fmt(t);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += (i ? "," : "") + std::to_string(xs[i]);
    }
    return out;
}

const std::set<std::string>& list_keys() {
    static const std::set<std::string> keys = {"dims", "lr_decay_epochs"};
    return keys;
}

void set_device_tau(DeviceConfig& dev, double tau) {
    const DeviceConfig fresh = DeviceConfig::analog(tau, dev.saturation_limit, dev.policy);
    dev.mode = fresh.mode;
    dev.inv_tau = fresh.inv_tau;
}

void apply_global_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "out") {
        if (value.empty()) {
            bad_value(key, value, "must not be empty");
        }
        cfg.out_dir = value;
    } else if (key == "target_loss") {
        cfg.target_loss = to_double(key, value);
    } else if (key == "target_accuracy") {
        const double a = to_double(key, value);
        if (a < 0.0 || a > 1.0) {
            bad_value(key, value, "must lie in [0, 1]");
        }
        cfg.target_accuracy = a;
    } else if (key == "threads") {
        cfg.threads = to_uint(key, value);
    } else {
        throw ConfigError("unknown global key '" + key + "'");
    }
}

// Input and output widths implied by a data spec, when known without loading.
std::optional<std::pair<std::size_t, std::size_t>> data_shape(const DataSpec& d) {
    if (d.kind == "teacher") {
        return std::pair{d.dim, d.outputs};
    }
    if (d.kind == "gmm") {
        return std::pair{d.dim, d.classes};
    }
    return std::nullopt;
}

void validate_spec(const RunSpec& spec) {
    const auto where = [&](const std::string& msg) {
        return ConfigError("run '" + spec.name + "': " + msg);
    };
    const RunConfig& rc = spec.run;
    if (rc.b_micro == 0) {
        throw where("key 'b_micro': must be positive");
    }
    if (rc.b_mini % rc.b_micro != 0) {
        throw where("key 'b_micro': B_mini not divisible by B_micro");
    }
    if (rc.stage_dims.empty() && (spec.stages == 0 || (spec.stages > 1 && spec.hidden == 0))) {
        throw where("key 'dims': set dims, or stages (and hidden when stages > 1)");
    }
    const DataSpec& d = spec.data;
    if (d.kind == "gmm" && (d.classes < 2 || d.classes > d.dim)) {
        throw where("key 'data.classes': need 2 <= classes <= data.dim");
    }
    if (rc.loss == LossKind::SoftmaxCrossEntropy && d.kind == "teacher") {
        throw where("key 'loss': softmax_ce needs classification data");
    }
    RunConfig probe = rc;
    if (const auto shape = data_shape(d)) {
        probe.stage_dims = resolve_dims(spec, shape->first, shape->second);
        if (!rc.stage_dims.empty() &&
            (rc.stage_dims.front() != shape->first || rc.stage_dims.back() != shape->second)) {
            throw where("key 'dims': input/output widths must be " + std::to_string(shape->first) +
                        " and " + std::to_string(shape->second) + " for this data");
        }
    } else if (probe.stage_dims.empty()) {
        probe.stage_dims = {1, 1};
    }
    try {
        probe.validate();
    } catch (const ConfigError& e) {
        throw where(e.what());
    }
}

std::string expanded_name(const RunSpec& base, const std::vector<std::pair<std::string, std::string>>& axes) {
    std::string name = base.name;
    for (const auto& [k, v] : axes) {
        name += "_" + k + "-" + v;
    }
    for (char& c : name) {
        if (c == '/' || c == '\\' || c == ':' || c == ' ') {
            c = '-';
        }
    }
    return name;
}

}  // namespace

void apply_run_key(RunSpec& spec, const std::string& key, const std::string& value) {
    RunConfig& rc = spec.run;
    DataSpec& d = spec.data;
    try {
        if (key == "name") {
            if (value.empty() || value.find_first_of("/\\ \t") != std::string::npos) {
                bad_value(key, value, "must be non-empty without spaces or slashes");
            }
            spec.name = value;
        } else if (key == "schedule") {
            rc.schedule = parse_strategy(value);
        } else if (key == "dims") {
            if (spec.stages != 0) {
                throw ConfigError("key 'dims': conflicts with stages");
            }
            rc.stage_dims.clear();
            for (const auto& item : split_list(value)) {
                rc.stage_dims.push_back(to_positive(key, item));
            }
            if (rc.stage_dims.size() < 2) {
                bad_value(key, value, "need at least an input and an output width");
            }
        } else if (key == "stages") {
            if (!rc.stage_dims.empty()) {
                throw ConfigError("key 'stages': conflicts with dims");
            }
            spec.stages = to_positive(key, value);
        } else if (key == "hidden") {
            spec.hidden = to_positive(key, value);
        } else if (key == "activation") {
            rc.activation = ActivationKind::parse(value);
        } else if (key == "last_activation") {
            rc.last_activation = ActivationKind::parse(value);
        } else if (key == "loss") {
            rc.loss = parse_loss(value);
        } else if (key == "tau") {
            set_device_tau(rc.device, to_tau(key, value));
        } else if (key == "saturation_limit") {
            const double s = to_double(key, value);
            if (!(s > 0.0 && s < 1.0)) {
                bad_value(key, value, "must lie in (0, 1)");
            }
            rc.device.saturation_limit = s;
        } else if (key == "saturation_policy") {
            if (value == "warn") {
                rc.device.policy = SaturationPolicy::Warn;
            } else if (value == "abort") {
                rc.device.policy = SaturationPolicy::Abort;
            } else {
                bad_value(key, value, "expected warn or abort");
            }
        } else if (key == "alpha") {
            rc.alpha = to_double(key, value);
            if (!(rc.alpha > 0.0)) {
                bad_value(key, value, "must be positive");
            }
        } else if (key == "epochs") {
            rc.epochs = to_uint(key, value);
        } else if (key == "steps") {
            rc.steps = to_uint(key, value);
        } else if (key == "b_mini") {
            rc.b_mini = to_positive(key, value);
        } else if (key == "b_micro") {
            rc.b_micro = to_positive(key, value);
        } else if (key == "noise_sigma") {
            rc.noise_sigma = to_double(key, value);
            if (rc.noise_sigma < 0.0) {
                bad_value(key, value, "must be non-negative");
            }
        } else if (key == "seed") {
            rc.seed = to_uint(key, value);
        } else if (key == "eval_every") {
            rc.eval_every = to_positive(key, value);
        } else if (key == "eval_batch") {
            rc.eval_batch = to_positive(key, value);
        } else if (key == "init_scale") {
            rc.init_scale = to_double(key, value);
            if (rc.init_scale < 0.0) {
                bad_value(key, value, "must be non-negative");
            }
        } else if (key == "lr_decay_epochs") {
            rc.lr_decay_epochs.clear();
            if (!value.empty()) {
                for (const auto& item : split_list(value)) {
                    rc.lr_decay_epochs.push_back(to_uint(key, item));
                }
            }
        } else if (key == "lr_decay_factor") {
            rc.lr_decay_factor = to_double(key, value);
            if (!(rc.lr_decay_factor > 0.0)) {
                bad_value(key, value, "must be positive");
            }
        } else if (key == "u") {
            rc.u_slack = to_double(key, value);
            if (rc.u_slack < 0.0) {
                bad_value(key, value, "must be non-negative");
            }
        } else if (key == "data") {
            if (value == "teacher" || value == "gmm") {
                d.kind = value;
                d.csv_path.clear();
            } else if (value.rfind("csv:", 0) == 0 && value.size() > 4) {
                d.kind = "csv";
                d.csv_path = value.substr(4);
            } else {
                bad_value(key, value, "expected teacher, gmm or csv:<path>");
            }
        } else if (key == "data.n") {
            d.n = to_positive(key, value);
        } else if (key == "data.eval_n") {
            d.eval_n = to_uint(key, value);
        } else if (key == "data.dim") {
            d.dim = to_positive(key, value);
        } else if (key == "data.classes") {
            d.classes = to_positive(key, value);
        } else if (key == "data.separation") {
            d.separation = to_double(key, value);
        } else if (key == "data.spread") {
            d.spread = to_double(key, value);
            if (d.spread < 0.0) {
                bad_value(key, value, "must be non-negative");
            }
        } else if (key == "data.outputs") {
            d.outputs = to_positive(key, value);
        } else if (key == "data.teacher_stages") {
            d.teacher_stages = to_positive(key, value);
        } else if (key == "data.teacher_hidden") {
            d.teacher_hidden = to_uint(key, value);
        } else if (key == "data.teacher_scale") {
            d.teacher_scale = to_double(key, value);
        } else if (key == "data.normalize") {
            d.normalize = to_bool(key, value);
        } else if (key == "data.seed") {
            d.seed = to_uint(key, value);
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.find("key '") != std::string::npos) {
            throw;
        }
        throw ConfigError("key '" + key + "': " + msg);
    }
}

std::vector<std::size_t> resolve_dims(const RunSpec& spec, std::size_t input_dim, std::size_t output_dim) {
    if (!spec.run.stage_dims.empty()) {
        return spec.run.stage_dims;
    }
    std::vector<std::size_t> dims{input_dim};
    for (std::size_t m = 1; m < spec.stages; ++m) {
        dims.push_back(spec.hidden);
    }
    dims.push_back(output_dim);
    return dims;
}

ExperimentConfig parse_config(std::istream& in) {
    enum class Section { Global, Run, Sweep };
    ExperimentConfig cfg;
    Section section = Section::Global;
    std::set<std::string> seen;
    bool have_sweep = false;
    std::string line;
    std::size_t line_no = 0;
    const auto fail = [&](const std::string& msg) {
        return ParseError("line " + std::to_string(line_no) + ": " + msg, line_no);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        if (t.front() == '[') {
            if (t == "[run]") {
                section = Section::Run;
                cfg.runs.emplace_back();
                cfg.runs.back().name = "run" + std::to_string(cfg.runs.size());
            } else if (t == "[sweep]") {
                if (have_sweep) {
                    throw fail("only one [sweep] section is allowed");
                }
                have_sweep = true;
                section = Section::Sweep;
            } else {
                throw fail("unknown section " + t);
            }
            seen.clear();
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw fail("expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw fail("missing key before '='");
        }
        if (!seen.insert(key).second) {
            throw fail("key '" + key + "': duplicate in this section");
        }
        try {
            switch (section) {
                case Section::Global:
                    apply_global_key(cfg, key, value);
                    break;
                case Section::Run:
                    apply_run_key(cfg.runs.back(), key, value);
                    break;
                case Section::Sweep: {
                    if (key == "name") {
                        throw ConfigError("key 'name': cannot be swept");
                    }
                    if (list_keys().count(key) != 0) {
                        throw ConfigError("key '" + key + "': list-valued keys cannot be swept");
                    }
                    SweepAxis axis{key, split_list(value)};
                    if (value.empty() || axis.values.empty()) {
                        throw ConfigError("key '" + key + "': sweep needs at least one value");
                    }
                    RunSpec probe;
                    for (const auto& v : axis.values) {
                        apply_run_key(probe, key, v);
                    }
                    cfg.sweep.push_back(std::move(axis));
                    break;
                }
            }
        } catch (const ParseError&) {
            throw;
        } catch (const ConfigError& e) {
            throw fail(e.what());
        }
    }

    if (cfg.runs.empty()) {
        throw ConfigError("config has no [run] section");
    }
    std::set<std::string> names;
    for (const auto& r : cfg.runs) {
        if (!names.insert(r.name).second) {
            throw ConfigError("key 'name': duplicate run name '" + r.name + "'");
        }
        validate_spec(r);
    }
    expand_runs(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    return parse_config(in);
}

std::vector<RunSpec> expand_runs(const ExperimentConfig& cfg) {
    std::vector<RunSpec> out;
    std::size_t points = 1;
    for (const auto& axis : cfg.sweep) {
        points *= axis.values.size();
    }
    for (const RunSpec& base : cfg.runs) {
        for (std::size_t p = 0; p < points; ++p) {
            RunSpec r = base;
            r.origin = base.name;
            r.axes.clear();
            // Mixed-radix decode of p, last axis fastest.
            std::vector<std::size_t> idx(cfg.sweep.size());
            std::size_t rest = p;
            for (std::size_t a = cfg.sweep.size(); a-- > 0;) {
                idx[a] = rest % cfg.sweep[a].values.size();
                rest /= cfg.sweep[a].values.size();
            }
            for (std::size_t a = 0; a < cfg.sweep.size(); ++a) {
                const auto& axis = cfg.sweep[a];
                const std::string& v = axis.values[idx[a]];
                if (axis.key == "stages" && !r.run.stage_dims.empty()) {
                    throw ConfigError("run '" + base.name +
                                      "': key 'stages': cannot sweep stages over explicit dims");
                }
                apply_run_key(r, axis.key, v);
                r.axes.emplace_back(axis.key, v);
            }
            r.name = expanded_name(base, r.axes);
            validate_spec(r);
            out.push_back(std::move(r));
        }
    }
    std::set<std::string> names;
    for (const auto& r : out) {
        if (!names.insert(r.name).second) {
            throw ConfigError("key 'name': sweep produces duplicate run name '" + r.name + "'");
        }
    }
    return out;
}

std::string serialize(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "out = " << cfg.out_dir.string() << '\n';
    if (cfg.target_loss) {
        os << "target_loss = " << fmt(*cfg.target_loss) << '\n';
    }
    if (cfg.target_accuracy) {
        os << "target_accuracy = " << fmt(*cfg.target_accuracy) << '\n';
    }
    os << "threads = " << cfg.threads << '\n';
    for (const RunSpec& r : cfg.runs) {
        const RunConfig& rc = r.run;
        const DataSpec& d = r.data;
        os << "\n[run]\n";
        os << "name = " << r.name << '\n';
        os << "schedule = " << strategy_name(rc.schedule) << '\n';
        if (!rc.stage_dims.empty()) {
            os << "dims = " << join(rc.stage_dims) << '\n';
        } else {
            os << "stages = " << r.stages << '\n';
        }
        if (r.hidden != 0) {
            os << "hidden = " << r.hidden << '\n';
        }
        os << "activation = " << rc.activation.name() << '\n';
        os << "last_activation = " << rc.last_activation.name() << '\n';
        os << "loss = " << loss_name(rc.loss) << '\n';
        os << "tau = " << fmt_tau(rc.device.inv_tau) << '\n';
        os << "saturation_limit = " << fmt(rc.device.saturation_limit) << '\n';
        os << "saturation_policy = " << (rc.device.policy == SaturationPolicy::Abort ? "abort" : "warn") << '\n';
        os << "alpha = " << fmt(rc.alpha) << '\n';
        os << "epochs = " << rc.epochs << '\n';
        os << "steps = " << rc.steps << '\n';
        os << "b_mini = " << rc.b_mini << '\n';
        os << "b_micro = " << rc.b_micro << '\n';
        os << "noise_sigma = " << fmt(rc.noise_sigma) << '\n';
        os << "seed = " << rc.seed << '\n';
        os << "eval_every = " << rc.eval_every << '\n';
        os << "eval_batch = " << rc.eval_batch << '\n';
        os << "init_scale = " << fmt(rc.init_scale) << '\n';
        os << "lr_decay_epochs = " << join(rc.lr_decay_epochs) << '\n';
        os << "lr_decay_factor = " << fmt(rc.lr_decay_factor) << '\n';
        os << "u = " << fmt(rc.u_slack) << '\n';
        os << "data = " << (d.kind == "csv" ? "csv:" + d.csv_path.string() : d.kind) << '\n';
        os << "data.n = " << d.n << '\n';
        os << "data.eval_n = " << d.eval_n << '\n';
        os << "data.dim = " << d.dim << '\n';
        os << "data.classes = " << d.classes << '\n';
        os << "data.separation = " << fmt(d.separation) << '\n';
        os << "data.spread = " << fmt(d.spread) << '\n';
        os << "data.outputs = " << d.outputs << '\n';
        os << "data.teacher_stages = " << d.teacher_stages << '\n';
        os << "data.teacher_hidden = " << d.teacher_hidden << '\n';
        os << "data.teacher_scale = " << fmt(d.teacher_scale) << '\n';
        os << "data.normalize = " << (d.normalize ? "true" : "false") << '\n';
        if (d.seed) {
            os << "data.seed = " << *d.seed << '\n';
        }
    }
    if (!cfg.sweep.empty()) {
        os << "\n[sweep]\n";
        for (const auto& axis : cfg.sweep) {
            os << axis.key << " = ";
            for (std::size_t i = 0; i < axis.values.size(); ++i) {
                os << (i ? "," : "") << axis.values[i];
            }
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace anapipe
