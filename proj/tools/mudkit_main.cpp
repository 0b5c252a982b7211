// SPDX-License-Identifier: Apache-2.0
//
// mudkit: command-line front end for the whitening operators, the Gram-space
// convergence tracer, the preconditioned-spectrum check, the kernel
// benchmark, and the training harness.
//
// Exit codes: 0 success, 2 bad flags/config, 3 numerical failure,
// 4 diverged training.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mudkit/analysis.hpp"
#include "mudkit/harness.hpp"

using json = nlohmann::ordered_json;
using namespace mudkit;

namespace {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_output(const std::string& path, const std::string& body) {
    if (path.empty()) {
        std::cout << body;
        return;
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open output path '" + path + "'");
    out << body;
}

std::optional<std::uint64_t> env_seed_override() {
    const char* s = std::getenv("MUDKIT_SEED");
    if (!s) return std::nullopt;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') {
        throw ConfigError("MUDKIT_SEED is not an unsigned integer: '" + std::string(s) + "'");
    }
    return static_cast<std::uint64_t>(v);
}

std::uint64_t effective_seed(std::uint64_t configured) {
    if (auto env = env_seed_override()) return *env;
    return configured;
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in '" + path + "': " + e.what());
    }
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.contains(key)) {
            throw ConfigError("unknown config key '" + key + "' in " + where);
        }
    }
}

const std::set<std::string> kTrainKeys = {
    "task",        "optimizer",     "mud_passes",  "steps",        "batch",
    "seed",        "lr",            "min_lr",      "warmup_steps", "weight_decay",
    "beta1",       "beta2",         "beta_momentum", "clip_norm",
    "matreg_n",    "matreg_m",      "mlp_in",      "mlp_hidden",   "mlp_classes",
    "output_path", "format"};

harness::TrainConfig::TaskKind parse_task(const std::string& name) {
    if (name == "matreg") return harness::TrainConfig::TaskKind::kMatReg;
    if (name == "mlp") return harness::TrainConfig::TaskKind::kMlp;
    throw ConfigError("unknown task '" + name + "' (expected matreg|mlp)");
}

optim::Optimizer::Kind parse_optimizer(const std::string& name) {
    if (name == "adamw") return optim::Optimizer::Kind::kAdamW;
    if (name == "muon") return optim::Optimizer::Kind::kMuon;
    if (name == "mud") return optim::Optimizer::Kind::kMud;
    throw ConfigError("unknown optimizer '" + name + "' (expected adamw|muon|mud)");
}

// Fills a TrainConfig from flat JSON; shared by train and compare.
harness::TrainConfig train_config_from_json(const json& j, const std::string& where) {
    harness::TrainConfig cfg;
    if (j.contains("task")) cfg.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("optimizer")) {
        cfg.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    }
    try {
        if (j.contains("mud_passes")) cfg.mud_passes = j.at("mud_passes").get<int>();
        if (j.contains("steps")) cfg.steps = j.at("steps").get<std::int64_t>();
        if (j.contains("batch")) cfg.batch = j.at("batch").get<std::size_t>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("lr")) {
            cfg.lr = j.at("lr").get<double>();
            cfg.min_lr = 0.1 * cfg.lr;  // overridden below when min_lr is explicit
        }
        if (j.contains("min_lr")) cfg.min_lr = j.at("min_lr").get<double>();
        if (j.contains("warmup_steps")) {
            cfg.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
        }
        if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
        if (j.contains("beta1")) cfg.beta1 = j.at("beta1").get<double>();
        if (j.contains("beta2")) cfg.beta2 = j.at("beta2").get<double>();
        if (j.contains("beta_momentum")) cfg.beta_momentum = j.at("beta_momentum").get<double>();
        if (j.contains("clip_norm")) cfg.clip_norm = j.at("clip_norm").get<double>();
        if (j.contains("matreg_n")) cfg.matreg_n = j.at("matreg_n").get<std::size_t>();
        if (j.contains("matreg_m")) cfg.matreg_m = j.at("matreg_m").get<std::size_t>();
        if (j.contains("mlp_in")) cfg.mlp_in = j.at("mlp_in").get<std::size_t>();
        if (j.contains("mlp_hidden")) cfg.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
        if (j.contains("mlp_classes")) cfg.mlp_classes = j.at("mlp_classes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value in " + where + ": " + e.what());
    }
    cfg.seed = effective_seed(cfg.seed);
    return cfg;
}

std::string train_csv(const std::vector<harness::TrainRecord>& records) {
    std::ostringstream out;
    out << "step,loss,lr,grad_norm_preclip,elapsed_seconds\n";
    for (const auto& r : records) {
        out << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.lr) << ','
            << fmt_double(r.grad_norm_preclip) << ',' << fmt_double(r.elapsed_seconds) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------- whiten --

struct WhitenFlags {
    std::string op = "mud";
    int passes = 1;
    int ns_iters = 5;
    std::size_t rows = 64;
    std::size_t cols = 256;
    double cond = 10.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_whiten(const WhitenFlags& f) {
    analysis::SpectrumSpec spec;
    spec.k = std::min(f.rows, f.cols);
    spec.d = std::max(f.rows, f.cols);
    spec.condition_number = f.cond;
    Matrix m = analysis::random_with_spectrum(spec, effective_seed(f.seed));
    if (f.rows > f.cols) m = transpose(m);

    WhitenConfig cfg;
    cfg.passes = f.passes;
    cfg.ns_iters = f.ns_iters;
    WhitenReport report;
    if (f.op == "mud") {
        report = mud_whiten(m, cfg);
    } else if (f.op == "muon") {
        report = muon_ns(m, cfg);
    } else if (f.op == "polar") {
        report = polar_exact(m);
    } else if (f.op == "cholqr") {
        report = cholqr_whiten(m);
    } else {
        throw ConfigError("unknown whitening op '" + f.op + "' (expected mud|muon|polar|cholqr)");
    }

    json out;
    out["op"] = f.op;
    out["k"] = spec.k;
    out["d"] = spec.d;
    out["ortho_residual"] = report.ortho_residual;
    out["flops"] = report.ledger.model_flops();
    out["wall_seconds"] = report.wall_seconds;
    write_output(f.out, out.dump(2) + "\n");
    return 0;
}

// ----------------------------------------------------------------- trace --

struct TraceFlags {
    std::size_t dim = 16;
    double eps0 = 0.003;
    int passes = 12;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_trace(const TraceFlags& f) {
    const Matrix g0 = analysis::random_unit_diag_spd(f.dim, f.eps0, effective_seed(f.seed));
    const GramTrace trace = analysis::trace_convergence(g0, f.passes);

    std::ostringstream csv;
    csv << "pass,linf,l1,fro\n";
    for (const auto& row : trace.deviations) {
        csv << row.pass << ',' << fmt_double(row.linf) << ',' << fmt_double(row.l1) << ','
            << fmt_double(row.fro) << '\n';
    }
    const auto s_linf = analysis::convergence_slope(trace, analysis::TraceNorm::kLinf);
    const auto s_l1 = analysis::convergence_slope(trace, analysis::TraceNorm::kL1);
    const auto s_fro = analysis::convergence_slope(trace, analysis::TraceNorm::kFro);
    if (s_linf || s_l1 || s_fro) {
        const auto cell = [](const std::optional<double>& s) {
            return s ? fmt_double(*s) : std::string("nan");
        };
        csv << "slope," << cell(s_linf) << ',' << cell(s_l1) << ',' << cell(s_fro) << '\n';
    }
    write_output(f.out, csv.str());
    return 0;
}

// ------------------------------------------------------------- sgs-check --

struct SgsFlags {
    std::size_t dim = 24;
    int instances = 10;
    double eps0 = -1.0;  // default: 0.8/(dim-1)
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_sgs_check(const SgsFlags& f) {
    if (f.instances < 1) throw ConfigError("--instances must be >= 1");
    const double eps0 =
        f.eps0 >= 0.0 ? f.eps0 : (f.dim > 1 ? 0.8 / static_cast<double>(f.dim - 1) : 0.0);
    const std::uint64_t seed = effective_seed(f.seed);

    double worst = 0.0;
    for (int i = 0; i < f.instances; ++i) {
        const Matrix g = analysis::random_unit_diag_spd(f.dim, eps0, seed + i);
        const auto [direct, generalized] = sgs_preconditioned_spectrum(g);
        for (std::size_t j = 0; j < direct.eigenvalues.size(); ++j) {
            worst =
                std::max(worst, std::abs(direct.eigenvalues[j] - generalized.eigenvalues[j]));
        }
    }
    json out;
    out["dim"] = f.dim;
    out["instances"] = f.instances;
    out["eps0"] = eps0;
    out["seed"] = seed;
    out["max_discrepancy"] = worst;
    write_output(f.out, out.dump(2) + "\n");
    return 0;
}

// ----------------------------------------------------------------- bench --

struct BenchFlags {
    std::vector<std::string> ops = {"mud1", "muon5"};
    std::size_t rows = 256;
    std::size_t cols = 1024;
    double cond = 10.0;
    int repeats = 5;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_bench(const BenchFlags& f) {
    analysis::SpectrumSpec spec;
    spec.k = std::min(f.rows, f.cols);
    spec.d = std::max(f.rows, f.cols);
    spec.condition_number = f.cond;

    std::ostringstream csv;
    csv << "op,k,d,flops,wall_seconds,flops_per_second\n";
    for (const std::string& op : f.ops) {
        const analysis::BenchRow row =
            analysis::bench(op, spec, f.repeats, effective_seed(f.seed));
        csv << row.op_name << ',' << row.k << ',' << row.d << ',' << row.flops << ','
            << fmt_double(row.wall_seconds) << ',' << fmt_double(row.flops_per_second) << '\n';
    }
    write_output(f.out, csv.str());
    return 0;
}

// ----------------------------------------------------------------- train --

int cmd_train(const std::string& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, kTrainKeys, config_path);
    const harness::TrainConfig cfg = train_config_from_json(j, config_path);
    const std::string output_path = j.value("output_path", std::string{});
    const std::string format = j.value("format", std::string{"csv"});
    if (format != "csv" && format != "json") {
        throw ConfigError("format must be csv or json");
    }

    const harness::TrainResult result = harness::train(cfg);
    if (format == "csv") {
        write_output(output_path, train_csv(result.records));
    } else {
        json out;
        out["diverged"] = result.diverged;
        out["diverged_step"] = result.diverged_step;
        out["records"] = json::array();
        for (const auto& r : result.records) {
            out["records"].push_back({{"step", r.step},
                                      {"loss", r.loss},
                                      {"lr", r.lr},
                                      {"grad_norm_preclip", r.grad_norm_preclip},
                                      {"elapsed_seconds", r.elapsed_seconds}});
        }
        write_output(output_path, out.dump(2) + "\n");
    }
    if (result.diverged) {
        std::cerr << "training diverged at step " << result.diverged_step << "\n";
        return 4;
    }
    return 0;
}

// --------------------------------------------------------------- compare --

const std::set<std::string> kCompareKeys = {
    "task",          "steps",     "batch",      "seed",         "lr",
    "min_lr",        "warmup_steps", "weight_decay", "beta1",   "beta2",
    "beta_momentum", "clip_norm", "matreg_n",   "matreg_m",     "mlp_in",
    "mlp_hidden",    "mlp_classes", "optimizers", "target_ratio", "target_loss",
    "workers",       "output_path"};

struct CompareEntry {
    std::string label;
    harness::TrainConfig cfg;
    harness::TrainResult result;
};

int cmd_compare(const std::string& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, kCompareKeys, config_path);
    if (!j.contains("optimizers") || !j.at("optimizers").is_array() ||
        j.at("optimizers").empty()) {
        throw ConfigError("compare config needs a non-empty 'optimizers' array");
    }
    if (j.contains("target_ratio") && j.contains("target_loss")) {
        throw ConfigError("provide only one of target_ratio / target_loss");
    }
    const harness::TrainConfig base = train_config_from_json(j, config_path);

    std::vector<CompareEntry> entries;
    for (const auto& opt : j.at("optimizers")) {
        if (!opt.is_object() || !opt.contains("name")) {
            throw ConfigError("each optimizers[] entry needs a 'name'");
        }
        reject_unknown_keys(opt, {"name", "mud_passes"}, "optimizers[] entry");
        CompareEntry e;
        e.cfg = base;
        const std::string name = opt.at("name").get<std::string>();
        e.cfg.optimizer = parse_optimizer(name);
        if (opt.contains("mud_passes")) e.cfg.mud_passes = opt.at("mud_passes").get<int>();
        e.label = name == "mud" ? "mud" + std::to_string(e.cfg.mud_passes) : name;
        entries.push_back(std::move(e));
    }

    int workers = j.value("workers", 0);
    if (workers <= 0) {
        workers = static_cast<int>(std::thread::hardware_concurrency());
        if (workers <= 0) workers = 1;
    }
    workers = std::min<int>(workers, static_cast<int>(entries.size()));

    // each worker owns whole runs; results land in fixed slots, so output
    // order is independent of scheduling
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < entries.size();
                 i = next.fetch_add(1)) {
                entries[i].result = harness::train(entries[i].cfg);
            }
        });
    }
    for (auto& t : pool) t.join();

    const double target_ratio = j.value("target_ratio", 0.01);
    bool any_diverged = false;
    json results = json::array();
    for (const CompareEntry& e : entries) {
        json row;
        row["optimizer"] = e.label;
        const auto& records = e.result.records;
        const double target = j.contains("target_loss")
                                  ? j.at("target_loss").get<double>()
                                  : (records.empty() ? 0.0 : target_ratio * records.front().loss);
        row["target_loss"] = target;
        std::optional<std::size_t> hit;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].loss <= target) {
                hit = i;
                break;
            }
        }
        row["steps_to_target"] = hit ? json(records[*hit].step) : json(nullptr);
        row["seconds_to_target"] = hit ? json(records[*hit].elapsed_seconds) : json(nullptr);
        row["final_loss"] = records.empty() ? json(nullptr) : json(records.back().loss);
        row["diverged"] = e.result.diverged;
        any_diverged = any_diverged || e.result.diverged;
        results.push_back(std::move(row));
    }
    json out;
    out["task"] = j.value("task", "matreg");
    out["steps"] = base.steps;
    out["seed"] = base.seed;
    out["results"] = std::move(results);
    write_output(j.value("output_path", std::string{}), out.dump(2) + "\n");
    return any_diverged ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mudkit: matrix-whitening optimizer toolkit"};
    app.require_subcommand(1);

    WhitenFlags wf;
    auto* whiten =
        app.add_subcommand("whiten", "run one whitening operator on a synthetic matrix");
    whiten->add_option("--op", wf.op, "mud|muon|polar|cholqr")->capture_default_str();
    whiten->add_option("--passes", wf.passes, "decorrelation passes")->capture_default_str();
    whiten->add_option("--ns-iters", wf.ns_iters, "Newton-Schulz iterations")
        ->capture_default_str();
    whiten->add_option("--rows", wf.rows, "input rows")->capture_default_str();
    whiten->add_option("--cols", wf.cols, "input cols")->capture_default_str();
    whiten->add_option("--cond", wf.cond, "condition number of the input")
        ->capture_default_str();
    whiten->add_option("--seed", wf.seed, "rng seed")->capture_default_str();
    whiten->add_option("--out", wf.out, "output path (default: stdout)");

    TraceFlags tf;
    auto* trace = app.add_subcommand("trace", "iterate the Gram-space map, log deviations");
    trace->add_option("--dim", tf.dim, "Gram dimension k")->capture_default_str();
    trace->add_option("--eps0", tf.eps0, "off-diagonal scale of the start matrix")
        ->capture_default_str();
    trace->add_option("--passes", tf.passes, "max passes")->capture_default_str();
    trace->add_option("--seed", tf.seed, "rng seed")->capture_default_str();
    trace->add_option("--out", tf.out, "output path (default: stdout)");

    SgsFlags sf;
    auto* sgs = app.add_subcommand(
        "sgs-check", "compare triangular-congruence and preconditioned spectra");
    sgs->add_option("--dim", sf.dim, "Gram dimension k")->capture_default_str();
    sgs->add_option("--instances", sf.instances, "random instances")->capture_default_str();
    sgs->add_option("--eps0", sf.eps0, "off-diagonal scale (default 0.8/(dim-1))");
    sgs->add_option("--seed", sf.seed, "rng seed")->capture_default_str();
    sgs->add_option("--out", sf.out, "output path (default: stdout)");

    BenchFlags bf;
    auto* bench =
        app.add_subcommand("bench", "time whitening operators, report the FLOP model");
    bench->add_option("--op", bf.ops, "ops to run (repeatable): mudP|muonS|polar|cholqr")
        ->capture_default_str();
    bench->add_option("--rows", bf.rows, "input rows")->capture_default_str();
    bench->add_option("--cols", bf.cols, "input cols")->capture_default_str();
    bench->add_option("--cond", bf.cond, "condition number of the input")
        ->capture_default_str();
    bench->add_option("--repeats", bf.repeats, "timed repeats (median)")->capture_default_str();
    bench->add_option("--seed", bf.seed, "rng seed")->capture_default_str();
    bench->add_option("--out", bf.out, "output path (default: stdout)");

    std::string train_config;
    auto* train = app.add_subcommand("train", "run a training config, emit per-step records");
    train->add_option("config", train_config, "JSON config path")->required();

    std::string compare_config;
    auto* compare =
        app.add_subcommand("compare", "run several optimizers on one task, summarize");
    compare->add_option("config", compare_config, "JSON config path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (whiten->parsed()) return cmd_whiten(wf);
        if (trace->parsed()) return cmd_trace(tf);
        if (sgs->parsed()) return cmd_sgs_check(sf);
        if (bench->parsed()) return cmd_bench(bf);
        if (train->parsed()) return cmd_train(train_config);
        if (compare->parsed()) return cmd_compare(compare_config);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
