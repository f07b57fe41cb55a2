// Command-line front end: dataset generation, training, evaluation,
// ablation sweeps, and noise-matrix inspection. Every command is
// deterministic given the resolved configuration it echoes.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "couda/data.hpp"
#include "couda/metrics.hpp"
#include "couda/model.hpp"
#include "couda/objectives.hpp"
#include "couda/rng.hpp"
#include "couda/training.hpp"

using namespace couda;

namespace {

// Union of the dataset, corruption, training, and path knobs. Enum-valued
// fields stay strings here so unknown names surface as usage errors with
// the valid spellings listed.
struct RunConfig {
    int k = 3;
    int dim = 2;
    int per_class = 300;
    double rot = 0.0;  // degrees
    std::vector<double> trans;
    double scale = 1.0;
    double spread = 0.8;
    double noise = 0.0;
    double imbalance = 0.0;  // probability a class gets subsampled; 0 disables

    double alpha = 0.1;
    double eta = 0.01;
    double gamma = 2.0;
    double eps_init = 0.8;
    double lr = 1e-3;
    int batch_size = 16;
    int steps = 2000;
    int log_every = 100;
    bool uniform_lambda = false;
    std::string weight_metric = "cosine";
    std::string diversity_metric = "js";
    std::string domain_loss = "least_squares";
    std::string ensemble = "average";
    std::string noise_mode = "adaptive";

    std::uint64_t seed = 0;

    std::string dataset;
    std::string checkpoint;
    std::string curves;
    std::string report;
    std::string out;

    std::vector<std::string> variants{"full"};
    std::vector<std::string> weight_metrics;
    std::vector<std::string> diversity_metrics;
    std::vector<std::string> domain_losses;
    std::vector<std::string> ensembles;
    std::vector<std::uint64_t> seeds;
};

NoiseMode parse_noise_mode(const std::string& s) {
    if (s == "adaptive") return NoiseMode::adaptive;
    if (s == "identity") return NoiseMode::identity;
    throw std::invalid_argument("unknown noise mode '" + s + "' (valid: adaptive, identity)");
}

ShiftSpec shift_spec(const RunConfig& cfg) {
    ShiftSpec spec;
    spec.n_classes = cfg.k;
    spec.dim = cfg.dim;
    spec.per_class = cfg.per_class;
    spec.rotation = cfg.rot * std::numbers::pi / 180.0;
    spec.translation = cfg.trans;
    spec.scale_factor = cfg.scale;
    spec.spread = cfg.spread;
    return spec;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.alpha = cfg.alpha;
    tc.eta = cfg.eta;
    tc.gamma = cfg.gamma;
    tc.eps_init = cfg.eps_init;
    tc.learning_rate = cfg.lr;
    tc.batch_size = cfg.batch_size;
    tc.steps = cfg.steps;
    tc.seed = cfg.seed;
    tc.log_every = cfg.log_every;
    tc.uniform_lambda = cfg.uniform_lambda;
    tc.weight_metric = parse_weight_metric(cfg.weight_metric);
    tc.diversity_metric = parse_diversity_metric(cfg.diversity_metric);
    tc.domain_loss_kind = parse_domain_loss_kind(cfg.domain_loss);
    tc.ensemble = parse_ensemble_mode(cfg.ensemble);
    tc.noise_mode = parse_noise_mode(cfg.noise_mode);
    return tc;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Flat `key = value` lines holding exactly the keys the emitting command
// accepts, so the echo reads back through that command's --config.
void echo_config(const RunConfig& cfg, const std::string& path, bool with_grid) {
    std::FILE* out = std::fopen(path.c_str(), "w");
    if (!out) throw std::runtime_error("cannot write " + path);
    auto put = [&](const char* key, const std::string& value) {
        bool spaced = value.find_first_of(" \t") != std::string::npos;
        std::fprintf(out, spaced ? "%s = \"%s\"\n" : "%s = %s\n", key, value.c_str());
    };
    auto put_list = [&](const char* key, const std::vector<std::string>& values) {
        std::string joined;
        for (const std::string& v : values) joined += (joined.empty() ? "" : " ") + v;
        if (!joined.empty()) std::fprintf(out, "%s = %s\n", key, joined.c_str());
    };
    put("alpha", fmt_double(cfg.alpha));
    put("eta", fmt_double(cfg.eta));
    put("gamma", fmt_double(cfg.gamma));
    put("eps-init", fmt_double(cfg.eps_init));
    put("lr", fmt_double(cfg.lr));
    put("batch-size", std::to_string(cfg.batch_size));
    put("steps", std::to_string(cfg.steps));
    put("log-every", std::to_string(cfg.log_every));
    put("uniform-lambda", cfg.uniform_lambda ? "true" : "false");
    put("weight-metric", cfg.weight_metric);
    put("diversity-metric", cfg.diversity_metric);
    put("domain-loss", cfg.domain_loss);
    put("ensemble", cfg.ensemble);
    put("noise-mode", cfg.noise_mode);
    put("seed", std::to_string(cfg.seed));
    if (!cfg.dataset.empty()) put("dataset", cfg.dataset);
    if (with_grid) {
        put_list("variants", cfg.variants);
        put_list("weight-metrics", cfg.weight_metrics);
        put_list("diversity-metrics", cfg.diversity_metrics);
        put_list("domain-losses", cfg.domain_losses);
        put_list("ensembles", cfg.ensembles);
        std::vector<std::string> seeds;
        for (std::uint64_t s : cfg.seeds) seeds.push_back(std::to_string(s));
        put_list("seeds", seeds);
    }
    std::fclose(out);
}

void print_matrix(const char* name, const Tensor& m) {
    std::printf("%s:\n", name);
    for (int i = 0; i < m.rows(); ++i) {
        std::printf(" ");
        for (int j = 0; j < m.cols(); ++j) std::printf(" %8.4f", m.at(i, j));
        std::printf("\n");
    }
}

DatasetBundle load_bundle_checked(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw std::invalid_argument("dataset file not found: " + path);
    return load_bundle(path);
}

std::unique_ptr<CollaborativeModel> load_model_checked(const DatasetBundle& bundle, const std::string& path) {
    if (!std::filesystem::exists(path))
        throw std::invalid_argument("checkpoint file not found: " + path);
    auto model = CollaborativeModel::make_default(bundle.dim, bundle.k, 0);
    load_checkpoint(*model, path);
    return model;
}

int cmd_gen_data(const RunConfig& cfg) {
    DatasetBundle bundle = gen_shifted_gaussians(shift_spec(cfg), cfg.seed);
    if (cfg.noise > 0.0) apply_label_noise(bundle, cfg.noise, sub_seed(cfg.seed, "noise"));
    if (cfg.imbalance > 0.0) imbalance_subsample(bundle, cfg.imbalance, sub_seed(cfg.seed, "imbalance"));
    save_bundle(bundle, cfg.out);

    std::printf("wrote %s\n", cfg.out.c_str());
    std::printf("K = %d, n_source = %d, n_target = %d, n_target_test = %d\n", bundle.k, bundle.n_source(),
                bundle.n_target(), bundle.target_test_x.rows());
    print_matrix("true_Q", bundle.true_q);
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle_checked(cfg.dataset);
    TrainConfig tc = train_config(cfg);
    tc.validate();

    std::filesystem::create_directories(cfg.out);
    std::string checkpoint = cfg.checkpoint.empty() ? cfg.out + "/checkpoint.txt" : cfg.checkpoint;
    std::string curves = cfg.curves.empty() ? cfg.out + "/curves.csv" : cfg.curves;
    echo_config(cfg, cfg.out + "/config.txt", false);

    auto model = CollaborativeModel::make_default(bundle.dim, bundle.k, cfg.seed);
    CurveLog log = train(*model, bundle, tc);
    log.save(curves);
    save_checkpoint(*model, checkpoint);

    std::printf("trained %d steps on %s\n", tc.steps, cfg.dataset.c_str());
    if (!log.points.empty()) {
        const CurvePoint& last = log.points.back();
        std::printf("final losses: domain %.6f, classification %.6f, diversity %.6f, mean lambda %.4f\n",
                    last.domain_loss, last.classification_loss, last.diversity_loss, last.mean_lambda);
    }
    std::printf("wrote %s, %s, %s\n", checkpoint.c_str(), curves.c_str(), (cfg.out + "/config.txt").c_str());
    return 0;
}

MetricsReport evaluate(const CollaborativeModel& model, const DatasetBundle& bundle, EnsembleMode mode) {
    InferResult pred = infer(model, bundle.target_test_x, mode);
    MetricsReport report = compute_metrics(bundle.target_test_y, pred.labels, bundle.k);
    attach_q(report, estimated_q(model, bundle.source_x), bundle.true_q);
    return report;
}

int cmd_eval(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle_checked(cfg.dataset);
    auto model = load_model_checked(bundle, cfg.checkpoint);
    MetricsReport report = evaluate(*model, bundle, parse_ensemble_mode(cfg.ensemble));

    std::printf("accuracy        %.4f\n", report.accuracy);
    std::printf("macro_precision %.4f\n", report.macro_precision);
    std::printf("macro_recall    %.4f\n", report.macro_recall);
    std::printf("macro_f1        %.4f\n", report.macro_f1);
    std::printf("q_error_maxabs  %.4f\n", report.q_error_maxabs);
    if (!cfg.report.empty()) {
        save_report(report, cfg.report);
        std::printf("wrote %s\n", cfg.report.c_str());
    }
    return 0;
}

int cmd_inspect_noise(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle_checked(cfg.dataset);
    auto model = load_model_checked(bundle, cfg.checkpoint);
    Tensor q_est = estimated_q(*model, bundle.source_x);
    auto [maxabs, frobenius] = q_error(q_est, bundle.true_q);
    print_matrix("estimated_Q", q_est);
    print_matrix("true_Q", bundle.true_q);
    std::printf("q_error: max-abs %.6f, frobenius %.6f\n", maxabs, frobenius);
    return 0;
}

struct Variant {
    std::string name;
    void (*apply)(TrainConfig&);
};

const std::vector<Variant> kVariants = {
    {"full", [](TrainConfig&) {}},
    {"source-only",
     [](TrainConfig& tc) {
         tc.alpha = 0.0;
         tc.eta = 0.0;
         tc.uniform_lambda = true;
     }},
    {"no-domain", [](TrainConfig& tc) { tc.alpha = 0.0; }},
    {"no-diversity", [](TrainConfig& tc) { tc.eta = 0.0; }},
    {"no-transfer-weight", [](TrainConfig& tc) { tc.uniform_lambda = true; }},
    {"no-noise-layer", [](TrainConfig& tc) { tc.noise_mode = NoiseMode::identity; }},
};

const Variant& find_variant(const std::string& name) {
    for (const Variant& v : kVariants)
        if (v.name == name) return v;
    std::string valid;
    for (const Variant& v : kVariants) valid += (valid.empty() ? "" : ", ") + v.name;
    throw std::invalid_argument("unknown variant '" + name + "' (valid: " + valid + ", all)");
}

int cmd_ablate(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle_checked(cfg.dataset);

    std::vector<std::string> variants = cfg.variants;
    if (variants.size() == 1 && variants[0] == "all") {
        variants.clear();
        for (const Variant& v : kVariants) variants.push_back(v.name);
    }
    auto axis = [](const std::vector<std::string>& list, const std::string& fallback) {
        return list.empty() ? std::vector<std::string>{fallback} : list;
    };
    std::vector<std::string> wms = axis(cfg.weight_metrics, cfg.weight_metric);
    std::vector<std::string> dms = axis(cfg.diversity_metrics, cfg.diversity_metric);
    std::vector<std::string> dls = axis(cfg.domain_losses, cfg.domain_loss);
    std::vector<std::string> ens = axis(cfg.ensembles, cfg.ensemble);
    std::vector<std::uint64_t> seeds = cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.seeds;
    if (variants.empty() || seeds.empty())
        throw std::invalid_argument("ablate: the variant x axis x seed grid is empty");
    for (const std::string& name : variants) find_variant(name);

    std::filesystem::create_directories(cfg.out);
    echo_config(cfg, cfg.out + "/config.txt", true);
    std::string table_path = cfg.out + "/ablation.csv";
    std::FILE* table = std::fopen(table_path.c_str(), "w");
    if (!table) throw std::runtime_error("cannot write " + table_path);
    std::fprintf(table,
                 "variant,weight_metric,diversity_metric,domain_loss,ensemble,seed,"
                 "accuracy,macro_precision,macro_recall,macro_f1,q_error_maxabs,q_error_frobenius\n");

    int cell = 0;
    const int total = static_cast<int>(variants.size() * wms.size() * dms.size() * dls.size() * ens.size() *
                                       seeds.size());
    for (const std::string& variant : variants)
        for (const std::string& wm : wms)
            for (const std::string& dm : dms)
                for (const std::string& dl : dls)
                    for (const std::string& en : ens)
                        for (std::uint64_t seed : seeds) {
                            RunConfig cell_cfg = cfg;
                            cell_cfg.weight_metric = wm;
                            cell_cfg.diversity_metric = dm;
                            cell_cfg.domain_loss = dl;
                            cell_cfg.ensemble = en;
                            cell_cfg.seed = seed;
                            TrainConfig tc = train_config(cell_cfg);
                            find_variant(variant).apply(tc);
                            tc.validate();

                            auto model = CollaborativeModel::make_default(bundle.dim, bundle.k, seed);
                            train(*model, bundle, tc);
                            MetricsReport r = evaluate(*model, bundle, tc.ensemble);

                            std::fprintf(table, "%s,%s,%s,%s,%s,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                                         variant.c_str(), wm.c_str(), dm.c_str(), dl.c_str(), en.c_str(),
                                         static_cast<unsigned long long>(seed), r.accuracy, r.macro_precision,
                                         r.macro_recall, r.macro_f1, r.q_error_maxabs, r.q_error_frobenius);
                            std::fflush(table);
                            ++cell;
                            std::printf("[%d/%d] %s %s/%s/%s/%s seed %llu: accuracy %.4f\n", cell, total,
                                        variant.c_str(), wm.c_str(), dm.c_str(), dl.c_str(), en.c_str(),
                                        static_cast<unsigned long long>(seed), r.accuracy);
                        }
    std::fclose(table);
    std::printf("wrote %s\n", table_path.c_str());
    return 0;
}

void add_data_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--k", cfg.k, "number of classes")->check(CLI::Range(2, 64));
    cmd->add_option("--dim", cfg.dim, "input dimension")->check(CLI::Range(2, 4096));
    cmd->add_option("--per-class", cfg.per_class, "samples per class per split")->check(CLI::PositiveNumber);
    cmd->add_option("--rot", cfg.rot, "target rotation in degrees");
    cmd->add_option("--trans", cfg.trans, "target translation vector");
    cmd->add_option("--scale", cfg.scale, "target scale factor")->check(CLI::PositiveNumber);
    cmd->add_option("--spread", cfg.spread, "cluster standard deviation")->check(CLI::PositiveNumber);
    cmd->add_option("--noise", cfg.noise, "source label corruption rate")
        ->check(CLI::Range(0.0, 1.0).description("FLOAT in [0, 1)"));
    cmd->add_option("--imbalance", cfg.imbalance, "per-class subsampling probability")
        ->check(CLI::Range(0.0, 1.0));
}

void add_train_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--alpha", cfg.alpha, "domain loss weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--eta", cfg.eta, "diversity loss weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--gamma", cfg.gamma, "focal loss focusing exponent")->check(CLI::NonNegativeNumber);
    cmd->add_option("--eps-init", cfg.eps_init, "noise layer prior corruption rate");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", cfg.batch_size, "samples per domain per step")->check(CLI::PositiveNumber);
    cmd->add_option("--steps", cfg.steps, "optimization steps")->check(CLI::PositiveNumber);
    cmd->add_option("--log-every", cfg.log_every, "steps between curve points")->check(CLI::PositiveNumber);
    cmd->add_flag("--uniform-lambda", cfg.uniform_lambda, "freeze transfer weights at 1");
    cmd->add_option("--weight-metric", cfg.weight_metric, "transfer weight metric (cosine, l1, l2)");
    cmd->add_option("--diversity-metric", cfg.diversity_metric, "diversity metric (js, kl, l1, l2, cos)");
    cmd->add_option("--domain-loss", cfg.domain_loss, "domain loss kind (least_squares, gan)");
    cmd->add_option("--ensemble", cfg.ensemble, "inference ensemble (average, maximum)");
    cmd->add_option("--noise-mode", cfg.noise_mode, "noise layer mode (adaptive, identity)");
}

void add_seed_flag(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--seed", cfg.seed, "master seed (env fallback COUDA_SEED)")->envname("COUDA_SEED");
}

void wire_gen(CLI::App& cmd, RunConfig& cfg) {
    add_data_flags(&cmd, cfg);
    add_seed_flag(&cmd, cfg);
    cmd.add_option("-o,--out", cfg.out, "output dataset file (default dataset.csv)");
}

void wire_train(CLI::App& cmd, RunConfig& cfg) {
    add_train_flags(&cmd, cfg);
    add_seed_flag(&cmd, cfg);
    cmd.add_option("--dataset", cfg.dataset, "input dataset file")->required();
    cmd.add_option("--checkpoint", cfg.checkpoint, "checkpoint path (default <out>/checkpoint.txt)");
    cmd.add_option("--curves", cfg.curves, "curve log path (default <out>/curves.csv)");
    cmd.add_option("-o,--out", cfg.out, "output directory");
}

void wire_eval(CLI::App& cmd, RunConfig& cfg) {
    cmd.add_option("--dataset", cfg.dataset, "input dataset file")->required();
    cmd.add_option("--checkpoint", cfg.checkpoint, "trained checkpoint")->required();
    cmd.add_option("--ensemble", cfg.ensemble, "inference ensemble (average, maximum)");
    cmd.add_option("--report", cfg.report, "also write the full report CSV here");
}

void wire_ablate(CLI::App& cmd, RunConfig& cfg) {
    add_train_flags(&cmd, cfg);
    add_seed_flag(&cmd, cfg);
    cmd.add_option("--dataset", cfg.dataset, "input dataset file")->required();
    cmd.add_option("-o,--out", cfg.out, "output directory");
    cmd.add_option("--variants", cfg.variants,
                   "component rows: full, source-only, no-domain, no-diversity, no-transfer-weight, "
                   "no-noise-layer, or all");
    cmd.add_option("--weight-metrics", cfg.weight_metrics, "transfer weight metric axis");
    cmd.add_option("--diversity-metrics", cfg.diversity_metrics, "diversity metric axis");
    cmd.add_option("--domain-losses", cfg.domain_losses, "domain loss axis");
    cmd.add_option("--ensembles", cfg.ensembles, "ensemble axis");
    cmd.add_option("--seeds", cfg.seeds, "seed list (default: --seed)");
}

void wire_inspect(CLI::App& cmd, RunConfig& cfg) {
    cmd.add_option("--dataset", cfg.dataset, "input dataset file")->required();
    cmd.add_option("--checkpoint", cfg.checkpoint, "trained checkpoint")->required();
}

// Each command parses as its own top-level CLI::App: CLI11 only resolves
// config files, env fallbacks, and required-option checks on the app
// parse() is called on, so nesting these as subcommands would skip all
// three for every command-specific flag.
struct Command {
    const char* name;
    const char* blurb;
    const char* default_out;
    void (*wire)(CLI::App&, RunConfig&);
    int (*run)(const RunConfig&);
};

const Command kCommands[] = {
    {"gen-data", "generate a corrupted two-domain dataset", "dataset.csv", wire_gen, cmd_gen_data},
    {"train", "train a model on a dataset", "couda-run", wire_train, cmd_train},
    {"eval", "score a checkpoint on the target test split", "", wire_eval, cmd_eval},
    {"ablate", "train and score a grid of variants", "couda-ablation", wire_ablate, cmd_ablate},
    {"inspect-noise-matrix", "print estimated and true corruption matrices", "", wire_inspect,
     cmd_inspect_noise},
};

void print_usage(std::FILE* out) {
    std::fprintf(out, "usage: couda <command> [options]\n\ncommands:\n");
    for (const Command& c : kCommands) std::fprintf(out, "  %-21s %s\n", c.name, c.blurb);
    std::fprintf(out, "\nrun 'couda <command> --help' for that command's options\n");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        print_usage(stderr);
        return 2;
    }
    std::string name = argv[1];
    if (name == "-h" || name == "--help") {
        print_usage(stdout);
        return 0;
    }
    const Command* command = nullptr;
    for (const Command& c : kCommands)
        if (name == c.name) command = &c;
    if (!command) {
        std::fprintf(stderr, "unknown command '%s'\n\n", name.c_str());
        print_usage(stderr);
        return 2;
    }

    RunConfig cfg;
    CLI::App app{command->blurb, std::string("couda ") + command->name};
    command->wire(app, cfg);
    app.set_config("--config", "", "flat key = value config file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    try {
        app.parse(argc - 1, argv + 1);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (cfg.out.empty()) cfg.out = command->default_out;
    try {
        return command->run(cfg);
    } catch (const NumericalFailure& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
