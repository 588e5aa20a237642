#include "loraflow/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "loraflow/dataset.hpp"
#include "loraflow/eval.hpp"
#include "loraflow/flow.hpp"
#include "loraflow/kernels.hpp"
#include "loraflow/train.hpp"

namespace loraflow::cli {

namespace {

// Flat key=value config overlay: each entry becomes --key=value unless the
// command line already carries --key, so flags always win.
std::vector<std::string> apply_config_overlay(std::vector<std::string> args) {
    size_t pos = args.size();
    std::string file;
    for (size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            file = args[i + 1];
            args.erase(args.begin() + i, args.begin() + i + 2);
            pos = i;
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            file = args[i].substr(9);
            args.erase(args.begin() + i);
            pos = i;
            break;
        }
    }
    if (file.empty()) return args;

    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot open config file: " + file);
    std::set<std::string> present;
    for (const std::string& a : args) {
        const size_t eq = a.find('=');
        present.insert(eq == std::string::npos ? a : a.substr(0, eq));
    }
    std::string line;
    while (std::getline(is, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        if (present.count("--" + key)) continue;
        args.insert(args.begin() + pos, "--" + key + "=" + value);
        ++pos;
    }
    return args;
}

// Relative data paths resolve under $LORAFLOW_DATA_DIR when it is set.
std::string resolve_path(const std::string& p) {
    if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
    const char* dir = std::getenv("LORAFLOW_DATA_DIR");
    if (!dir || !*dir) return p;
    return (std::filesystem::path(dir) / p).string();
}

std::vector<ChirpDirection> parse_directions(const std::string& s) {
    if (s == "both") return {ChirpDirection::Up, ChirpDirection::Down};
    return {direction_from_string(s)};
}

void add_model_flags(CLI::App* cmd, ModelConfig& m) {
    cmd->add_option("--width", m.width, "Model channel width")->capture_default_str();
    cmd->add_option("--depth", m.depth, "Transformer block count")->capture_default_str();
    cmd->add_option("--heads", m.heads, "Attention heads")->capture_default_str();
    cmd->add_option("--ff-mult", m.ff_mult, "Feedforward width multiplier")
        ->capture_default_str();
    cmd->add_option("--fourier-dim", m.fourier_dim, "Fourier feature count for t")
        ->capture_default_str();
    cmd->add_option("--sf-max", m.sf_max, "Largest supported SF (classifier size 2^sf_max)")
        ->capture_default_str();
}

struct GenDataOpts {
    std::vector<int> sf{7};
    double bw = 125000.0;
    std::string direction = "up";
    std::string out = "data.iq";
};

int cmd_gen_data(const GenDataOpts& o) {
    for (int sf : o.sf) {
        for (ChirpDirection dir : parse_directions(o.direction)) {
            const ChirpDirection one[] = {dir};
            const auto recs = generate_synthetic({sf}, o.bw, one);
            std::string path = resolve_path(o.out);
            const bool multi =
                o.sf.size() > 1 || parse_directions(o.direction).size() > 1;
            if (multi) {
                const auto dot = path.rfind('.');
                const std::string stem = dot == std::string::npos ? path : path.substr(0, dot);
                const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
                path = stem + "_sf" + std::to_string(sf) + "_" + to_string(dir) + ext;
            }
            save_dataset(path, recs, o.bw);
            std::cout << "wrote " << recs.size() << " records to " << path << "\n";
        }
    }
    return 0;
}

struct InitOpts {
    ModelConfig model;
    uint64_t seed = 0;
    std::string out = "checkpoint.bin";
};

int cmd_init(const InitOpts& o) {
    ParamStore store;
    init_params(o.model, store, o.seed);
    TrainMeta meta;
    meta.seed = o.seed;
    save_checkpoint(resolve_path(o.out), o.model, store, meta);
    std::cout << "initialized " << store.total_params() << " parameters -> "
              << resolve_path(o.out) << "\n";
    return 0;
}

struct TrainOpts {
    TrainConfig cfg;
    std::string direction = "up";
    int64_t batch = 0;  // 0: derived from the per-SF schedule
    std::vector<std::string> real_files;
    std::string out = "checkpoint.bin";
    std::string resume;
    std::string log;
};

int cmd_train(TrainOpts o) {
    o.cfg.directions = parse_directions(o.direction);
    if (o.batch > 0)
        for (int sf : o.cfg.sf_list) o.cfg.batch_override[sf] = o.batch;
    if (o.cfg.model.sf_max < *std::max_element(o.cfg.sf_list.begin(), o.cfg.sf_list.end()))
        o.cfg.model.sf_max = *std::max_element(o.cfg.sf_list.begin(), o.cfg.sf_list.end());

    PhaseSources src;
    src.synthetic = generate_synthetic(o.cfg.sf_list, o.cfg.bw,
                                       std::span<const ChirpDirection>(o.cfg.directions));
    for (const std::string& f : o.real_files) {
        const auto recs = load_real(resolve_path(f));
        src.real.insert(src.real.end(), recs.begin(), recs.end());
    }

    const PhaseResult res = run_phase(o.cfg, src, resolve_path(o.out),
                                      o.log.empty() ? "" : resolve_path(o.log),
                                      o.resume.empty() ? "" : resolve_path(o.resume));
    std::cout << "phase " << o.cfg.phase << " done at step " << res.checkpoint.meta.step
              << " -> " << resolve_path(o.out) << "\n";
    if (o.cfg.phase == "finetune")
        std::cout << "mixture real fraction " << res.mixture_real_fraction << "\n";
    return 0;
}

struct DemodOpts {
    std::string file;
};

int cmd_demod(const DemodOpts& o) {
    const auto recs = load_dataset(resolve_path(o.file), SampleSource::Synthetic);
    std::vector<int64_t> truth, pred;
    for (const SampleRecord& r : recs) {
        const LoRaParams params{r.sf, 125000.0, r.direction};
        const int64_t m = dechirp_demod(params, r.iq).symbol;
        std::cout << m << "\n";
        truth.push_back(r.label);
        pred.push_back(m);
    }
    std::cerr << "ser " << symbol_error_rate(truth, pred) << " over " << recs.size()
              << " records\n";
    return 0;
}

struct DenoiseOpts {
    std::string in;
    std::string checkpoint;
    std::string out = "denoised.iq";
    double snr_db = -20.0;
    int64_t nfe = 16;
};

int cmd_denoise(const DenoiseOpts& o) {
    Checkpoint ck = load_checkpoint(resolve_path(o.checkpoint));
    auto recs = load_dataset(resolve_path(o.in), SampleSource::Real);
    const VelocityField field = [&](const IqBuffer& x, double t, const CondVector& c) {
        return forward(ck.config, ck.store, x, t, c, false).velocity;
    };
    double bw = 125000.0;
    for (SampleRecord& r : recs) {
        const FlowState start = insert_received(r.iq, o.snr_db);
        r.iq = euler_sample(field, start, o.nfe, CondVector::zeros());
    }
    save_dataset(resolve_path(o.out), recs, bw);
    std::cout << "denoised " << recs.size() << " records at " << o.snr_db << " dB with nfe "
              << o.nfe << " -> " << resolve_path(o.out) << "\n";
    return 0;
}

struct SweepOpts {
    SweepGrid grid;
    std::string checkpoint = "none";
    bool oracle = false;
    double snr_start = -40.0, snr_stop = -10.0, snr_step = 2.5;
    std::vector<double> snrs;  // explicit list overrides the range
    std::string out = "report.json";
    std::string format = "json";
    int workers = 0;
};

int cmd_sweep(SweepOpts o) {
    if (o.workers > 0) kernels::set_threads(o.workers);
    if (!o.snrs.empty()) {
        o.grid.snr_db = o.snrs;
    } else {
        o.grid.snr_db.clear();
        for (double s = o.snr_start; s <= o.snr_stop + 1e-9; s += o.snr_step)
            o.grid.snr_db.push_back(s);
    }
    std::unique_ptr<DenoiseBackend> backend;
    if (o.oracle) {
        backend = std::make_unique<OracleBackend>();
    } else {
        if (o.checkpoint.empty() || o.checkpoint == "none")
            throw std::runtime_error("sweep requires --checkpoint <file> or --oracle");
        backend = std::make_unique<ModelBackend>(load_checkpoint(resolve_path(o.checkpoint)));
    }
    const AdvantageReport report = run_denoised(*backend, o.grid);
    emit_report(report, resolve_path(o.out), report_format_from_string(o.format));
    for (const auto& [sf, a] : report.auc)
        std::cout << "sf " << sf << " auc " << a << "\n";
    std::cout << report.rows.size() << " grid points -> " << resolve_path(o.out) << "\n";
    return 0;
}

struct ReportOpts {
    std::string in;
    std::string out = "report.csv";
    std::string format = "csv";
};

int cmd_report(const ReportOpts& o) {
    AdvantageReport report;
    try {
        report = parse_report_json(resolve_path(o.in));
    } catch (const std::exception&) {
        report = parse_report_csv(resolve_path(o.in));
    }
    emit_report(report, resolve_path(o.out), report_format_from_string(o.format));
    std::cout << "converted " << report.rows.size() << " rows -> " << resolve_path(o.out)
              << "\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"LoRaFlow: LoRa chirp modem with a rectified-flow signal denoiser",
                 "loraflow"};
    app.require_subcommand(1);

    GenDataOpts gd;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic chirp dataset");
    gen->add_option("--sf", gd.sf, "Spreading factors")->delimiter(',')->capture_default_str();
    gen->add_option("--bw", gd.bw, "Bandwidth in Hz")->capture_default_str();
    gen->add_option("--direction", gd.direction, "up|down|both")->capture_default_str();
    gen->add_option("--out", gd.out, "Output dataset path")->capture_default_str();

    InitOpts in;
    CLI::App* init = app.add_subcommand("init", "Write a freshly initialized checkpoint");
    add_model_flags(init, in.model);
    init->add_option("--seed", in.seed, "Initialization seed")->capture_default_str();
    init->add_option("--out", in.out, "Checkpoint path")->capture_default_str();

    TrainOpts tr;
    CLI::App* train = app.add_subcommand("train", "Train the denoiser");
    add_model_flags(train, tr.cfg.model);
    train->add_option("--phase", tr.cfg.phase, "synthetic|finetune")->capture_default_str();
    train->add_option("--sf", tr.cfg.sf_list, "Spreading factors")->delimiter(',')->capture_default_str();
    train->add_option("--direction", tr.direction, "up|down|both")->capture_default_str();
    train->add_option("--bw", tr.cfg.bw, "Bandwidth in Hz")->capture_default_str();
    train->add_option("--updates", tr.cfg.updates, "Optimizer updates")->capture_default_str();
    train->add_option("--batch", tr.batch, "Batch size override (0 = per-SF schedule)")
        ->capture_default_str();
    train->add_option("--batch-divisor", tr.cfg.batch_divisor,
                      "Desk-scale divisor for the per-SF batch schedule")
        ->capture_default_str();
    train->add_option("--lr", tr.cfg.lr, "Peak learning rate")->capture_default_str();
    train->add_option("--warmup", tr.cfg.warmup_steps, "Linear warmup steps")
        ->capture_default_str();
    train->add_option("--seed", tr.cfg.seed, "Training seed")->capture_default_str();
    train->add_option("--lambda1", tr.cfg.weights.lambda1, "FFT loss weight")
        ->capture_default_str();
    train->add_option("--lambda2", tr.cfg.weights.lambda2, "STFT loss weight")
        ->capture_default_str();
    train->add_option("--lambda3", tr.cfg.weights.lambda3, "Classifier loss weight")
        ->capture_default_str();
    train->add_option("--alpha", tr.cfg.weights.alpha, "Logit regularization coefficient")
        ->capture_default_str();
    train->add_option("--aug-prob", tr.cfg.aug_base_prob, "Per-augmentation base probability")
        ->capture_default_str();
    train->add_option("--dropout-prob", tr.cfg.cond_dropout_prob,
                      "Condition vector dropout probability")
        ->capture_default_str();
    train->add_option("--p-real", tr.cfg.p_real, "Real-sample probability while finetuning")
        ->capture_default_str();
    train->add_option("--real", tr.real_files, "Real dataset file(s) for finetuning");
    train->add_option("--out", tr.out, "Checkpoint output path")->capture_default_str();
    train->add_option("--resume", tr.resume, "Resume from this checkpoint");
    train->add_option("--log", tr.log, "JSONL training log path");
    train->add_option("--checkpoint-every", tr.cfg.checkpoint_every,
                      "Checkpoint interval in steps (0 = end only)")
        ->capture_default_str();

    DemodOpts dm;
    CLI::App* demod = app.add_subcommand("demod", "Baseline dechirp of a dataset file");
    demod->add_option("file", dm.file, "Dataset path")->required();

    DenoiseOpts dn;
    CLI::App* denoise =
        app.add_subcommand("denoise", "Reconstruct noisy records with the flow model");
    denoise->add_option("--in", dn.in, "Input dataset path")->required();
    denoise->add_option("--checkpoint", dn.checkpoint, "Model checkpoint")->required();
    denoise->add_option("--snr", dn.snr_db, "SNR of the input records in dB")
        ->capture_default_str();
    denoise->add_option("--nfe", dn.nfe, "Velocity-field evaluations per record")
        ->capture_default_str();
    denoise->add_option("--out", dn.out, "Output dataset path")->capture_default_str();

    SweepOpts sw;
    CLI::App* sweep = app.add_subcommand("sweep", "Baseline vs denoised accuracy sweep");
    sweep->add_option("--checkpoint", sw.checkpoint, "Model checkpoint ('none' with --oracle)")
        ->capture_default_str();
    sweep->add_flag("--oracle", sw.oracle, "Use the ground-truth velocity field");
    sweep->add_option("--sf", sw.grid.sf_list, "Spreading factors")->delimiter(',')->capture_default_str();
    sweep->add_option("--bw", sw.grid.bw, "Bandwidth in Hz")->capture_default_str();
    sweep->add_option("--snr-start", sw.snr_start, "Sweep start in dB")->capture_default_str();
    sweep->add_option("--snr-stop", sw.snr_stop, "Sweep stop in dB")->capture_default_str();
    sweep->add_option("--snr-step", sw.snr_step, "Sweep step in dB")->capture_default_str();
    sweep->add_option("--snr", sw.snrs, "Explicit SNR list (overrides the range)")->delimiter(',');
    sweep->add_option("--nfe", sw.grid.nfe, "NFE values")->delimiter(',')->capture_default_str();
    sweep->add_option("--trials", sw.grid.trials, "Monte Carlo trials per point")
        ->capture_default_str();
    sweep->add_option("--seed", sw.grid.seed, "Sweep seed")->capture_default_str();
    sweep->add_option("--out", sw.out, "Report output path")->capture_default_str();
    sweep->add_option("--format", sw.format, "csv|json|dat")->capture_default_str();
    sweep->add_option("--workers", sw.workers, "Compute threads (0 = library default)")
        ->capture_default_str();

    ReportOpts rp;
    CLI::App* report = app.add_subcommand("report", "Convert a report between formats");
    report->add_option("--in", rp.in, "Input report (json or csv)")->required();
    report->add_option("--out", rp.out, "Output path")->capture_default_str();
    report->add_option("--format", rp.format, "csv|json|dat")->capture_default_str();

    std::string config_file;
    for (CLI::App* sub : app.get_subcommands({}))
        sub->add_option("--config", config_file,
                        "Flat key=value config file; command-line flags win");

    std::vector<std::string> args(argv, argv + argc);
    try {
        args = apply_config_overlay(std::move(args));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::vector<const char*> cargs;
    cargs.reserve(args.size());
    for (const std::string& a : args) cargs.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd);
        if (init->parsed()) return cmd_init(in);
        if (train->parsed()) return cmd_train(tr);
        if (demod->parsed()) return cmd_demod(dm);
        if (denoise->parsed()) return cmd_denoise(dn);
        if (sweep->parsed()) return cmd_sweep(sw);
        if (report->parsed()) return cmd_report(rp);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace loraflow::cli
