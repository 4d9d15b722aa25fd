#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dscore/dscore.hpp"

namespace fs = std::filesystem;
using namespace dscore;

namespace {

struct Shared {
    std::uint64_t seed = 0;
    std::string data;
    std::string model;
    std::string out;
    std::size_t n = 3;
    double t = 5.0;
    std::size_t threads = 0;
};

struct TrainFlags {
    std::string arch = "tiny";
    std::size_t epochs = 8;
    std::size_t batch = 32;
    float lr = 0.05f;
};

// Files written by the current command; removed again if the command fails.
class OutputSet {
public:
    void add(const fs::path& p) { paths_.push_back(p); }
    void discard() {
        std::error_code ec;
        for (const auto& p : paths_) fs::remove(p, ec);
        paths_.clear();
    }
    void keep() { paths_.clear(); }

private:
    std::vector<fs::path> paths_;
};

OutputSet outputs;

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    outputs.add(path);
    write_text(path, text);
}

void log(const std::string& s) { std::cerr << s << '\n'; }

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

Dataset load_data(const std::string& dir, std::string_view split) {
    if (dir.empty()) throw UsageError("--data DIR is required");
    return load_split(dir, split);
}

Model load_model(const std::string& path) {
    if (path.empty()) throw UsageError("--model FILE is required");
    return load_weights(path);
}

RunConfig run_config(const Shared& sh, const TrainFlags& tf) {
    RunConfig cfg;
    cfg.model = tf.arch;
    cfg.epochs = tf.epochs;
    cfg.batch = tf.batch;
    cfg.lr = tf.lr;
    cfg.seed = sh.seed;
    cfg.n = sh.n;
    cfg.t = sh.t;
    cfg.threads = resolve_threads(sh.threads);
    return cfg;
}

void add_shared(CLI::App* cmd, Shared& sh, bool data, bool model, bool grid) {
    cmd->add_option("--seed", sh.seed, "Run seed");
    cmd->add_option("--out", sh.out, "Output path");
    cmd->add_option("--threads", sh.threads, "Worker threads (0: DSCORE_THREADS or all cores)");
    if (data) cmd->add_option("--data", sh.data, "Dataset directory (IDX files)");
    if (model) cmd->add_option("--model", sh.model, "Weight file (.dsw)");
    if (grid) {
        cmd->add_option("--n", sh.n, "Grid order")->check(CLI::PositiveNumber);
        cmd->add_option("--t", sh.t, "Shrink control for the image transform (>= 1)");
    }
}

void add_train_flags(CLI::App* cmd, TrainFlags& tf) {
    cmd->add_option("--arch", tf.arch, "Preset (mma, mmb, cm, tiny) or a layer stack");
    cmd->add_option("--epochs", tf.epochs, "Training epochs");
    cmd->add_option("--batch", tf.batch, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", tf.lr, "SGD learning rate");
}

std::string epoch_line(const std::string& tag, const EpochStats& s) {
    return tag + "epoch " + std::to_string(s.epoch) + " loss " + fmt(s.loss) + " train_acc " + fmt(s.accuracy);
}

std::string summary(const DiagnosisReport& r) {
    std::ostringstream os;
    os << "accuracy " << fmt(r.original_accuracy) << "  loss " << fmt(r.test_loss) << '\n'
       << "feature distribution (deletion):\n"
       << grid_text(r.feature, r.n) << "transformed-set accuracy:\n"
       << grid_text(r.transform_accuracy, r.n) << "v_fitness " << fmt(r.v_fitness) << "  v_robust " << fmt(r.v_robust)
       << "  g(n) " << fmt(r.g_n) << "  D-Score " << fmt(r.d_score) << "  p " << fmt(r.p) << '\n';
    if (r.feature_fallback) os << "note: no region deletion lowered accuracy; feature distribution is uniform\n";
    return os.str();
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw UsageError("'" + item + "' is not a number");
        }
    }
    return v;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) v.push_back(item);
    return v;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Shared& sh, const std::string& kind, const SyntheticSpec& base) {
    if (sh.out.empty()) throw UsageError("--out DIR is required");
    SyntheticSpec spec = base;
    spec.kind = parse_placement(kind);
    spec.seed = sh.seed;
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                          "t10k-labels-idx1-ubyte", "meta.txt"})
        outputs.add(fs::path(sh.out) / f);
    save_synthetic(sh.out, spec);
    std::cout << "wrote " << spec.n_train << " train / " << spec.n_test << " test " << kind << " images ("
              << spec.size << "x" << spec.size << ", " << spec.classes << " classes) to " << sh.out << '\n';
    return 0;
}

int cmd_train(const Shared& sh, const TrainFlags& tf, const std::string& init) {
    if (sh.out.empty()) throw UsageError("--out FILE is required");
    const Dataset train_set = load_data(sh.data, "train");
    Model model = init.empty() ? build_model(tf.arch, train_set.image_shape(), sh.seed, train_set.classes()) : load_weights(init);
    train_set.validate(model.classes());
    TrainOptions opt;
    opt.epochs = tf.epochs;
    opt.batch = tf.batch;
    opt.lr = tf.lr;
    opt.seed = sh.seed;
    train(model, train_set, opt, [](const EpochStats& s) { log(epoch_line("", s)); });
    outputs.add(sh.out);
    save_weights(model, sh.out);
    std::cout << "model " << model_id(model) << " (" << model.config() << ") -> " << sh.out << '\n';
    return 0;
}

int cmd_eval(const Shared& sh, const std::string& split) {
    const Model model = load_model(sh.model);
    const Dataset d = load_data(sh.data, split);
    d.validate(model.classes());
    const auto r = evaluate_full(model, d, nullptr, resolve_threads(sh.threads));
    std::cout << "split " << split << "  items " << r.total << "  accuracy " << fmt(r.accuracy(), 6) << "  loss "
              << fmt(r.loss, 6) << '\n';
    return 0;
}

int cmd_diagnose(const Shared& sh, const std::string& heatmap, const std::string& dump_dir) {
    if (sh.out.empty()) throw UsageError("--out FILE is required");
    const Model model = load_model(sh.model);
    const Dataset test = load_data(sh.data, "test");
    const auto r = diagnose(model, test, sh.n, sh.t, resolve_threads(sh.threads));
    write_file(sh.out, format_report(r));
    if (!heatmap.empty()) {
        write_file(heatmap + "_feature.csv", heatmap_csv(r.feature, r.n));
        write_file(heatmap + "_feature.pgm", heatmap_pgm(r.feature, r.n));
        write_file(heatmap + "_attention.csv", heatmap_csv(r.attention, r.n));
        write_file(heatmap + "_attention.pgm", heatmap_pgm(r.attention, r.n));
    }
    if (!dump_dir.empty()) {
        for (std::size_t i = 1; i <= r.n * r.n; ++i) {
            const fs::path dir = fs::path(dump_dir) / ("region_" + std::to_string(i));
            const auto [img, lbl] = split_files(dir, "test");
            outputs.add(img);
            outputs.add(lbl);
            save_split(dir, transform_dataset(test, TransformSpec::for_region(r.n, r.t, i)));
        }
    }
    std::cout << summary(r);
    return 0;
}

std::string sweep_table(const std::vector<RunOutcome>& runs) {
    std::ostringstream os;
    os << "p\taccuracy\tv_fitness\tv_robust\td_score\n";
    for (const auto& r : runs)
        os << fmt(r.p) << '\t' << fmt(r.report.original_accuracy) << '\t' << fmt(r.report.v_fitness) << '\t'
           << fmt(r.report.v_robust) << '\t' << fmt(r.report.d_score) << '\n';
    return os.str();
}

int cmd_augment_train(const Shared& sh, const TrainFlags& tf, const std::string& report_path, const std::string& p_list,
                      bool fine_tune) {
    if (sh.out.empty()) throw UsageError("--out DIR is required");
    if (report_path.empty() && p_list.empty()) throw UsageError("augment-train needs --report or --p");
    std::vector<double> ps;
    std::optional<DiagnosisReport> source;
    if (!report_path.empty()) {
        source = read_report(report_path);
        ps.push_back(source->p);
    }
    if (!p_list.empty()) ps = parse_list(p_list);
    for (double p : ps)
        if (!(p >= 0 && p <= 1)) throw UsageError("execution probability " + fmt(p) + " outside [0,1]");

    const Dataset train_set = load_data(sh.data, "train");
    const Dataset test = load_data(sh.data, "test");
    std::optional<Model> start;
    if (fine_tune) start = load_model(sh.model);
    const RunConfig cfg = run_config(sh, tf);
    const fs::path dir = sh.out;
    fs::create_directories(dir);

    std::vector<RunOutcome> runs;
    std::string comparison = source ? "# source report " + report_path + "\n" + format_report(*source) : "";
    for (double p : ps) {
        log("training with p = " + fmt(p));
        auto run = guided_run(cfg, train_set, test, p, start ? &*start : nullptr);
        const std::string tag = "p" + fmt(run.p, 4);
        const fs::path weights = dir / (tag + ".dsw");
        outputs.add(weights);
        save_weights(run.model, weights);
        write_file(dir / (tag + "_report.txt"), format_report(run.report));
        comparison += "# run " + tag + "\n" + format_report(run.report);
        std::cout << "== " << tag << "\n" << summary(run.report);
        runs.push_back(std::move(run));
    }
    write_file(dir / "comparison.txt", comparison);
    const std::string table = sweep_table(runs);
    write_file(dir / "sweep.tsv", table);
    std::cout << '\n' << table;
    return 0;
}

int cmd_compare_aug(const Shared& sh, const TrainFlags& tf, const std::string& methods_text, const std::string& family,
                    const std::string& report_path, double guided_p) {
    auto methods = split_names(methods_text);
    if (methods.empty()) throw UsageError("--methods is empty");
    for (const auto& m : methods) {
        if (m != "none" && m != "guided") parse_baseline(m);
        if (family == "mnist" && m != "none" && m != "rpr" && m != "guided")
            throw UsageError("method '" + m + "' is not used for the mnist family (allowed: none, rpr, guided)");
    }
    if (family != "mnist" && family != "any") throw UsageError("--dataset-family must be mnist or any");
    const Dataset train_set = load_data(sh.data, "train");
    const Dataset test = load_data(sh.data, "test");
    const RunConfig cfg = run_config(sh, tf);

    std::optional<double> p;
    if (guided_p >= 0) p = guided_p;
    else if (!report_path.empty()) p = read_report(report_path).p;

    std::ostringstream table;
    table << "method\tp\tloss\taccuracy\tv_robust\tv_fitness\td_score\ttransform_accuracy\tfeature_distribution\n";
    auto cells = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
        return s;
    };
    std::vector<RunOutcome> done;
    for (const auto& m : methods) {
        log("training with " + m);
        RunOutcome run;
        if (m == "none") {
            run = train_and_diagnose(cfg, train_set, test, {}, m);
        } else if (m == "guided") {
            if (!p) {
                auto none = std::find_if(done.begin(), done.end(), [](const RunOutcome& r) { return r.label == "none"; });
                if (none == done.end())
                    throw UsageError("guided needs --p, --report, or 'none' listed before it to derive p");
                p = none->report.p;
            }
            run = guided_run(cfg, train_set, test, *p);
            run.label = m;
        } else {
            run = train_and_diagnose(cfg, train_set, test, baseline_hook(m), m);
        }
        const auto& r = run.report;
        table << m << '\t' << fmt(run.p) << '\t' << fmt(r.test_loss) << '\t' << fmt(r.original_accuracy) << '\t'
              << fmt(r.v_robust) << '\t' << fmt(r.v_fitness) << '\t' << fmt(r.d_score) << '\t' << cells(r.transform_accuracy)
              << '\t' << cells(r.feature) << '\n';
        done.push_back(std::move(run));
    }
    if (!sh.out.empty()) write_file(sh.out, table.str());
    std::cout << table.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"White-box CNN diagnosis: region deletion, region-targeted transforms, D-Score and guided augmentation"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", std::string(engine_version));

    Shared sh;
    TrainFlags tf;

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic glyph dataset as IDX files");
    add_shared(gen, sh, false, false, false);
    std::string kind = "centered";
    SyntheticSpec spec;
    gen->add_option("--kind", kind, "centered or uniform");
    gen->add_option("--classes", spec.classes, "Glyph classes (2..10)");
    gen->add_option("--n-train", spec.n_train, "Training images");
    gen->add_option("--n-test", spec.n_test, "Test images");
    gen->add_option("--size", spec.size, "Image side in pixels");

    auto* tr = app.add_subcommand("train", "Train a model and write its weights");
    add_shared(tr, sh, true, false, false);
    add_train_flags(tr, tf);
    std::string init;
    tr->add_option("--init", init, "Continue from this weight file instead of a fresh model");

    auto* ev = app.add_subcommand("eval", "Report accuracy and loss of a model");
    add_shared(ev, sh, true, true, false);
    std::string split = "test";
    ev->add_option("--split", split, "train or test");

    auto* dg = app.add_subcommand("diagnose", "Feature/attention distributions and scores");
    add_shared(dg, sh, true, true, true);
    std::string heatmap, dump;
    dg->add_option("--heatmap", heatmap, "Prefix for .csv/.pgm heatmaps");
    dg->add_option("--dump-transformed", dump, "Directory for the transformed test sets (IDX)");

    auto* at = app.add_subcommand("augment-train", "Retrain with score-guided augmentation");
    add_shared(at, sh, true, true, true);
    add_train_flags(at, tf);
    std::string report_path, p_list;
    bool fine_tune = false;
    at->add_option("--report", report_path, "Diagnosis report providing p");
    at->add_option("--p", p_list, "Execution probability or comma-separated sweep");
    at->add_flag("--fine-tune", fine_tune, "Start from --model instead of a fresh initialization");

    auto* ca = app.add_subcommand("compare-aug", "Train once per augmentation method and compare scores");
    add_shared(ca, sh, true, false, true);
    add_train_flags(ca, tf);
    std::string methods = "none,rhf,rvf,rr,rhv,rpr,guided", family = "any", ca_report;
    double ca_p = -1;
    ca->add_option("--methods", methods, "Comma-separated: none rhf rvf rr rhv rpr guided");
    ca->add_option("--dataset-family", family, "any or mnist (mnist allows none, rpr, guided)");
    ca->add_option("--report", ca_report, "Report providing p for guided");
    ca->add_option("--p", ca_p, "Execution probability for guided");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        int rc = 0;
        if (*gen) rc = cmd_gen_data(sh, kind, spec);
        else if (*tr) rc = cmd_train(sh, tf, init);
        else if (*ev) rc = cmd_eval(sh, split);
        else if (*dg) rc = cmd_diagnose(sh, heatmap, dump);
        else if (*at) rc = cmd_augment_train(sh, tf, report_path, p_list, fine_tune);
        else if (*ca) rc = cmd_compare_aug(sh, tf, methods, family, ca_report, ca_p);
        outputs.keep();
        return rc;
    } catch (const Error& e) {
        outputs.discard();
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const fs::filesystem_error& e) {
        outputs.discard();
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    } catch (const std::exception& e) {
        outputs.discard();
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    }
}
