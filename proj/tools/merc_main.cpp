// Command-line front end: synthetic data generation, training, evaluation,
// gradient checking, module/modality ablations and the alpha sweep.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "merc/train.hpp"

using namespace merc;

namespace {

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> grid;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            grid.push_back(std::stod(tok));
        } catch (...) {
            throw ConfigError("bad grid value '" + tok + "'");
        }
    }
    if (grid.empty()) throw ConfigError("empty alpha grid");
    return grid;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << text;
    if (!f) throw DataError("failed writing: " + path);
}

TrainConfig load_cfg_or_default(const std::string& path) {
    if (path.empty()) {
        TrainConfig c;
        c.validate();
        return c;
    }
    return TrainConfig::load(path);
}

template <typename T>
int run_train(const TrainConfig& cfg, const std::string& data_path, const std::string& out_path,
              const std::string& eval_path) {
    Dataset train_set = load_dataset(data_path);
    Dataset eval_set;
    const bool have_eval = !eval_path.empty();
    if (have_eval) eval_set = load_dataset(eval_path);

    Trainer<T> tr(cfg, train_set);
    std::printf("training on %d conversations (%ld utterances), %zu parameters\n", train_set.size(),
                train_set.total_utterances(), tr.params().scalar_count());
    for (int e = 0; e < cfg.epochs; ++e) {
        const double loss = tr.train_epoch(e);
        if (have_eval) {
            Metrics m = tr.evaluate(eval_set);
            std::printf("epoch %d train_loss %.17g eval_accuracy %.17g eval_weighted_f1 %.17g\n", e, loss,
                        m.accuracy, m.weighted_f1);
        } else {
            std::printf("epoch %d train_loss %.17g\n", e, loss);
        }
    }
    tr.params().save_checkpoint(out_path);
    RunMeta meta;
    meta.cfg = cfg;
    meta.speakers = tr.binding().speakers;
    meta.fine_labels = tr.binding().taxonomy.fine_labels;
    meta.alpha = tr.binding().alpha;
    meta.save(meta_path_for(out_path));
    std::printf("checkpoint written to %s\n", out_path.c_str());
    return 0;
}

template <typename T>
int run_eval(const TrainConfig& cfg, const RunMeta& meta, const std::string& ckpt, const std::string& data_path,
             const std::string& report_path, const std::string& dump_graph_path) {
    Dataset ds = load_dataset(data_path);
    ModelBinding b = ModelBinding::from_meta(meta, ds.manifest);
    ParamStore<T> params = ParamStore<T>::load_checkpoint(ckpt);
    std::vector<int> y_true, y_pred;
    bool dumped = false;
    for (const auto& conv : ds.conversations) {
        PreparedConv<T> pc = prepare_conversation<T>(conv, b);
        Tape<T> t;
        ParamBinder<T> P(t, params);
        auto out = forward_model(t, P, pc, cfg, b, false, nullptr);
        if (!dump_graph_path.empty() && !dumped) {
            if (cfg.disable_graph) throw ConfigError("--dump-graph: the graph stage is disabled in this run");
            write_text_file(dump_graph_path, dump_edges(out.graph));
            std::printf("weighted edge list of conversation %s written to %s\n", conv.id.c_str(),
                        dump_graph_path.c_str());
            dumped = true;
        }
        std::vector<int> pred = argmax_rows(t.val(out.fine_probs));
        y_true.insert(y_true.end(), pc.fine_labels.begin(), pc.fine_labels.end());
        y_pred.insert(y_pred.end(), pred.begin(), pred.end());
    }
    Metrics m = compute_metrics(y_true, y_pred, b.taxonomy.n_fine());
    const std::string report = metrics_report_json(m, b.taxonomy.fine_labels);
    if (!report_path.empty()) write_text_file(report_path, report);
    std::printf("accuracy %.17g weighted_f1 %.17g class_score_std %.17g (%ld samples)\n", m.accuracy,
                m.weighted_f1, m.class_score_std, m.total);
    if (!report_path.empty()) std::printf("report written to %s\n", report_path.c_str());
    return 0;
}

int run_gradcheck(const TrainConfig& cfg_in, double tol, double step) {
    if (cfg_in.float_mode != "f64") throw ConfigError("gradcheck requires float_mode f64");
    TrainConfig cfg = cfg_in;
    cfg.drop_rate = 0.0;  // the closure must be deterministic

    SynthConfig sc;
    sc.n_conversations = 2;
    sc.len_lo = 5;
    sc.len_hi = 6;
    sc.n_speakers = 2;
    sc.dims = FeatureDims{10, 8, 6};
    sc.seed = cfg.seed;
    Dataset ds = generate_synthetic(sc);

    ModelBinding b = ModelBinding::from_dataset(cfg, ds);
    ParamStore<double> params = init_params<double>(cfg, b);
    std::vector<PreparedConv<double>> convs;
    for (const auto& c : ds.conversations) convs.push_back(prepare_conversation<double>(c, b));

    ModelGradCheckClosure closure{&convs, &cfg, &b};
    GradCheckReport report = grad_check(closure, params, step, tol);
    std::printf("%-28s %12s %14s %14s\n", "parameter", "max_rel_err", "analytic", "numeric");
    for (const auto& e : report.per_param)
        std::printf("%-28s %12.3e %14.6e %14.6e\n", e.name.c_str(), e.rel_err, e.analytic, e.numeric);
    std::printf("checked %zu parameters (%zu scalars): max relative error %.3e (tol %.1e) -> %s\n",
                report.per_param.size(), params.scalar_count(), report.max_rel_err, tol,
                report.pass ? "PASS" : "FAIL");
    return report.pass ? 0 : 1;
}

std::pair<Dataset, Dataset> train_eval_pair(const TrainConfig& cfg, const std::string& data_path,
                                            const std::string& eval_path) {
    Dataset train_set = load_dataset(data_path);
    if (!eval_path.empty()) return {std::move(train_set), load_dataset(eval_path)};
    return split_train_test(train_set, 0.8, cfg.seed);
}

template <typename T>
int run_ablate_cmd(const TrainConfig& cfg, const std::string& data_path, const std::string& eval_path,
                   const std::string& out_path) {
    auto [train_set, test_set] = train_eval_pair(cfg, data_path, eval_path);
    std::printf("ablation over %d train / %d test conversations\n", train_set.size(), test_set.size());
    auto cells = run_ablation<T>(cfg, train_set, test_set, &std::cout);
    if (!out_path.empty()) {
        std::ostringstream os;
        os << "[\n";
        for (size_t i = 0; i < cells.size(); ++i)
            os << (i ? ",\n" : "") << "  {\"cell\": \"" << cells[i].name << "\", \"weighted_f1\": "
               << format_g17(cells[i].weighted_f1) << ", \"accuracy\": " << format_g17(cells[i].accuracy) << "}";
        os << "\n]\n";
        write_text_file(out_path, os.str());
        std::printf("results written to %s\n", out_path.c_str());
    }
    return 0;
}

template <typename T>
int run_sweep_cmd(const TrainConfig& cfg, const std::string& data_path, const std::string& eval_path,
                  const std::vector<double>& grid, const std::string& out_path) {
    auto [train_set, test_set] = train_eval_pair(cfg, data_path, eval_path);
    auto rows = sweep_alpha<T>(cfg, train_set, test_set, grid, &std::cout);
    if (!out_path.empty()) {
        std::ostringstream os;
        os << "[\n";
        for (size_t i = 0; i < rows.size(); ++i)
            os << (i ? ",\n" : "") << "  {\"alpha\": " << format_shortest(rows[i].first) << ", \"weighted_f1\": "
               << format_g17(rows[i].second.weighted_f1) << ", \"accuracy\": "
               << format_g17(rows[i].second.accuracy) << "}";
        os << "\n]\n";
        write_text_file(out_path, os.str());
        std::printf("results written to %s\n", out_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal conversational emotion recognition: training, evaluation and diagnostics"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, eval_path, ckpt_path, report_path, dump_graph_path;
    std::string grid_str = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    double tol = 1e-4, step = 1e-6;
    int threads = 0;  // 0: take the config value

    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    gen->add_option("--config", config_path, "synthetic-data config (JSON)");
    gen->add_option("--out", out_path, "output dataset path")->required();

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "training config (JSON)");
    train->add_option("--data", data_path, "training dataset")->required();
    train->add_option("--out", ckpt_path, "output checkpoint path")->required();
    train->add_option("--eval", eval_path, "optional held-out dataset scored each epoch");
    train->add_option("--threads", threads, "kernel/batch threads (overrides config)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval->add_option("--data", data_path, "dataset to score")->required();
    eval->add_option("--report", report_path, "metrics report output path");
    eval->add_option("--config", config_path, "config override (defaults to the checkpoint metadata)");
    eval->add_option("--dump-graph", dump_graph_path,
                     "write the first conversation's weighted edge list (src dst relation weight, 1-indexed)");
    eval->add_option("--threads", threads, "kernel threads");

    auto* gc = app.add_subcommand("gradcheck", "verify analytic gradients against central differences");
    gc->add_option("--config", config_path, "model config (JSON); widths are taken from here");
    gc->add_option("--tol", tol, "max relative error tolerated");
    gc->add_option("--step", step, "central difference step");

    auto* abl = app.add_subcommand("ablate", "module and modality ablation grid");
    abl->add_option("--config", config_path, "training config (JSON)");
    abl->add_option("--data", data_path, "dataset (split 80/20 unless --eval is given)")->required();
    abl->add_option("--eval", eval_path, "held-out dataset");
    abl->add_option("--out", out_path, "machine-readable results path");
    abl->add_option("--threads", threads, "kernel/batch threads");

    auto* sweep = app.add_subcommand("sweep-alpha", "train over a grid of coarse-loss weights");
    sweep->add_option("--config", config_path, "training config (JSON)");
    sweep->add_option("--data", data_path, "dataset (split 80/20 unless --eval is given)")->required();
    sweep->add_option("--eval", eval_path, "held-out dataset");
    sweep->add_option("--grid", grid_str, "comma-separated alpha grid");
    sweep->add_option("--out", out_path, "machine-readable results path");
    sweep->add_option("--threads", threads, "kernel/batch threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            SynthConfig sc = config_path.empty() ? SynthConfig{} : load_synth_config(config_path);
            Dataset ds = generate_synthetic(sc);
            save_dataset(out_path, ds);
            std::printf("wrote %d conversations (%ld utterances) to %s\n", ds.size(), ds.total_utterances(),
                        out_path.c_str());
            return 0;
        }

        TrainConfig cfg = load_cfg_or_default(config_path);
        if (threads > 0) cfg.threads = threads;
        kernels::set_max_threads(cfg.threads);

        if (train->parsed()) {
            if (cfg.float_mode == "f32") return run_train<float>(cfg, data_path, ckpt_path, eval_path);
            return run_train<double>(cfg, data_path, ckpt_path, eval_path);
        }
        if (eval->parsed()) {
            RunMeta meta = RunMeta::load(meta_path_for(ckpt_path));
            TrainConfig ecfg = config_path.empty() ? meta.cfg : cfg;
            if (threads > 0) ecfg.threads = threads;
            kernels::set_max_threads(ecfg.threads);
            if (ecfg.float_mode == "f32")
                return run_eval<float>(ecfg, meta, ckpt_path, data_path, report_path, dump_graph_path);
            return run_eval<double>(ecfg, meta, ckpt_path, data_path, report_path, dump_graph_path);
        }
        if (gc->parsed()) return run_gradcheck(cfg, tol, step);
        if (abl->parsed()) {
            if (cfg.float_mode == "f32") return run_ablate_cmd<float>(cfg, data_path, eval_path, out_path);
            return run_ablate_cmd<double>(cfg, data_path, eval_path, out_path);
        }
        if (sweep->parsed()) {
            const std::vector<double> grid = parse_grid(grid_str);
            if (cfg.float_mode == "f32") return run_sweep_cmd<float>(cfg, data_path, eval_path, grid, out_path);
            return run_sweep_cmd<double>(cfg, data_path, eval_path, grid, out_path);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
