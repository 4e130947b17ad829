#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsemis/config.hpp"
#include "hsemis/dataset.hpp"
#include "hsemis/hstn.hpp"
#include "hsemis/mirec.hpp"
#include "hsemis/pipeline.hpp"
#include "hsemis/sirl.hpp"

namespace fs = std::filesystem;
using namespace hsemis;

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric fault.
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kNumericExit = 4;

RunConfig load_config(const std::string& config_path, std::uint64_t seed, bool seed_given) {
    RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(config_path);
    if (seed_given) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

std::vector<std::pair<std::string, Tensor>> generator_tensors(ReconstructionGenerator& gen) {
    std::vector<std::pair<std::string, Tensor>> out;
    gen.visit_tensors("gen.", [&](const std::string& name, Tensor& t, bool) {
        out.emplace_back(name, t);
    });
    return out;
}

int cmd_synth(const RunConfig& cfg, const std::string& out) {
    Dataset ds = synth_dataset(cfg.synth);
    save_dataset(out, ds);
    std::cout << "wrote " << ds.size() << " samples to " << out << "\n";
    return 0;
}

int cmd_split(const RunConfig& cfg, const std::string& data, const std::string& out) {
    Dataset ds = load_dataset(data);
    SplitResult split = split_dataset(ds, cfg.label_fraction, cfg.test_fraction, cfg.seed);
    save_dataset(fs::path(out) / "labeled", split.labeled);
    save_dataset(fs::path(out) / "unlabeled", split.unlabeled);
    save_dataset(fs::path(out) / "test", split.test);
    std::cout << "labeled " << split.labeled.size() << ", unlabeled " << split.unlabeled.size()
              << ", test " << split.test.size() << "\n";
    return 0;
}

int cmd_mirec_train(RunConfig cfg, const std::string& data, const std::string& out) {
    Dataset ds = load_dataset(data);
    MirecConfig mc = cfg.mirec;
    mc.image_size = ds.images.front().dim(0);
    mc.channels = ds.images.front().dim(2);
    mc.seed = cfg.seed;
    TrainedMirec trained = train_mirec(ds.images, mc);
    save_checkpoint(out, generator_tensors(trained.generator),
                    {{"image_size", std::to_string(mc.image_size)},
                     {"channels", std::to_string(mc.channels)},
                     {"patch", std::to_string(mc.patch)},
                     {"seed", std::to_string(mc.seed)}});
    write_text_atomic(fs::path(out) / "loss.csv", mirec_history_csv(trained.history));
    std::cout << "final l1 " << trained.history.back().l1 << " (from " << trained.history.front().l1
              << ") over " << trained.history.size() << " steps\n";
    return 0;
}

int cmd_reconstruct(RunConfig cfg, const std::string& ckpt, const std::string& data,
                    const std::string& out) {
    Dataset ds = load_dataset(data);
    MirecConfig mc = cfg.mirec;
    for (const auto& [k, v] : read_checkpoint_meta(ckpt)) {
        if (k == "image_size") mc.image_size = std::stoi(v);
        if (k == "channels") mc.channels = std::stoi(v);
        if (k == "patch") mc.patch = std::stoi(v);
    }
    Rng dummy(0);
    ReconstructionGenerator gen(mc, dummy);
    load_checkpoint(ckpt, generator_tensors(gen));

    Rng mask_rng(cfg.seed);
    fs::create_directories(out);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const MaskPlan plan = sample_mask(mc.patch_count(), mc.mask_ratio, mask_rng.next_u64());
        write_hstn(fs::path(out) / (ds.ids[i] + ".hstn"), reconstruct_image(gen, ds.images[i], plan));
    }
    std::cout << "reconstructed " << ds.size() << " images into " << out << "\n";
    return 0;
}

int cmd_sirl_label(const RunConfig& cfg, const std::string& templates, const std::string& recon,
                   double tau, double alpha, const std::string& out) {
    Tensor tmpl = read_hstn(templates);
    if (tmpl.rank() != 2) throw DataError("sirl-label: templates must be a [C,d] tensor");
    TemplateLibrary lib;
    lib.class_count = tmpl.dim(0);
    lib.dim = tmpl.dim(1);
    for (int c = 0; c < lib.class_count; ++c) {
        lib.templates.emplace_back(tmpl.values().begin() + static_cast<std::int64_t>(c) * lib.dim,
                                   tmpl.values().begin() + static_cast<std::int64_t>(c + 1) * lib.dim);
    }
    auto items = load_tensor_dir(recon);
    std::vector<Tensor> images;
    for (auto& [id, t] : items) images.push_back(t);
    FeatureExtractor extractor = make_extractor(cfg);
    LabelingResult res = label_reconstructed_set(images, extractor, lib, tau, alpha);
    std::ostringstream csv;
    csv << "sample_id,label,score\n";
    csv.precision(10);
    for (const auto& s : res.labeled) {
        csv << items[static_cast<std::size_t>(s.index)].first << ',' << s.label << ',' << s.score << '\n';
    }
    write_text_atomic(out, csv.str());
    std::cout << "labeled " << res.labeled.size() << ", discarded " << res.discarded << "\n";
    return 0;
}

int cmd_train_node(RunConfig cfg, const std::string& labeled_dir, const std::string& unlabeled_dir,
                   double mu, const std::string& schedule, const std::string& out) {
    cfg.qtest.mu = mu;
    cfg.qtest.lambda_schedule = schedule;
    cfg.qtest.seed = cfg.seed;
    Dataset labeled = load_dataset(labeled_dir);
    cfg.qtest.image_size = labeled.images.front().dim(0);
    cfg.qtest.channels = labeled.images.front().dim(2);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        samples.push_back({labeled.images[i], labeled.labels[i]});
    }
    std::vector<Tensor> unlabeled;
    if (!unlabeled_dir.empty()) {
        for (auto& [id, t] : load_tensor_dir(unlabeled_dir)) unlabeled.push_back(t);
    }
    Rng rng(cfg.seed);
    NodeModel model(cfg.qtest, rng);
    NodeTrainResult res = train_node(model, samples, unlabeled, cfg.qtest);

    std::vector<std::pair<std::string, Tensor>> tensors;
    model.student.visit_tensors("student.", [&](const std::string& n, Tensor& t, bool) {
        tensors.emplace_back(n, t);
    });
    model.teacher.visit_tensors("teacher.", [&](const std::string& n, Tensor& t, bool) {
        tensors.emplace_back(n, t);
    });
    tensors.emplace_back("qcn_angles", model.qcn_angles);
    save_checkpoint(out, tensors, {{"seed", std::to_string(cfg.seed)}});
    write_text_atomic(fs::path(out) / "history.csv", node_history_csv(res.history));
    std::cout << "trained " << res.steps_run << " steps, best held-out loss " << res.best_val_loss
              << "\n";
    return 0;
}

int cmd_run(const RunConfig& cfg, const std::string& out) {
    const fs::path out_path(out);
    fs::create_directories(out_path.parent_path().empty() ? "." : out_path.parent_path().string());
    const fs::path artifacts = out_path.parent_path() / (out_path.stem().string() + "_artifacts");
    PipelineReport report = run_pipeline(cfg, artifacts);
    write_text_atomic(out_path, report.to_json());
    std::cout << report.to_json();
    return 0;
}

int cmd_eval(const std::string& pred_csv, const std::string& labels_csv, const std::string& adcc_arg,
             const std::string& out) {
    auto read_csv = [](const std::string& path) {
        std::ifstream is(path);
        if (!is) throw DataError("eval: cannot open " + path);
        std::map<std::string, int> rows;
        std::string line;
        bool header = true;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (header && line.find("id") == 0) {
                header = false;
                continue;
            }
            header = false;
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw DataError("eval: malformed row: " + line);
            rows[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
        }
        return rows;
    };
    auto truth = read_csv(labels_csv);
    auto preds = read_csv(pred_csv);
    std::vector<int> y_true, y_pred;
    int class_count = 0;
    for (const auto& [id, label] : truth) {
        auto it = preds.find(id);
        if (it == preds.end()) throw DataError("eval: no prediction for sample " + id);
        y_true.push_back(label);
        y_pred.push_back(it->second);
        class_count = std::max({class_count, label + 1, it->second + 1});
    }
    Metrics m = compute_metrics(confusion_from_predictions(y_true, y_pred, class_count));
    nlohmann::ordered_json j;
    j["flat_metrics"] = {{"acc", m.accuracy}, {"pre", m.precision}, {"rec", m.recall}, {"f1", m.f1}};
    if (!adcc_arg.empty()) {
        AdccComponents c;
        std::stringstream ss(adcc_arg);
        std::string item;
        std::vector<double> vals;
        while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
        if (vals.size() != 3) throw ConfigError("eval: --adcc expects avg_drop,coherency,complexity");
        c.avg_drop = vals[0];
        c.coherency = vals[1];
        c.complexity = vals[2];
        j["adcc"] = adcc(c);
    }
    const std::string text = j.dump(2) + "\n";
    if (!out.empty()) write_text_atomic(out, text);
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"H-SemiS: hierarchical semi-supervised severity grading on synthetic data"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 42;
    bool seed_given = false;
    app.add_option("--config", config_path, "flat key=value config file")->expected(1);
    app.add_option("--seed", seed, "run seed")->each([&](const std::string&) { seed_given = true; });

    std::string out = "out";
    std::string data, ckpt, templates, recon, labeled_dir, unlabeled_dir, pred_csv, labels_csv, adcc_arg;
    double tau = 0.80, alpha = 0.5, mask_ratio = 0.75, gen_alpha = 1.0, mu = 0.99;
    int steps = -1;
    std::string schedule = "ramp";

    auto* synth = app.add_subcommand("synth", "generate the synthetic graded dataset");
    synth->add_option("--out", out)->required();

    auto* split = app.add_subcommand("split", "stratified labeled/unlabeled/test split");
    split->add_option("--data", data)->required();
    split->add_option("--out", out)->required();

    auto* mirec_train = app.add_subcommand("mirec-train", "train the masked-reconstruction stage");
    mirec_train->add_option("--data", data)->required();
    mirec_train->add_option("--mask-ratio", mask_ratio);
    mirec_train->add_option("--alpha", gen_alpha);
    mirec_train->add_option("--steps", steps);
    mirec_train->add_option("--out", out)->required();

    auto* reconstruct = app.add_subcommand("reconstruct", "write reconstructions for a dataset");
    reconstruct->add_option("--ckpt", ckpt)->required();
    reconstruct->add_option("--data", data)->required();
    reconstruct->add_option("--out", out)->required();

    auto* sirl = app.add_subcommand("sirl-label", "assign proxy labels to reconstructions");
    sirl->add_option("--templates", templates)->required();
    sirl->add_option("--recon", recon)->required();
    sirl->add_option("--tau", tau);
    sirl->add_option("--alpha", alpha);
    sirl->add_option("--out", out)->required();

    auto* train_node_cmd = app.add_subcommand("train-node", "train one binary teacher-student node");
    train_node_cmd->add_option("--labeled", labeled_dir)->required();
    train_node_cmd->add_option("--unlabeled", unlabeled_dir);
    train_node_cmd->add_option("--mu", mu);
    train_node_cmd->add_option("--lambda-schedule", schedule);
    train_node_cmd->add_option("--out", out)->required();

    auto* run = app.add_subcommand("run", "full pipeline: reconstruct, label, train, evaluate");
    run->add_option("--out", out)->required();

    auto* eval = app.add_subcommand("eval", "metrics from prediction/label CSVs");
    eval->add_option("--pred", pred_csv)->required();
    eval->add_option("--labels", labels_csv)->required();
    eval->add_option("--adcc", adcc_arg, "avg_drop,coherency,complexity triple");
    eval->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_config(config_path, seed, seed_given);
        if (synth->parsed()) return cmd_synth(cfg, out);
        if (split->parsed()) return cmd_split(cfg, data, out);
        if (mirec_train->parsed()) {
            cfg.mirec.mask_ratio = mask_ratio;
            cfg.mirec.alpha = gen_alpha;
            if (steps > 0) cfg.mirec.steps = steps;
            cfg.validate();
            return cmd_mirec_train(cfg, data, out);
        }
        if (reconstruct->parsed()) return cmd_reconstruct(cfg, ckpt, data, out);
        if (sirl->parsed()) return cmd_sirl_label(cfg, templates, recon, tau, alpha, out);
        if (train_node_cmd->parsed())
            return cmd_train_node(cfg, labeled_dir, unlabeled_dir, mu, schedule, out);
        if (run->parsed()) return cmd_run(cfg, out);
        if (eval->parsed()) return cmd_eval(pred_csv, labels_csv, adcc_arg, out == "out" ? "" : out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigExit;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigExit;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataExit;
    } catch (const NumericFault& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return kNumericExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
