#include "hsemis/pipeline.hpp"

#include <sstream>

#include <json.hpp>

#include "hsemis/dataset.hpp"
#include "hsemis/hstn.hpp"
#include "hsemis/mirec.hpp"
#include "hsemis/sirl.hpp"

namespace hsemis {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string PipelineReport::to_json() const {
    ordered_json j;
    ordered_json nodes;
    for (const auto& [id, acc] : node_accuracies) nodes[id] = acc;
    j["node_accuracies"] = nodes;
    j["agg_accuracy"] = agg_accuracy;
    j["flat_metrics"] = {{"acc", flat_metrics.accuracy},
                         {"pre", flat_metrics.precision},
                         {"rec", flat_metrics.recall},
                         {"f1", flat_metrics.f1}};
    j["baseline_accuracy"] = baseline_accuracy;
    j["discarded_proxy_count"] = discarded_proxy_count;
    j["proxy_count"] = proxy_count;
    j["labeled_count"] = labeled_count;
    j["unlabeled_count"] = unlabeled_count;
    j["test_count"] = test_count;
    j["mirec_initial_l1"] = mirec_initial_l1;
    j["mirec_final_l1"] = mirec_final_l1;
    j["seeds"] = {{"seed", seed}};
    return j.dump(2) + "\n";
}

FeatureExtractor make_extractor(const RunConfig& cfg) {
    if (cfg.sirl_extractor == "pixel") {
        return [](const Tensor& img) { return img.values(); };
    }
    // seeded untrained backbone standing in for a pretrained extractor
    Rng rng = Rng(cfg.seed).fork(77);
    auto net = std::make_shared<BaseNetwork>(1, rng);
    net->set_requires_grad(false);
    return [net](const Tensor& img) {
        NoGradGuard guard;
        Tensor batch = reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)});
        return net->base_features(batch, false).values();
    };
}

PipelineReport run_pipeline(const RunConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    const bool emit = !out_dir.empty();
    if (emit) fs::create_directories(out_dir);

    PipelineReport report;
    report.seed = cfg.seed;
    Rng root_rng(cfg.seed);

    // ---- data -------------------------------------------------------------
    Dataset full = cfg.data_dir.empty() ? synth_dataset(cfg.synth) : load_dataset(cfg.data_dir);
    SplitResult split = split_dataset(full, cfg.label_fraction, cfg.test_fraction,
                                      root_rng.fork(1).next_u64());
    report.labeled_count = static_cast<int>(split.labeled.size());
    report.unlabeled_count = static_cast<int>(split.unlabeled.size());
    report.test_count = static_cast<int>(split.test.size());

    // ---- stage 1: masked reconstruction ------------------------------------
    MirecConfig mirec_cfg = cfg.mirec;
    mirec_cfg.image_size = cfg.synth.image_size;
    mirec_cfg.channels = 1;
    mirec_cfg.seed = root_rng.fork(2).next_u64();
    TrainedMirec mirec = train_mirec(split.unlabeled.images, mirec_cfg);
    if (!mirec.history.empty()) {
        report.mirec_initial_l1 = mirec.history.front().l1;
        report.mirec_final_l1 = mirec.history.back().l1;
    }
    if (emit) write_text_atomic(out_dir / "mirec_loss.csv", mirec_history_csv(mirec.history));

    Rng recon_rng = root_rng.fork(3);
    std::vector<Tensor> reconstructions;
    reconstructions.reserve(split.unlabeled.size());
    for (std::size_t i = 0; i < split.unlabeled.size(); ++i) {
        const MaskPlan plan =
            sample_mask(mirec_cfg.patch_count(), mirec_cfg.mask_ratio, recon_rng.next_u64());
        reconstructions.push_back(reconstruct_image(mirec.generator, split.unlabeled.images[i], plan));
    }
    if (emit) {
        fs::create_directories(out_dir / "recon");
        for (std::size_t i = 0; i < reconstructions.size(); ++i) {
            write_hstn(out_dir / "recon" / (split.unlabeled.ids[i] + ".hstn"), reconstructions[i]);
        }
    }

    // ---- stage 2: proxy labeling -------------------------------------------
    FeatureExtractor extractor = make_extractor(cfg);
    std::vector<std::vector<std::vector<double>>> per_class(
        static_cast<std::size_t>(cfg.synth.class_count));
    for (std::size_t i = 0; i < split.labeled.size(); ++i) {
        per_class[static_cast<std::size_t>(split.labeled.labels[i])].push_back(
            extractor(split.labeled.images[i]));
    }
    Rng lib_rng = root_rng.fork(4);
    TemplateLibrary lib = build_template_library(per_class, cfg.sirl_samples_per_class, lib_rng);
    if (emit) {
        std::vector<double> flat;
        for (const auto& t : lib.templates) flat.insert(flat.end(), t.begin(), t.end());
        write_hstn(out_dir / "templates.hstn", Tensor({lib.class_count, lib.dim}, std::move(flat)));
    }

    LabelingResult labeling =
        label_reconstructed_set(reconstructions, extractor, lib, cfg.sirl_tau, cfg.sirl_alpha);
    report.discarded_proxy_count = labeling.discarded;
    report.proxy_count = static_cast<int>(labeling.labeled.size());
    if (emit) {
        std::ostringstream csv;
        csv << "sample_id,label,score\n";
        csv.precision(10);
        for (const auto& s : labeling.labeled) {
            csv << split.unlabeled.ids[static_cast<std::size_t>(s.index)] << ',' << s.label << ','
                << s.score << '\n';
        }
        write_text_atomic(out_dir / "proxy_labels.csv", csv.str());
    }

    // ---- stage 3: hierarchical nodes ---------------------------------------
    std::vector<long> labeled_counts(static_cast<std::size_t>(cfg.synth.class_count), 0);
    for (int g : split.labeled.labels) ++labeled_counts[static_cast<std::size_t>(g)];
    HierarchyTree tree =
        decompose(cfg.synth.class_count,
                  cfg.him_mode == "koa-fixed" ? DecomposeMode::KoaFixed : DecomposeMode::CountBalanced,
                  labeled_counts);

    std::vector<Sample> labeled_samples;
    for (std::size_t i = 0; i < split.labeled.size(); ++i) {
        labeled_samples.push_back({split.labeled.images[i], split.labeled.labels[i]});
    }
    std::vector<Sample> proxy_samples;
    for (const auto& s : labeling.labeled) {
        proxy_samples.push_back({reconstructions[static_cast<std::size_t>(s.index)], s.label});
    }

    QTestConfig node_cfg = cfg.qtest;
    node_cfg.image_size = cfg.synth.image_size;
    node_cfg.channels = 1;
    std::vector<double> node_acc;
    std::vector<int> node_depths;
    for (std::size_t ni = 0; ni < tree.nodes.size(); ++ni) {
        TreeNode& node = tree.nodes[ni];
        std::vector<Sample> node_labeled = assemble_node_dataset(node, labeled_samples);
        const std::vector<Sample> node_proxy = assemble_node_dataset(node, proxy_samples);
        node_labeled.insert(node_labeled.end(), node_proxy.begin(), node_proxy.end());

        node_cfg.seed = root_rng.fork(100 + ni).next_u64();
        Rng node_rng = root_rng.fork(200 + ni);
        node.model = std::make_shared<NodeModel>(node_cfg, node_rng);
        NodeTrainResult tr = train_node(*node.model, node_labeled, split.unlabeled.images, node_cfg);
        if (emit) {
            write_text_atomic(out_dir / ("node_" + node.id + "_history.csv"),
                              node_history_csv(tr.history));
        }

        // node accuracy on the test samples inside its class union
        std::vector<Sample> test_samples;
        for (std::size_t i = 0; i < split.test.size(); ++i) {
            test_samples.push_back({split.test.images[i], split.test.labels[i]});
        }
        const std::vector<Sample> node_test = assemble_node_dataset(node, test_samples);
        int correct = 0;
        for (const Sample& s : node_test) {
            NoGradGuard guard;
            Tensor batch = reshape(s.image, {1, s.image.dim(0), s.image.dim(1), s.image.dim(2)});
            Tensor probs = node_forward(*node.model, batch, Role::Teacher, false);
            const int pred = probs.values()[0] >= probs.values()[1] ? 0 : 1;
            if (pred == s.label) ++correct;
        }
        const double acc =
            node_test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(node_test.size());
        report.node_accuracies[node.id] = acc;
        node_acc.push_back(acc);
        node_depths.push_back(node.depth);
    }
    report.agg_accuracy = aggregate_accuracy(node_acc, node_depths);

    // flat traversal metrics over the whole test set
    std::vector<int> y_true, y_pred;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        y_true.push_back(split.test.labels[i]);
        y_pred.push_back(predict(tree, split.test.images[i]));
    }
    report.flat_metrics =
        compute_metrics(confusion_from_predictions(y_true, y_pred, cfg.synth.class_count));

    // ---- flat supervised baseline ------------------------------------------
    if (cfg.run_baseline) {
        QTestConfig base_cfg = node_cfg;
        base_cfg.seed = root_rng.fork(500).next_u64();
        if (cfg.baseline_steps > 0) base_cfg.steps = cfg.baseline_steps;
        FlatBaseline baseline = train_flat_baseline(labeled_samples, cfg.synth.class_count, base_cfg);
        int correct = 0;
        for (std::size_t i = 0; i < split.test.size(); ++i) {
            if (flat_predict(baseline, split.test.images[i]) == split.test.labels[i]) ++correct;
        }
        report.baseline_accuracy =
            static_cast<double>(correct) / static_cast<double>(split.test.size());
    }

    if (emit) write_text_atomic(out_dir / "report.json", report.to_json());
    return report;
}

} // namespace hsemis
