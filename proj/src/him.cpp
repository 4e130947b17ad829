#include "hsemis/him.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsemis/ops.hpp"

namespace hsemis {

double TreeNode::weight() const { return std::log(static_cast<double>(depth) + 1.0); }

std::vector<int> TreeNode::all_classes() const {
    std::vector<int> out = left_classes;
    out.insert(out.end(), right_classes.begin(), right_classes.end());
    return out;
}

namespace {

// Recursive builder shared by both modes; `split` picks the boundary inside
// an ordered class range [lo, hi).
template <typename SplitFn>
int build_subtree(HierarchyTree& tree, const std::vector<int>& classes, int depth,
                  const std::string& id, const SplitFn& split) {
    const int at = split(classes, depth);
    TreeNode node;
    node.id = id;
    node.depth = depth;
    node.left_classes.assign(classes.begin(), classes.begin() + at);
    node.right_classes.assign(classes.begin() + at, classes.end());
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);
    if (node.left_classes.size() > 1) {
        const int child =
            build_subtree(tree, node.left_classes, depth + 1, id == "root" ? "2L" : id + ".L", split);
        tree.nodes[static_cast<std::size_t>(index)].left_child = child;
    }
    if (node.right_classes.size() > 1) {
        const int child =
            build_subtree(tree, node.right_classes, depth + 1, id == "root" ? "2R" : id + ".R", split);
        tree.nodes[static_cast<std::size_t>(index)].right_child = child;
    }
    return index;
}

} // namespace

HierarchyTree decompose(int class_count, DecomposeMode mode,
                        const std::vector<long>& per_class_counts) {
    if (class_count < 2) throw std::invalid_argument("decompose: need at least 2 classes");
    std::vector<int> classes(static_cast<std::size_t>(class_count));
    std::iota(classes.begin(), classes.end(), 0);

    HierarchyTree tree;
    if (mode == DecomposeMode::KoaFixed) {
        auto split = [](const std::vector<int>& cls, int depth) -> int {
            if (depth == 1 && cls.size() > 2) return 2; // severity grouping at the root
            return 1;                                   // peel the lowest grade
        };
        build_subtree(tree, classes, 1, "root", split);
    } else {
        if (static_cast<int>(per_class_counts.size()) != class_count) {
            throw std::invalid_argument("decompose: per-class counts required for count-balanced mode");
        }
        auto split = [&per_class_counts](const std::vector<int>& cls, int) -> int {
            long best_diff = -1;
            int best_at = 1;
            for (int at = 1; at < static_cast<int>(cls.size()); ++at) {
                long left = 0, right = 0;
                for (int i = 0; i < static_cast<int>(cls.size()); ++i) {
                    const long n = per_class_counts[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])];
                    (i < at ? left : right) += n;
                }
                const long diff = std::labs(left - right);
                if (best_diff < 0 || diff < best_diff) {
                    best_diff = diff;
                    best_at = at;
                }
            }
            return best_at;
        };
        build_subtree(tree, classes, 1, "root", split);
    }

    // the five-class severity tree carries the published node names
    if (mode == DecomposeMode::KoaFixed && class_count == 5) {
        for (auto& node : tree.nodes) {
            if (node.id == "2R.R") node.id = "3";
        }
    }
    return tree;
}

std::vector<Sample> assemble_node_dataset(const TreeNode& node, const std::vector<Sample>& samples) {
    std::vector<Sample> out;
    for (const Sample& s : samples) {
        const bool left = std::find(node.left_classes.begin(), node.left_classes.end(), s.label) !=
                          node.left_classes.end();
        const bool right = std::find(node.right_classes.begin(), node.right_classes.end(), s.label) !=
                           node.right_classes.end();
        if (!left && !right) continue;
        out.push_back({s.image, left ? 0 : 1});
    }
    return out;
}

int predict(const HierarchyTree& tree, const Tensor& image) {
    if (tree.nodes.empty()) throw StateError("predict: empty tree");
    NoGradGuard guard;
    Tensor batch = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
    int at = 0;
    for (;;) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
        if (!node.model || !node.model->trained) {
            throw StateError("predict: node " + node.id + " is untrained");
        }
        Tensor probs = node_forward(*node.model, batch, Role::Teacher, false);
        const bool go_left = probs.values()[0] >= probs.values()[1];
        if (go_left) {
            if (node.left_child < 0) return node.left_classes.front();
            at = node.left_child;
        } else {
            if (node.right_child < 0) return node.right_classes.front();
            at = node.right_child;
        }
    }
}

double aggregate_accuracy(const std::vector<double>& accuracies, const std::vector<int>& depths) {
    if (accuracies.empty() || accuracies.size() != depths.size()) {
        throw std::invalid_argument("aggregate_accuracy: empty or mismatched node list");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < accuracies.size(); ++i) {
        const double w = std::log(static_cast<double>(depths[i]) + 1.0);
        num += w * accuracies[i];
        den += w;
    }
    return num / den;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::vector<ConfusionCounts> confusion_from_predictions(const std::vector<int>& y_true,
                                                        const std::vector<int>& y_pred,
                                                        int class_count) {
    if (y_true.size() != y_pred.size()) {
        throw std::invalid_argument("confusion: label/prediction size mismatch");
    }
    if (y_true.empty()) throw std::invalid_argument("confusion: no samples");
    std::vector<ConfusionCounts> counts(static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        for (int c = 0; c < class_count; ++c) {
            auto& cc = counts[static_cast<std::size_t>(c)];
            const bool truth = y_true[i] == c;
            const bool pred = y_pred[i] == c;
            if (truth && pred) ++cc.tp;
            else if (!truth && pred) ++cc.fp;
            else if (truth && !pred) ++cc.fn;
            else ++cc.tn;
        }
    }
    return counts;
}

Metrics compute_metrics(const std::vector<ConfusionCounts>& counts) {
    if (counts.empty()) throw std::invalid_argument("compute_metrics: no classes");
    const long total = counts[0].tp + counts[0].fp + counts[0].tn + counts[0].fn;
    if (total == 0) throw std::invalid_argument("compute_metrics: no samples");

    Metrics m;
    long correct = 0;
    for (const auto& c : counts) {
        const double pre = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
        const double rec = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
        const double f1 = (pre + rec) > 0.0 ? 2.0 * pre * rec / (pre + rec) : 0.0;
        m.precision += pre;
        m.recall += rec;
        m.f1 += f1;
        correct += c.tp;
    }
    const double inv_c = 1.0 / static_cast<double>(counts.size());
    m.precision *= inv_c;
    m.recall *= inv_c;
    m.f1 *= inv_c;
    m.accuracy = counts.size() == 1
                     ? static_cast<double>(counts[0].tp + counts[0].tn) / static_cast<double>(total)
                     : static_cast<double>(correct) / static_cast<double>(total);
    return m;
}

double adcc(const AdccComponents& c) {
    if (c.avg_drop >= 1.0 || c.coherency <= 0.0 || c.complexity >= 1.0) {
        throw std::invalid_argument("adcc: component outside its domain");
    }
    return 3.0 / (1.0 / (1.0 - c.avg_drop) + 1.0 / c.coherency + 1.0 / (1.0 - c.complexity));
}

} // namespace hsemis
