#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hsemis/qtest.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

/// One binary decision over two disjoint class sets. Left resolves to
/// output 0, right to output 1.
struct TreeNode {
    std::string id;
    std::vector<int> left_classes;
    std::vector<int> right_classes;
    int depth = 1;
    int left_child = -1;  // index into HierarchyTree::nodes, -1 = leaf side
    int right_child = -1;
    std::shared_ptr<NodeModel> model;

    double weight() const; // ln(depth + 1)
    std::vector<int> all_classes() const;
};

struct HierarchyTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
};

enum class DecomposeMode { KoaFixed, CountBalanced };

/// koa-fixed: root {0,1} vs rest, then lowest-grade-singleton splits; for
/// five classes this is exactly the published tree (root, 2L, 2R, 3 at
/// depths 1,2,2,3). count-balanced: contiguous splits minimizing the
/// sample-count imbalance.
HierarchyTree decompose(int class_count, DecomposeMode mode, const std::vector<long>& per_class_counts);

/// Relabels samples 0/1 by node side; samples outside the node's class
/// union are excluded.
std::vector<Sample> assemble_node_dataset(const TreeNode& node, const std::vector<Sample>& samples);

/// Root-to-leaf traversal with the teacher model; ties route left.
int predict(const HierarchyTree& tree, const Tensor& image);

/// Depth-weighted mean of node accuracies: sum ln(d+1) a / sum ln(d+1).
double aggregate_accuracy(const std::vector<double>& accuracies, const std::vector<int>& depths);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

/// One-vs-rest counts per class.
std::vector<ConfusionCounts> confusion_from_predictions(const std::vector<int>& y_true,
                                                        const std::vector<int>& y_pred,
                                                        int class_count);

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// A single entry is treated as a binary problem; multiple entries are
/// macro-averaged, classes with zero denominators scoring 0.
Metrics compute_metrics(const std::vector<ConfusionCounts>& counts);

struct AdccComponents {
    double avg_drop = 0.0;   // in [0,1)
    double coherency = 1.0;  // in (0,1]
    double complexity = 0.0; // in [0,1)
};

/// 3 * (1/(1-avg_drop) + 1/coherency + 1/(1-complexity))^-1.
double adcc(const AdccComponents& c);

} // namespace hsemis
