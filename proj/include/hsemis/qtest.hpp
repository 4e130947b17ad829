#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsemis/augment.hpp"
#include "hsemis/nn.hpp"
#include "hsemis/qcn.hpp"
#include "hsemis/tensor.hpp"

namespace hsemis {

struct Sample {
    Tensor image;
    int label = 0;
};

struct QTestConfig {
    int image_size = 32;
    int channels = 1;
    double omega = 8.0;
    int qcn_qubits = 8;
    int qcn_layers = 3;
    int qcn_wire = -1; // -1 = last active qubit after pooling
    double mu = 0.99;

    int steps = 400;
    int batch_labeled = 4;
    int batch_unlabeled = 4;
    double lr = 3e-4;
    double weight_decay = 3e-4;
    double qcn_lr = 1e-3;
    std::string lambda_schedule = "ramp"; // ramp | const
    double lambda_max = 1.0;
    double ramp_fraction = 0.2;
    int eval_every = 20;
    int patience = 10;
    double val_fraction = 0.25;
    int aug_ops = 2;
    std::uint64_t seed = 42;
};

/// Five FeX blocks (conv 3x3 -> ReLU -> batch norm -> 2x2 max pool, filter
/// counts 32..512), per-position FC_1024 / FC_512, global average pooling
/// to the 512-d base vector, and the 512->256 projection.
struct BaseNetwork : Module {
    static constexpr int kBlocks = 5;

    std::vector<Conv2d> fex_conv;
    std::vector<BatchNorm2d> fex_bn;
    Conv2d fc1024, fc512;
    Dense projection;

    BaseNetwork() = default;
    BaseNetwork(int channels, Rng& rng);

    /// F_base: [N,H,W,C] -> [N,512]. Blocks whose input is already 1x1
    /// replace the max pool with adaptive average pooling.
    Tensor base_features(const Tensor& x, bool training) const;
    /// F_t = W F_base + b: [N,512] -> [N,256].
    Tensor project(const Tensor& f_base) const;

    void visit_tensors(const std::string& prefix, const TensorVisitor& fn) override;
    void set_requires_grad(bool flag);
    void set_buffer_tracking(bool flag);
};

enum class Role { Student, Teacher };

/// Teacher-student pair over one shared quantum head. The teacher tracks the
/// student by EMA of the base-network tensors only.
struct NodeModel {
    BaseNetwork student;
    BaseNetwork teacher;
    Tensor qcn_angles; // shared between both roles
    QcnCircuit circuit;
    double mu = 0.99;
    double omega = 8.0;
    bool trained = false;

    NodeModel() = default;
    NodeModel(const QTestConfig& cfg, Rng& rng);
};

/// base -> project -> L2-tanh normalize -> quantum head: [N,2] probabilities.
Tensor node_forward(const NodeModel& model, const Tensor& x, Role role, bool training);

/// Sum over samples of squared L2 prediction distance.
Tensor consistency_loss(const Tensor& teacher_preds, const Tensor& student_preds);

/// teacher <- mu*teacher + (1-mu)*student over base-network tensors
/// (parameters and running statistics); the shared QCN stays untouched.
void ema_update(NodeModel& model);

double lambda_at(const QTestConfig& cfg, long step);

struct NodeHistoryRow {
    long step;
    double sup_loss;
    double con_loss;
    double val_acc;
};

struct NodeTrainResult {
    std::vector<NodeHistoryRow> history;
    double best_val_loss = 0.0;
    long steps_run = 0;
};

/// Semi-supervised training of one binary node: 4 labeled + 4 unlabeled per
/// step, weak views for the teacher, strong views for the student, Adam on
/// classical parameters, parameter-shift gradients on the quantum angles,
/// EMA after every step, early stopping on held-out loss.
NodeTrainResult train_node(NodeModel& model, const std::vector<Sample>& labeled,
                           const std::vector<Tensor>& unlabeled, const QTestConfig& cfg);

std::string node_history_csv(const std::vector<NodeHistoryRow>& rows);

/// Plain supervised multi-class model on the same backbone (no hierarchy,
/// no quantum head); the comparison baseline for the pipeline.
struct FlatBaseline {
    BaseNetwork net;
    Dense classifier; // 512 -> C
    int class_count = 0;
};

FlatBaseline train_flat_baseline(const std::vector<Sample>& labeled, int class_count,
                                 const QTestConfig& cfg);

int flat_predict(const FlatBaseline& model, const Tensor& image);

} // namespace hsemis
