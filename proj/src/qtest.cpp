#include "hsemis/qtest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hsemis/adam.hpp"
#include "hsemis/ops.hpp"

namespace hsemis {

namespace {
const int kFilters[BaseNetwork::kBlocks] = {32, 64, 128, 256, 512};
} // namespace

BaseNetwork::BaseNetwork(int channels, Rng& rng) {
    int cin = channels;
    for (int k = 0; k < kBlocks; ++k) {
        fex_conv.emplace_back(3, cin, kFilters[k], 1, 1, rng);
        fex_bn.emplace_back(kFilters[k]);
        cin = kFilters[k];
    }
    fc1024 = Conv2d(1, 512, 1024, 1, 0, rng);
    fc512 = Conv2d(1, 1024, 512, 1, 0, rng);
    projection = Dense(512, 256, rng);
}

Tensor BaseNetwork::base_features(const Tensor& x, bool training) const {
    Tensor h = x;
    for (int k = 0; k < kBlocks; ++k) {
        h = fex_bn[static_cast<std::size_t>(k)].forward(
            relu(fex_conv[static_cast<std::size_t>(k)].forward(h)), training);
        const int sh = h.dim(1), sw = h.dim(2);
        h = (sh >= 2 && sw >= 2) ? maxpool2x2(h) : spatial_mean_keep(h);
    }
    h = relu(fc1024.forward(h));
    h = relu(fc512.forward(h));
    return spatial_mean(h); // [N,512]
}

Tensor BaseNetwork::project(const Tensor& f_base) const { return projection.forward(f_base); }

void BaseNetwork::visit_tensors(const std::string& prefix, const TensorVisitor& fn) {
    for (int k = 0; k < kBlocks; ++k) {
        fex_conv[static_cast<std::size_t>(k)].visit_tensors(
            prefix + "fex" + std::to_string(k + 1) + ".conv.", fn);
        fex_bn[static_cast<std::size_t>(k)].visit_tensors(
            prefix + "fex" + std::to_string(k + 1) + ".bn.", fn);
    }
    fc1024.visit_tensors(prefix + "fc1024.", fn);
    fc512.visit_tensors(prefix + "fc512.", fn);
    projection.visit_tensors(prefix + "projection.", fn);
}

void BaseNetwork::set_requires_grad(bool flag) {
    visit_tensors("", [flag](const std::string&, Tensor& t, bool trainable) {
        if (trainable) t.set_requires_grad(flag);
    });
}

void BaseNetwork::set_buffer_tracking(bool flag) {
    for (auto& bn : fex_bn) bn.update_running = flag;
}

// ---------------------------------------------------------------------------

NodeModel::NodeModel(const QTestConfig& cfg, Rng& rng) : mu(cfg.mu), omega(cfg.omega) {
    Rng student_rng = rng.fork(101);
    Rng teacher_rng = rng.fork(102);
    Rng qcn_rng = rng.fork(103);
    student = BaseNetwork(cfg.channels, student_rng);
    teacher = BaseNetwork(cfg.channels, teacher_rng);
    teacher.set_requires_grad(false);
    teacher.set_buffer_tracking(false);
    circuit = QcnCircuit::make(cfg.qcn_qubits, cfg.qcn_layers, cfg.qcn_wire);
    qcn_angles = init_qcn_angles(circuit, qcn_rng);
}

Tensor node_forward(const NodeModel& model, const Tensor& x, Role role, bool training) {
    const BaseNetwork& net = role == Role::Student ? model.student : model.teacher;
    Tensor f_base = net.base_features(x, training);
    Tensor f_t = net.project(f_base);
    Tensor f_norm = l2_tanh_rows(f_t, model.omega);
    return qcn_forward_batch(f_norm, model.qcn_angles, model.circuit);
}

Tensor consistency_loss(const Tensor& teacher_preds, const Tensor& student_preds) {
    if (teacher_preds.shape() != student_preds.shape()) {
        throw ShapeError("consistency_loss: prediction shapes differ: " +
                         shape_str(teacher_preds.shape()) + " vs " + shape_str(student_preds.shape()));
    }
    Tensor d = sub(teacher_preds, student_preds);
    return sum(mul(d, d));
}

void ema_update(NodeModel& model) {
    auto teacher_tensors = model.teacher.named_tensors();
    auto student_tensors = model.student.named_tensors();
    const double mu = model.mu;
    for (std::size_t i = 0; i < teacher_tensors.size(); ++i) {
        auto& tv = teacher_tensors[i].second.raw_values();
        const auto& sv = student_tensors[i].second.values();
        for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = mu * tv[j] + (1.0 - mu) * sv[j];
    }
}

double lambda_at(const QTestConfig& cfg, long step) {
    if (cfg.lambda_schedule == "const") return cfg.lambda_max;
    const double ramp_steps = std::max(1.0, cfg.ramp_fraction * static_cast<double>(cfg.steps));
    const double x = std::min(1.0, static_cast<double>(step) / ramp_steps);
    return cfg.lambda_max * std::exp(-5.0 * (1.0 - x) * (1.0 - x));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

Tensor stack_images(const std::vector<Tensor>& imgs) {
    const int h = imgs[0].dim(0), w = imgs[0].dim(1), c = imgs[0].dim(2);
    std::vector<double> flat;
    flat.reserve(imgs.size() * imgs[0].values().size());
    for (const Tensor& t : imgs) flat.insert(flat.end(), t.values().begin(), t.values().end());
    return Tensor({static_cast<int>(imgs.size()), h, w, c}, std::move(flat));
}

struct ModelSnapshot {
    std::vector<std::vector<double>> values;

    static ModelSnapshot capture(NodeModel& m) {
        ModelSnapshot s;
        for (auto& [name, t] : m.student.named_tensors()) s.values.push_back(t.values());
        for (auto& [name, t] : m.teacher.named_tensors()) s.values.push_back(t.values());
        s.values.push_back(m.qcn_angles.values());
        return s;
    }

    void restore(NodeModel& m) const {
        std::size_t i = 0;
        for (auto& [name, t] : m.student.named_tensors()) t.raw_values() = values[i++];
        for (auto& [name, t] : m.teacher.named_tensors()) t.raw_values() = values[i++];
        m.qcn_angles.raw_values() = values[i++];
    }
};

struct EvalStats {
    double loss;
    double acc;
};

EvalStats evaluate_node(const NodeModel& model, const std::vector<Sample>& samples) {
    NoGradGuard guard;
    std::vector<Tensor> imgs;
    std::vector<int> labels;
    for (const auto& s : samples) {
        imgs.push_back(s.image);
        labels.push_back(s.label);
    }
    Tensor out = node_forward(model, stack_images(imgs), Role::Teacher, false);
    Tensor loss = loss_nll_probs(out, labels);
    int correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double p0 = out.values()[i * 2];
        const int pred = p0 >= 0.5 ? 0 : 1;
        if (pred == labels[i]) ++correct;
    }
    return {loss.item(), static_cast<double>(correct) / static_cast<double>(samples.size())};
}

} // namespace

NodeTrainResult train_node(NodeModel& model, const std::vector<Sample>& labeled,
                           const std::vector<Tensor>& unlabeled, const QTestConfig& cfg) {
    if (labeled.empty()) throw std::invalid_argument("train_node: empty labeled set");
    for (const auto& s : labeled) {
        if (s.label != 0 && s.label != 1) {
            throw std::invalid_argument("train_node: labels must be binary, got " +
                                        std::to_string(s.label));
        }
    }
    Rng rng(cfg.seed);
    Rng split_rng = rng.fork(1);
    Rng order_rng = rng.fork(2);
    Rng aug_rng = rng.fork(3);

    // held-out split for early stopping, one slice per class when possible
    std::vector<int> by_class[2];
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        by_class[labeled[i].label].push_back(static_cast<int>(i));
    }
    std::vector<Sample> train_set, val_set;
    for (auto& idx : by_class) {
        split_rng.shuffle(idx);
        const int hold = idx.size() >= 2
                             ? std::max(1, static_cast<int>(std::lround(cfg.val_fraction *
                                                                        static_cast<double>(idx.size()))))
                             : 0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            (static_cast<int>(j) < hold ? val_set : train_set).push_back(labeled[static_cast<std::size_t>(idx[j])]);
        }
    }
    if (train_set.empty()) train_set = labeled;

    std::vector<Tensor> classical = model.student.parameters();
    Adam opt_classical(classical, cfg.lr, cfg.weight_decay);
    Adam opt_qcn({model.qcn_angles}, cfg.qcn_lr, 0.0);

    std::vector<int> lab_order(train_set.size()), unl_order(unlabeled.size());
    for (std::size_t i = 0; i < lab_order.size(); ++i) lab_order[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < unl_order.size(); ++i) unl_order[i] = static_cast<int>(i);
    order_rng.shuffle(lab_order);
    if (!unl_order.empty()) order_rng.shuffle(unl_order);
    std::size_t lab_cursor = 0, unl_cursor = 0;

    NodeTrainResult result;
    double best_val = 1e300;
    int bad_evals = 0;
    double last_val_acc = 0.0;
    ModelSnapshot best_state = ModelSnapshot::capture(model);
    const bool consistency_on = cfg.lambda_max > 0.0;

    long step = 0;
    for (; step < cfg.steps; ++step) {
        const int bl = std::min<int>(cfg.batch_labeled, static_cast<int>(train_set.size()));
        std::vector<const Sample*> lab_batch;
        for (int b = 0; b < bl; ++b) {
            if (lab_cursor == lab_order.size()) {
                order_rng.shuffle(lab_order);
                lab_cursor = 0;
            }
            lab_batch.push_back(&train_set[static_cast<std::size_t>(lab_order[lab_cursor++])]);
        }
        std::vector<const Tensor*> unl_batch;
        const int bu = std::min<int>(cfg.batch_unlabeled, static_cast<int>(unlabeled.size()));
        for (int b = 0; b < bu; ++b) {
            if (unl_cursor == unl_order.size()) {
                order_rng.shuffle(unl_order);
                unl_cursor = 0;
            }
            unl_batch.push_back(&unlabeled[static_cast<std::size_t>(unl_order[unl_cursor++])]);
        }

        // student view: weak labeled (supervised) ++ strong all (consistency)
        std::vector<Tensor> student_views;
        std::vector<int> labels;
        for (const Sample* s : lab_batch) {
            student_views.push_back(weak_augment(s->image, aug_rng));
            labels.push_back(s->label);
        }
        std::vector<Tensor> teacher_views;
        if (consistency_on) {
            for (const Sample* s : lab_batch)
                student_views.push_back(strong_augment(s->image, aug_rng, cfg.aug_ops));
            for (const Tensor* u : unl_batch)
                student_views.push_back(strong_augment(*u, aug_rng, cfg.aug_ops));
            for (const Sample* s : lab_batch) teacher_views.push_back(weak_augment(s->image, aug_rng));
            for (const Tensor* u : unl_batch) teacher_views.push_back(weak_augment(*u, aug_rng));
        }

        opt_classical.zero_grad();
        opt_qcn.zero_grad();

        Tensor student_out = node_forward(model, stack_images(student_views), Role::Student, true);
        Tensor sup_probs = static_cast<int>(student_views.size()) == bl
                               ? student_out
                               : slice_rows(student_out, 0, bl);
        Tensor sup_loss = loss_nll_probs(sup_probs, labels);

        Tensor total = sup_loss;
        double con_value = 0.0;
        const double lam = lambda_at(cfg, step);
        if (consistency_on) {
            Tensor teacher_out;
            {
                NoGradGuard guard;
                teacher_out = node_forward(model, stack_images(teacher_views), Role::Teacher, true);
            }
            const int n_pairs = static_cast<int>(teacher_views.size());
            Tensor student_tail = slice_rows(student_out, bl, n_pairs);
            Tensor con = consistency_loss(teacher_out, student_tail);
            con_value = con.item();
            total = add(sup_loss, mul_scalar(con, lam));
        }

        total.backward();
        opt_classical.step();
        opt_qcn.step();
        ema_update(model);

        if (!val_set.empty() && (step + 1) % cfg.eval_every == 0) {
            const EvalStats stats = evaluate_node(model, val_set);
            last_val_acc = stats.acc;
            if (stats.loss < best_val - 1e-9) {
                best_val = stats.loss;
                bad_evals = 0;
                best_state = ModelSnapshot::capture(model);
            } else if (++bad_evals >= cfg.patience) {
                result.history.push_back({step, sup_loss.item(), con_value, last_val_acc});
                ++step;
                break;
            }
        }
        result.history.push_back({step, sup_loss.item(), con_value, last_val_acc});
    }

    if (!val_set.empty() && best_val < 1e299) best_state.restore(model);
    model.trained = true;
    result.best_val_loss = best_val < 1e299 ? best_val : 0.0;
    result.steps_run = step;
    return result;
}

std::string node_history_csv(const std::vector<NodeHistoryRow>& rows) {
    std::ostringstream os;
    os << "step,sup_loss,con_loss,val_acc\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.step << ',' << r.sup_loss << ',' << r.con_loss << ',' << r.val_acc << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Flat baseline
// ---------------------------------------------------------------------------

FlatBaseline train_flat_baseline(const std::vector<Sample>& labeled, int class_count,
                                 const QTestConfig& cfg) {
    if (labeled.empty()) throw std::invalid_argument("train_flat_baseline: empty labeled set");
    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(201);
    Rng order_rng = rng.fork(202);
    Rng aug_rng = rng.fork(203);
    Rng split_rng = rng.fork(204);

    FlatBaseline model;
    model.net = BaseNetwork(cfg.channels, init_rng);
    model.classifier = Dense(512, class_count, init_rng);
    model.class_count = class_count;

    // matching held-out split for early stopping
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        by_class[static_cast<std::size_t>(labeled[i].label)].push_back(static_cast<int>(i));
    }
    std::vector<Sample> train_set, val_set;
    for (auto& idx : by_class) {
        split_rng.shuffle(idx);
        const int hold = idx.size() >= 2
                             ? std::max(1, static_cast<int>(std::lround(cfg.val_fraction *
                                                                        static_cast<double>(idx.size()))))
                             : 0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            (static_cast<int>(j) < hold ? val_set : train_set).push_back(labeled[static_cast<std::size_t>(idx[j])]);
        }
    }
    if (train_set.empty()) train_set = labeled;

    std::vector<Tensor> params = model.net.parameters();
    for (Tensor& t : model.classifier.parameters()) params.push_back(t);
    Adam opt(params, cfg.lr, cfg.weight_decay);

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    order_rng.shuffle(order);
    std::size_t cursor = 0;
    const int batch = std::min<int>(cfg.batch_labeled + cfg.batch_unlabeled,
                                    static_cast<int>(train_set.size()));

    double best_val = 1e300;
    int bad_evals = 0;
    std::vector<std::vector<double>> best_state;
    auto capture = [&]() {
        std::vector<std::vector<double>> snap;
        for (auto& [n, t] : model.net.named_tensors()) snap.push_back(t.values());
        for (auto& [n, t] : model.classifier.named_tensors()) snap.push_back(t.values());
        return snap;
    };
    auto restore = [&](const std::vector<std::vector<double>>& snap) {
        std::size_t i = 0;
        for (auto& [n, t] : model.net.named_tensors()) t.raw_values() = snap[i++];
        for (auto& [n, t] : model.classifier.named_tensors()) t.raw_values() = snap[i++];
    };
    best_state = capture();

    for (long step = 0; step < cfg.steps; ++step) {
        std::vector<Tensor> views;
        std::vector<int> labels;
        for (int b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            const Sample& s = train_set[static_cast<std::size_t>(order[cursor++])];
            views.push_back(weak_augment(s.image, aug_rng));
            labels.push_back(s.label);
        }
        opt.zero_grad();
        Tensor logits = model.classifier.forward(model.net.base_features(stack_images(views), true));
        Tensor loss = softmax_ce(logits, labels);
        loss.backward();
        opt.step();

        if (!val_set.empty() && (step + 1) % cfg.eval_every == 0) {
            NoGradGuard guard;
            std::vector<Tensor> vimgs;
            std::vector<int> vlabels;
            for (const auto& s : val_set) {
                vimgs.push_back(s.image);
                vlabels.push_back(s.label);
            }
            Tensor vlogits = model.classifier.forward(model.net.base_features(stack_images(vimgs), false));
            const double vloss = softmax_ce(vlogits, vlabels).item();
            if (vloss < best_val - 1e-9) {
                best_val = vloss;
                bad_evals = 0;
                best_state = capture();
            } else if (++bad_evals >= cfg.patience) {
                break;
            }
        }
    }
    if (!val_set.empty() && best_val < 1e299) restore(best_state);
    return model;
}

int flat_predict(const FlatBaseline& model, const Tensor& image) {
    NoGradGuard guard;
    Tensor batch = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
    Tensor logits = model.classifier.forward(model.net.base_features(batch, false));
    const auto& v = logits.values();
    int best = 0;
    for (int j = 1; j < model.class_count; ++j) {
        if (v[static_cast<std::size_t>(j)] > v[static_cast<std::size_t>(best)]) best = j;
    }
    return best;
}

} // namespace hsemis
