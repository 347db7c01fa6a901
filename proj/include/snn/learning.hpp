#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "snn/dataset.hpp"
#include "snn/network.hpp"

namespace snn {

enum class GradientMode { TT, TR };

/// Per-layer parameter gradients plus (optionally) the input gradient.
/// Shapes mirror LayerParams; dv entries are empty tensors for non-REC
/// layers, dx is empty unless requested.
struct GradientSet {
    std::vector<Tensor> dw;
    std::vector<Tensor> dv;
    Tensor dx;
};

struct LossResult {
    float loss;
    Tensor grad_logits;  // softmax(z) - onehot(label)
};

/// Softmax cross-entropy on the readout (spike counts or logits).
LossResult loss_cross_entropy(const Tensor& logits, int label);

/// Attack-time replacement of backward transport matrices (the random-matrix
/// ablation). Entry i, when active, replaces layer i's transport matrix
/// (w^T under BP, g^T under FA); entry 0 also covers the transport onto the
/// input. Matrices share layer i's weight shape.
struct TransportOverride {
    std::vector<Tensor> matrices;
    std::vector<Tensor> matrices_t;  // fc layers: pre-transposed copies
    std::vector<bool> active;

    static TransportOverride none(std::size_t n_layers);
    void set(std::size_t layer, Tensor matrix, LayerKind kind);
    bool any() const;
};

/// Gradients through time: error is injected per step (the spike-count
/// readout makes every step's output error equal to grad_logits), propagated
/// across layers by the rule's transport (w^T for BP, the frozen g^T for FA,
/// direct g^T projection of the output error for DFA, per-step local losses
/// for LE), and backward through the within-layer temporal pathways (leak,
/// subtractive reset, recurrent drive) for all rules. The input gradient
/// always flows through the first layer's weights.
GradientSet backward_tt(const NetworkModel& model, const UnrollCache& cache,
                        const Tensor& grad_logits, int label, Rule rule,
                        bool want_input_grad, bool want_param_grads = true,
                        const TransportOverride* override_t = nullptr);

/// Firing rates and time-averaged membrane potentials distilled from a
/// completed forward pass; all backward_tr needs.
struct RateCache {
    int T = 1;
    Tensor input;
    std::vector<Tensor> rate;       // mean_t s[t]
    std::vector<Tensor> mean_u;     // mean_t u[t]
    std::vector<Tensor> rate_prev;  // mean_t s[t-1] (s[-1] = 0)
};
RateCache make_rate_cache(const UnrollCache& cache);

/// Gradients through rate: one spatial sweep over firing rates with the
/// surrogate evaluated at the time-averaged membrane potential and
/// spike-to-rate coupling taken as identity. Exactly equal to backward_tt
/// when T == 1. Spiking models only.
GradientSet backward_tr(const NetworkModel& model, const RateCache& rates,
                        const Tensor& grad_logits, int label, Rule rule,
                        bool want_input_grad, bool want_param_grads = true);

/// Adaptive-moment optimizer state (bias-corrected). Feedback tensors are
/// not part of the parameter list and are never touched.
struct OptimState {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    long step = 0;
    std::vector<Tensor> m_w, v_w, m_v, v_v;
};
OptimState make_optimizer(const NetworkModel& model, float lr);
void optimizer_step(NetworkModel& model, const GradientSet& grads, OptimState& opt);

struct TrainOptions {
    float lr = 1e-4f;
    int batch_size = 8;
    int epochs = 1;
    int subset = 0;       // 0 = whole training set
    int eval_subset = 1000;  // 0 = whole test set
    std::uint64_t data_seed = 1;
    std::ostream* csv = nullptr;       // per-epoch log, schema in train()
    bool csv_header = true;
    std::ostream* progress = nullptr;  // human-readable per-epoch lines
};

struct EpochStats {
    int epoch;
    double train_loss;
    double eval_accuracy;  // percent
    double wall_seconds;
};

/// Minibatch training under the model's own rule (gradients through time).
/// Deterministic given (model seed, data_seed): identical reruns produce
/// bit-identical parameters. Throws TrainingError when the loss diverges.
std::vector<EpochStats> train(NetworkModel& model, const LabeledDataset& train_set,
                              const LabeledDataset& test_set, const TrainOptions& opts);

/// Accuracy (percent) over the first `subset` samples (0 = all).
double evaluate_accuracy(const NetworkModel& model, const LabeledDataset& data, int subset = 0);

}  // namespace snn
