#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snn/lif.hpp"
#include "snn/tensor.hpp"

namespace snn {

enum class LayerKind { Conv, Fc };
enum class NeuronKind { FF, REC, Relu };
enum class Rule { BP, FA, DFA, LE };
enum class Mode { Spiking, Analog };
enum class DatasetKind { Mnist, Cifar10 };

/// Forward activation flavor. Binary is the production spike function;
/// Smooth replaces it with the surrogate's primitive so the network becomes
/// differentiable end to end for gradient checking. The backward pass is
/// identical for both (it always evaluates the surrogate on cached
/// potentials).
enum class ActivationKind { Binary, Smooth };

const char* to_string(Rule r);
const char* to_string(Mode m);
const char* to_string(NeuronKind n);
const char* to_string(DatasetKind d);
Rule rule_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);
NeuronKind neuron_from_string(const std::string& s);
DatasetKind dataset_from_string(const std::string& s);

/// One entry of the topology descriptor.
struct LayerSpec {
    LayerKind kind = LayerKind::Fc;
    NeuronKind neuron = NeuronKind::FF;
    // conv fields
    std::size_t in_c = 0, in_h = 0, in_w = 0, out_c = 0, ksize = 0, stride = 1;
    // fc fields
    std::size_t in_dim = 0, out_dim = 0;

    static LayerSpec conv(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                          std::size_t out_c, std::size_t ksize, std::size_t stride,
                          NeuronKind neuron);
    static LayerSpec fc(std::size_t in_dim, std::size_t out_dim, NeuronKind neuron);

    std::size_t out_h() const { return (in_h - ksize) / stride + 1; }
    std::size_t out_w() const { return (in_w - ksize) / stride + 1; }
    std::size_t flat_in() const {
        return kind == LayerKind::Conv ? in_c * in_h * in_w : in_dim;
    }
    std::size_t flat_out() const {
        return kind == LayerKind::Conv ? out_c * out_h() * out_w() : out_dim;
    }
    std::vector<std::size_t> weight_shape() const;
    std::size_t weight_fan_in() const {
        return kind == LayerKind::Conv ? in_c * ksize * ksize : in_dim;
    }
    bool operator==(const LayerSpec&) const = default;
};

/// Per-layer parameters. `w` are the forward weights/kernels, `v` the
/// recurrent weights (REC only; dense [n x n] for fc layers, per-neuron [n]
/// for conv layers), `g` the frozen random feedback tensor whose shape
/// depends on the learning rule (same as w for BP/FA transport, [classes x
/// flat_out] for DFA/LE), and `g_v` a frozen random matrix of v's shape used
/// by FA in place of v^T. w_t/v_t are derived transposed copies for fc
/// layers, refreshed after optimizer steps and never serialized.
struct LayerParams {
    Tensor w;
    Tensor v;
    Tensor g;
    Tensor g_v;
    Tensor w_t;
    Tensor v_t;
    Tensor g_t;  // derived; fc FA transport
};

struct NetworkModel {
    std::vector<LayerSpec> topo;
    std::vector<LayerParams> layers;
    Rule rule = Rule::BP;
    Mode mode = Mode::Spiking;
    LifParams lif;
    int T = 1;
    std::uint64_t seed = 0;
    bool le_sum_over_time = true;  // LE local losses summed over steps (switchable)

    std::size_t classes() const { return topo.back().flat_out(); }
    int steps() const { return mode == Mode::Analog ? 1 : T; }
    /// Trainable parameter count (w and v; feedback tensors excluded).
    std::size_t param_count() const;
    void refresh_derived();
    bool same_topology(const NetworkModel& o) const;
};

/// Generic builder: initializes w (and v) with Kaiming-style uniform bounds
/// 1/sqrt(fan_in) and draws the frozen feedback tensors from dedicated
/// seeded streams.
NetworkModel build_network(std::vector<LayerSpec> topo, Rule rule, Mode mode, LifParams lif,
                           int t_steps, std::uint64_t seed);

/// The two LeNet-5 variants: MNIST conv64-conv128-fc120-fc84-fc10 and
/// CIFAR-10 conv64-conv256-fc1000-fc1000-fc10 (kernel 3, stride 1, no
/// padding, no pooling).
NetworkModel build_lenet5(DatasetKind dataset, Rule rule, NeuronKind neuron, Mode mode,
                          std::uint64_t seed, LifParams lif = LifParams{}, int t_steps = 15);

/// Unrolled forward records: per layer, membrane potentials and spikes for
/// every step, time-major [T x flat]. Analog runs hold pre-activations in u
/// and activations in s with T == 1.
struct UnrollCache {
    ActivationKind act = ActivationKind::Binary;
    int T = 1;
    Tensor input;
    std::vector<Tensor> u;
    std::vector<Tensor> s;
};

/// Runs the network on one input (constant-current temporal encoding for
/// spiking mode) and returns the readout: per-class spike counts summed over
/// T for spiking networks, plain logits for analog ones. The forward pass
/// does not depend on the learning rule.
Tensor forward(const NetworkModel& model, const Tensor& input, UnrollCache* cache = nullptr,
               ActivationKind act = ActivationKind::Binary);

int predict(const NetworkModel& model, const Tensor& input);

/// Hybrid-attack surrogate: deep copy sharing topology and all parameters,
/// retagged to global error propagation (BP). The source is untouched.
NetworkModel map_parameters(const NetworkModel& source);

}  // namespace snn
