#include "snn/network.hpp"

#include <cmath>
#include <cstring>

#include "snn/kernels.hpp"

namespace snn {

const char* to_string(Rule r) {
    switch (r) {
        case Rule::BP: return "bp";
        case Rule::FA: return "fa";
        case Rule::DFA: return "dfa";
        case Rule::LE: return "le";
    }
    return "?";
}
const char* to_string(Mode m) { return m == Mode::Spiking ? "spiking" : "analog"; }
const char* to_string(NeuronKind n) {
    switch (n) {
        case NeuronKind::FF: return "ff";
        case NeuronKind::REC: return "rec";
        case NeuronKind::Relu: return "relu";
    }
    return "?";
}
const char* to_string(DatasetKind d) { return d == DatasetKind::Mnist ? "mnist" : "cifar10"; }

Rule rule_from_string(const std::string& s) {
    if (s == "bp") return Rule::BP;
    if (s == "fa") return Rule::FA;
    if (s == "dfa") return Rule::DFA;
    if (s == "le") return Rule::LE;
    throw ConfigError("unknown rule: " + s);
}
Mode mode_from_string(const std::string& s) {
    if (s == "spiking") return Mode::Spiking;
    if (s == "analog") return Mode::Analog;
    throw ConfigError("unknown mode: " + s);
}
NeuronKind neuron_from_string(const std::string& s) {
    if (s == "ff") return NeuronKind::FF;
    if (s == "rec") return NeuronKind::REC;
    if (s == "relu") return NeuronKind::Relu;
    throw ConfigError("unknown neuron type: " + s);
}
DatasetKind dataset_from_string(const std::string& s) {
    if (s == "mnist") return DatasetKind::Mnist;
    if (s == "cifar10") return DatasetKind::Cifar10;
    throw ConfigError("unknown dataset: " + s);
}

LayerSpec LayerSpec::conv(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                          std::size_t out_c, std::size_t ksize, std::size_t stride,
                          NeuronKind neuron) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.neuron = neuron;
    s.in_c = in_c;
    s.in_h = in_h;
    s.in_w = in_w;
    s.out_c = out_c;
    s.ksize = ksize;
    s.stride = stride;
    if (ksize > in_h || ksize > in_w) throw ShapeError("conv layer kernel larger than input");
    return s;
}

LayerSpec LayerSpec::fc(std::size_t in_dim, std::size_t out_dim, NeuronKind neuron) {
    LayerSpec s;
    s.kind = LayerKind::Fc;
    s.neuron = neuron;
    s.in_dim = in_dim;
    s.out_dim = out_dim;
    return s;
}

std::vector<std::size_t> LayerSpec::weight_shape() const {
    if (kind == LayerKind::Conv) return {out_c, in_c, ksize, ksize};
    return {out_dim, in_dim};
}

std::size_t NetworkModel::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.v.size();
    return n;
}

void NetworkModel::refresh_derived() {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (topo[i].kind == LayerKind::Fc) {
            layers[i].w_t = transpose2d(layers[i].w);
            if (!layers[i].v.empty() && layers[i].v.rank() == 2)
                layers[i].v_t = transpose2d(layers[i].v);
            if (layers[i].g.same_shape(layers[i].w))
                layers[i].g_t = transpose2d(layers[i].g);
        }
    }
}

bool NetworkModel::same_topology(const NetworkModel& o) const { return topo == o.topo; }

namespace {

// RNG stream roles for parameter draws; fixed so every build is replayable.
enum StreamRole : std::uint64_t { kWeights = 1, kRecurrent = 2, kFeedback = 3, kFeedbackRec = 4 };

void validate_topology(const std::vector<LayerSpec>& topo, Mode mode) {
    if (topo.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t i = 0; i < topo.size(); ++i) {
        const auto& l = topo[i];
        if (mode == Mode::Analog && l.neuron == NeuronKind::REC)
            throw ConfigError("REC neurons are a spiking-mode feature");
        if (mode == Mode::Spiking && l.neuron == NeuronKind::Relu)
            throw ConfigError("ReLU neurons are an analog-mode feature");
        if (i + 1 < topo.size() && l.flat_out() != topo[i + 1].flat_in())
            throw ShapeError("layer " + std::to_string(i) + " output does not feed layer " +
                             std::to_string(i + 1));
    }
}

}  // namespace

NetworkModel build_network(std::vector<LayerSpec> topo, Rule rule, Mode mode, LifParams lif,
                           int t_steps, std::uint64_t seed) {
    validate_topology(topo, mode);
    if (mode == Mode::Spiking) {
        lif.validate();
        if (t_steps < 1) throw ConfigError("spiking network needs T >= 1");
    }
    NetworkModel model;
    model.topo = std::move(topo);
    model.rule = rule;
    model.mode = mode;
    model.lif = lif;
    model.T = mode == Mode::Analog ? 1 : t_steps;
    model.seed = seed;
    const std::size_t classes = model.topo.back().flat_out();

    model.layers.resize(model.topo.size());
    for (std::size_t i = 0; i < model.topo.size(); ++i) {
        const LayerSpec& spec = model.topo[i];
        LayerParams& p = model.layers[i];
        const float w_bound = 1.0f / std::sqrt(static_cast<float>(spec.weight_fan_in()));

        Rng wrng = Rng::derive(seed, kWeights, i);
        p.w = seeded_uniform(wrng, spec.weight_shape(), w_bound);

        if (spec.neuron == NeuronKind::REC) {
            Rng vrng = Rng::derive(seed, kRecurrent, i);
            if (spec.kind == LayerKind::Fc) {
                const float v_bound = 1.0f / std::sqrt(static_cast<float>(spec.out_dim));
                p.v = seeded_uniform(vrng, {spec.out_dim, spec.out_dim}, v_bound);
            } else {
                // conv recurrence is per-neuron (an all-to-all map over a
                // conv grid would not fit anything useful)
                const float v_bound = 1.0f;
                p.v = seeded_uniform(vrng, {spec.flat_out()}, v_bound);
            }
            Rng gvrng = Rng::derive(seed, kFeedbackRec, i);
            const float gv_bound = 1.0f / std::sqrt(static_cast<float>(spec.flat_out()));
            p.g_v = seeded_uniform(gvrng, p.v.shape(), gv_bound);
        }

        Rng grng = Rng::derive(seed, kFeedback, i);
        if (rule == Rule::DFA || rule == Rule::LE) {
            const float g_bound = 1.0f / std::sqrt(static_cast<float>(spec.flat_out()));
            p.g = seeded_uniform(grng, {classes, spec.flat_out()}, g_bound);
        } else {
            p.g = seeded_uniform(grng, spec.weight_shape(), w_bound);
        }
    }
    model.refresh_derived();
    return model;
}

NetworkModel build_lenet5(DatasetKind dataset, Rule rule, NeuronKind neuron, Mode mode,
                          std::uint64_t seed, LifParams lif, int t_steps) {
    if (mode == Mode::Analog) neuron = NeuronKind::Relu;
    std::vector<LayerSpec> topo;
    if (dataset == DatasetKind::Mnist) {
        topo.push_back(LayerSpec::conv(1, 28, 28, 64, 3, 1, neuron));
        topo.push_back(LayerSpec::conv(64, 26, 26, 128, 3, 1, neuron));
        topo.push_back(LayerSpec::fc(128 * 24 * 24, 120, neuron));
        topo.push_back(LayerSpec::fc(120, 84, neuron));
        topo.push_back(LayerSpec::fc(84, 10, neuron));
    } else {
        topo.push_back(LayerSpec::conv(3, 32, 32, 64, 3, 1, neuron));
        topo.push_back(LayerSpec::conv(64, 30, 30, 256, 3, 1, neuron));
        topo.push_back(LayerSpec::fc(256 * 28 * 28, 1000, neuron));
        topo.push_back(LayerSpec::fc(1000, 1000, neuron));
        topo.push_back(LayerSpec::fc(1000, 10, neuron));
    }
    return build_network(std::move(topo), rule, mode, lif, t_steps, seed);
}

namespace {

// Input currents for every step of one layer, written time-major [T x out].
// The first layer sees the constant-current encoded image, so its current is
// computed once and replicated.
Tensor layer_currents(const NetworkModel& model, std::size_t li, const Tensor& input,
                      const std::vector<Tensor>& s_below, int t_steps) {
    const LayerSpec& spec = model.topo[li];
    const std::size_t n_out = spec.flat_out();
    const std::size_t n_in = spec.flat_in();
    Tensor cur({static_cast<std::size_t>(t_steps), n_out});

    if (li == 0) {
        Tensor one;
        if (spec.kind == LayerKind::Conv) {
            Tensor img = input.reshaped({spec.in_c, spec.in_h, spec.in_w});
            one = conv2d(img, model.layers[0].w, spec.stride);
        } else {
            Tensor x = input.reshaped({n_in});
            std::vector<double> acc(n_out, 0.0);
            kern::matvec_acc(acc.data(), model.layers[0].w.data(), x.data(), n_out, n_in);
            one = Tensor({n_out});
            kern::round_to_f32(acc.data(), one.data(), n_out);
        }
        for (int t = 0; t < t_steps; ++t)
            std::memcpy(cur.data() + t * n_out, one.data(), n_out * sizeof(float));
        return cur;
    }

    const Tensor& s_prev = s_below[li - 1];  // [T x n_in]
    if (spec.kind == LayerKind::Conv) {
        std::vector<float> cols(spec.in_c * spec.ksize * spec.ksize * spec.out_h() * spec.out_w());
        std::vector<double> acc(n_out);
        const std::size_t ck = spec.in_c * spec.ksize * spec.ksize;
        const std::size_t p = spec.out_h() * spec.out_w();
        for (int t = 0; t < t_steps; ++t) {
            kern::im2col(s_prev.data() + t * n_in, spec.in_c, spec.in_h, spec.in_w, spec.ksize,
                         spec.ksize, spec.stride, cols.data());
            std::fill(acc.begin(), acc.end(), 0.0);
            kern::gemm_nn(acc.data(), model.layers[li].w.data(), cols.data(), spec.out_c, ck, p);
            kern::round_to_f32(acc.data(), cur.data() + t * n_out, n_out);
        }
    } else {
        // cur^T [out x T] = W [out x in] * s_prev^T [in x T]
        Tensor s_t({n_in, static_cast<std::size_t>(t_steps)});
        for (int t = 0; t < t_steps; ++t)
            for (std::size_t j = 0; j < n_in; ++j)
                s_t[j * t_steps + t] = s_prev[t * n_in + j];
        std::vector<double> acc(n_out * t_steps, 0.0);
        kern::gemm_nn(acc.data(), model.layers[li].w.data(), s_t.data(), n_out, n_in, t_steps);
        for (std::size_t o = 0; o < n_out; ++o)
            for (int t = 0; t < t_steps; ++t)
                cur[t * n_out + o] = static_cast<float>(acc[o * t_steps + t]);
    }
    return cur;
}

}  // namespace

Tensor forward(const NetworkModel& model, const Tensor& input, UnrollCache* cache,
               ActivationKind act) {
    const std::size_t expect_in = model.topo.front().flat_in();
    if (input.size() != expect_in)
        throw ShapeError("forward: input size " + std::to_string(input.size()) +
                         ", network expects " + std::to_string(expect_in));
    const int t_steps = model.steps();
    const std::size_t n_layers = model.topo.size();

    UnrollCache local;
    UnrollCache& c = cache ? *cache : local;
    c.act = act;
    c.T = t_steps;
    c.input = input;
    c.u.assign(n_layers, Tensor());
    c.s.assign(n_layers, Tensor());

    for (std::size_t li = 0; li < n_layers; ++li) {
        const LayerSpec& spec = model.topo[li];
        const std::size_t n_out = spec.flat_out();
        Tensor cur = layer_currents(model, li, input, c.s, t_steps);
        Tensor u({static_cast<std::size_t>(t_steps), n_out});
        Tensor s({static_cast<std::size_t>(t_steps), n_out});

        if (model.mode == Mode::Analog) {
            const bool is_output = li + 1 == n_layers;
            for (std::size_t j = 0; j < n_out; ++j) {
                const float pre = cur[j];
                u[j] = pre;
                s[j] = is_output ? pre : (pre > 0.0f ? pre : 0.0f);
            }
        } else {
            const LifParams& lp = model.lif;
            const Tensor* v = model.layers[li].v.empty() ? nullptr : &model.layers[li].v;
            const bool dense_v = v && v->rank() == 2;
            std::vector<double> vdrive(dense_v ? n_out : 0);
            for (int t = 0; t < t_steps; ++t) {
                const float* cur_t = cur.data() + t * n_out;
                const float* u_prev = t > 0 ? u.data() + (t - 1) * n_out : nullptr;
                const float* s_prev = t > 0 ? s.data() + (t - 1) * n_out : nullptr;
                float* u_t = u.data() + t * n_out;
                float* s_t = s.data() + t * n_out;
                if (dense_v && t > 0) {
                    std::fill(vdrive.begin(), vdrive.end(), 0.0);
                    kern::matvec_acc(vdrive.data(), v->data(), s_prev, n_out, n_out,
                                     /*skip_zero_x=*/act == ActivationKind::Binary);
                }
                for (std::size_t j = 0; j < n_out; ++j) {
                    float val = cur_t[j];
                    if (t > 0) {
                        val += lp.decay * u_prev[j] - s_prev[j] * lp.v_th;
                        if (v) {
                            if (dense_v) val += static_cast<float>(vdrive[j]);
                            else val += (*v)[j] * s_prev[j];
                        }
                    }
                    u_t[j] = val;
                    s_t[j] = act == ActivationKind::Binary ? (val > lp.v_th ? 1.0f : 0.0f)
                                                           : smooth_spike_scalar(val, lp);
                }
            }
        }
        c.u[li] = std::move(u);
        c.s[li] = std::move(s);
    }

    // Readout: summed output spikes over T (spiking), logits (analog).
    const std::size_t classes = model.classes();
    Tensor out({classes});
    const Tensor& s_out = c.s.back();
    for (std::size_t k = 0; k < classes; ++k) {
        double acc = 0.0;
        for (int t = 0; t < t_steps; ++t) acc += s_out[t * classes + k];
        out[k] = static_cast<float>(acc);
    }
    return out;
}

int predict(const NetworkModel& model, const Tensor& input) {
    Tensor logits = forward(model, input);
    int best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = static_cast<int>(k);
    return best;
}

NetworkModel map_parameters(const NetworkModel& source) {
    NetworkModel surrogate = source;  // deep copy (tensors are values)
    surrogate.rule = Rule::BP;
    return surrogate;
}

}  // namespace snn
