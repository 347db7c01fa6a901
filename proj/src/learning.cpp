#include "snn/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "snn/kernels.hpp"

namespace snn {

LossResult loss_cross_entropy(const Tensor& logits, int label) {
    const std::size_t n = logits.size();
    if (label < 0 || static_cast<std::size_t>(label) >= n)
        throw ConfigError("loss_cross_entropy: label out of range");
    double m = logits[0];
    for (std::size_t k = 1; k < n; ++k) m = std::max(m, static_cast<double>(logits[k]));
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += std::exp(static_cast<double>(logits[k]) - m);
    const double lse = m + std::log(sum);

    LossResult res;
    res.loss = static_cast<float>(lse - static_cast<double>(logits[label]));
    res.grad_logits = Tensor({n});
    for (std::size_t k = 0; k < n; ++k) {
        const double p = std::exp(static_cast<double>(logits[k]) - lse);
        res.grad_logits[k] = static_cast<float>(p - (static_cast<int>(k) == label ? 1.0 : 0.0));
    }
    return res;
}

TransportOverride TransportOverride::none(std::size_t n_layers) {
    TransportOverride o;
    o.matrices.resize(n_layers);
    o.matrices_t.resize(n_layers);
    o.active.assign(n_layers, false);
    return o;
}

void TransportOverride::set(std::size_t layer, Tensor matrix, LayerKind kind) {
    if (kind == LayerKind::Fc) matrices_t[layer] = transpose2d(matrix);
    matrices[layer] = std::move(matrix);
    active[layer] = true;
}

bool TransportOverride::any() const {
    return std::any_of(active.begin(), active.end(), [](bool b) { return b; });
}

namespace {

// Activation derivative on cached potentials. Binary spiking uses the
// surrogate; the smooth mode's exact derivative IS the surrogate, so both
// share it. Analog hidden layers use the ReLU derivative and the analog
// output layer is an identity readout.
struct ActDeriv {
    const NetworkModel& model;
    bool is_output;
    float operator()(float u) const {
        if (model.mode == Mode::Analog) return is_output ? 1.0f : (u > 0.0f ? 1.0f : 0.0f);
        return surrogate_grad_scalar(u, model.lif);
    }
};

// Transport matrix for layer `li` (maps delta at li onto layer li-1 / the
// input): w under BP, the frozen g under FA, unless overridden.
struct Transport {
    const Tensor* m;    // natural (weight) shape
    const Tensor* m_t;  // fc: transposed copy
};

Transport transport_matrix(const NetworkModel& model, std::size_t li, Rule rule,
                           const TransportOverride* ov) {
    if (ov && ov->active[li]) return {&ov->matrices[li], &ov->matrices_t[li]};
    const LayerParams& p = model.layers[li];
    if (rule == Rule::FA) return {&p.g, &p.g_t};
    return {&p.w, &p.w_t};
}

Tensor conv_image(const Tensor& flat_rowmajor, const LayerSpec& spec, bool input_side) {
    if (input_side) return flat_rowmajor.reshaped({spec.in_c, spec.in_h, spec.in_w});
    return flat_rowmajor.reshaped({spec.out_c, spec.out_h(), spec.out_w()});
}

// delta_above: [T x flat_out(li)] errors at layer li's membranes. Returns
// the transported error [T x flat_in(li)].
Tensor transport_down_tt(const NetworkModel& model, std::size_t li, const Tensor& delta_above,
                         Rule rule, const TransportOverride* ov) {
    const LayerSpec& spec = model.topo[li];
    const std::size_t t_steps = delta_above.dim(0);
    const std::size_t n_in = spec.flat_in(), n_out = spec.flat_out();
    Transport tr = transport_matrix(model, li, rule, ov);
    Tensor out({t_steps, n_in});
    if (spec.kind == LayerKind::Conv) {
        for (std::size_t t = 0; t < t_steps; ++t) {
            Tensor dimg({spec.out_c, spec.out_h(), spec.out_w()});
            std::memcpy(dimg.data(), delta_above.data() + t * n_out, n_out * sizeof(float));
            Tensor gin = conv2d_input_grad(dimg, *tr.m, {spec.in_c, spec.in_h, spec.in_w},
                                           spec.stride);
            std::memcpy(out.data() + t * n_in, gin.data(), n_in * sizeof(float));
        }
    } else {
        // out^T [in x T] = M^T [in x out] * delta^T [out x T]
        Tensor delta_t({n_out, t_steps});
        for (std::size_t t = 0; t < t_steps; ++t)
            for (std::size_t j = 0; j < n_out; ++j)
                delta_t[j * t_steps + t] = delta_above[t * n_out + j];
        std::vector<double> acc(n_in * t_steps, 0.0);
        kern::gemm_nn(acc.data(), tr.m_t->data(), delta_t.data(), n_in, n_out, t_steps);
        for (std::size_t j = 0; j < n_in; ++j)
            for (std::size_t t = 0; t < t_steps; ++t)
                out[t * n_in + j] = static_cast<float>(acc[j * t_steps + t]);
    }
    return out;
}

// g^T * err for the direct-feedback projections; g is [classes x n].
void project_feedback(Tensor& dst_add, const Tensor& g, const Tensor& err) {
    const std::size_t n = dst_add.size();
    std::vector<double> acc(n, 0.0);
    kern::weighted_rowsum_acc(acc.data(), g.data(), err.data(), err.size(), n);
    for (std::size_t j = 0; j < n; ++j) dst_add[j] += static_cast<float>(acc[j]);
}

// Local-error injection for LE: d/ds of CE(softmax(g s), label).
Tensor le_local_error(const Tensor& g, const float* s, std::size_t n, int label) {
    const std::size_t classes = g.dim(0);
    std::vector<double> y(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        const float* grow = g.data() + c * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (s[j] == 0.0f) continue;
            acc += static_cast<double>(grow[j]) * static_cast<double>(s[j]);
        }
        y[c] = acc;
    }
    double m = y[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, y[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(y[c] - m);
    const double lse = m + std::log(sum);
    Tensor err({classes});
    for (std::size_t c = 0; c < classes; ++c)
        err[c] = static_cast<float>(std::exp(y[c] - lse) -
                                    (static_cast<int>(c) == label ? 1.0 : 0.0));
    Tensor out({n});
    project_feedback(out, g, err);
    return out;
}

void check_cache(const NetworkModel& model, const UnrollCache& cache) {
    if (cache.u.size() != model.topo.size() || cache.s.size() != model.topo.size() ||
        cache.u.empty() || cache.u.front().empty())
        throw StateError("backward pass needs a cache from unroll_forward on this model");
    for (std::size_t i = 0; i < model.topo.size(); ++i)
        if (cache.u[i].size() != static_cast<std::size_t>(cache.T) * model.topo[i].flat_out())
            throw StateError("cache shape does not match model topology");
}

}  // namespace

GradientSet backward_tt(const NetworkModel& model, const UnrollCache& cache,
                        const Tensor& grad_logits, int label, Rule rule,
                        bool want_input_grad, bool want_param_grads,
                        const TransportOverride* override_t) {
    check_cache(model, cache);
    if (grad_logits.size() != model.classes())
        throw ShapeError("backward_tt: grad_logits size mismatch");
    const std::size_t n_layers = model.topo.size();
    const std::size_t t_steps = static_cast<std::size_t>(cache.T);
    const bool spiking = model.mode == Mode::Spiking;
    const bool le_final_only = !model.le_sum_over_time;

    GradientSet grads;
    grads.dw.resize(n_layers);
    grads.dv.resize(n_layers);

    std::vector<Tensor> deltas(n_layers);
    for (std::size_t ri = 0; ri < n_layers; ++ri) {
        const std::size_t li = n_layers - 1 - ri;
        const LayerSpec& spec = model.topo[li];
        const LayerParams& params = model.layers[li];
        const std::size_t n_out = spec.flat_out();
        const bool is_output = li + 1 == n_layers;
        const ActDeriv act_deriv{model, is_output};

        // Spatial error arriving at this layer's spikes, all steps at once.
        Tensor trans;
        if (!is_output && (rule == Rule::BP || rule == Rule::FA))
            trans = transport_down_tt(model, li + 1, deltas[li + 1], rule, override_t);

        // DFA projects the output error directly; with the spike-count
        // readout that error is the same at every step.
        Tensor dfa_inj;
        if (!is_output && rule == Rule::DFA) {
            dfa_inj = Tensor({n_out});
            project_feedback(dfa_inj, params.g, grad_logits);
        }

        Tensor delta({t_steps, n_out});
        const Tensor& u = cache.u[li];
        const Tensor& s = cache.s[li];
        for (std::size_t rt = 0; rt < t_steps; ++rt) {
            const std::size_t t = t_steps - 1 - rt;
            Tensor e({n_out});
            if (is_output) {
                for (std::size_t j = 0; j < model.classes(); ++j) e[j] += grad_logits[j];
            } else if (rule == Rule::DFA) {
                for (std::size_t j = 0; j < n_out; ++j) e[j] += dfa_inj[j];
            } else if (rule == Rule::LE) {
                if (!le_final_only || t == t_steps - 1) {
                    Tensor le = le_local_error(params.g, s.data() + t * n_out, n_out, label);
                    for (std::size_t j = 0; j < n_out; ++j) e[j] += le[j];
                }
            } else if (!trans.empty()) {
                const float* tr = trans.data() + t * n_out;
                for (std::size_t j = 0; j < n_out; ++j) e[j] += tr[j];
            }

            if (spiking && t + 1 < t_steps) {
                const float* dnext = delta.data() + (t + 1) * n_out;
                for (std::size_t j = 0; j < n_out; ++j) e[j] -= model.lif.v_th * dnext[j];
                if (spec.neuron == NeuronKind::REC) {
                    // recurrent pathway: v^T under BP (and DFA/LE, whose
                    // within-layer dynamics are untouched), the dedicated
                    // random matrix under FA
                    const Tensor& vmat = rule == Rule::FA ? params.g_v : params.v;
                    if (vmat.rank() == 2) {
                        std::vector<double> acc(n_out, 0.0);
                        kern::weighted_rowsum_acc(acc.data(), vmat.data(), dnext, n_out, n_out);
                        for (std::size_t j = 0; j < n_out; ++j)
                            e[j] += static_cast<float>(acc[j]);
                    } else {
                        for (std::size_t j = 0; j < n_out; ++j) e[j] += vmat[j] * dnext[j];
                    }
                }
            }

            float* d_t = delta.data() + t * n_out;
            const float* u_t = u.data() + t * n_out;
            if (spiking && t + 1 < t_steps) {
                const float* dnext = delta.data() + (t + 1) * n_out;
                for (std::size_t j = 0; j < n_out; ++j)
                    d_t[j] = e[j] * act_deriv(u_t[j]) + model.lif.decay * dnext[j];
            } else {
                for (std::size_t j = 0; j < n_out; ++j) d_t[j] = e[j] * act_deriv(u_t[j]);
            }
        }
        deltas[li] = std::move(delta);
    }

    if (want_param_grads) {
        for (std::size_t li = 0; li < n_layers; ++li) {
            const LayerSpec& spec = model.topo[li];
            const Tensor& delta = deltas[li];
            const std::size_t n_out = spec.flat_out();
            const std::size_t n_in = spec.flat_in();

            if (spec.kind == LayerKind::Fc) {
                grads.dw[li] = Tensor({spec.out_dim, spec.in_dim});
                std::vector<double> acc(spec.out_dim * spec.in_dim, 0.0);
                if (li == 0) {
                    // constant input: dW = (sum_t delta[t]) (x) input
                    std::vector<double> dsum(n_out, 0.0);
                    for (std::size_t t = 0; t < t_steps; ++t)
                        for (std::size_t j = 0; j < n_out; ++j) dsum[j] += delta[t * n_out + j];
                    for (std::size_t o = 0; o < n_out; ++o) {
                        const double d = dsum[o];
                        double* row = acc.data() + o * n_in;
                        const float* x = cache.input.data();
                        for (std::size_t j = 0; j < n_in; ++j)
                            row[j] += d * static_cast<double>(x[j]);
                    }
                } else {
                    kern::gemm_tn(acc.data(), delta.data(), cache.s[li - 1].data(), n_out,
                                  t_steps, n_in);
                }
                kern::round_to_f32(acc.data(), grads.dw[li].data(), acc.size());
            } else {
                grads.dw[li] = Tensor(spec.weight_shape());
                const std::size_t ck = spec.in_c * spec.ksize * spec.ksize;
                const std::size_t p = spec.out_h() * spec.out_w();
                std::vector<double> acc(spec.out_c * ck, 0.0);
                std::vector<float> cols_t(p * ck);
                if (li == 0) {
                    Tensor dsum({n_out});
                    for (std::size_t t = 0; t < t_steps; ++t)
                        for (std::size_t j = 0; j < n_out; ++j) dsum[j] += delta[t * n_out + j];
                    kern::im2col_t(cache.input.data(), spec.in_c, spec.in_h, spec.in_w, spec.ksize,
                                   spec.ksize, spec.stride, cols_t.data());
                    kern::gemm_nn(acc.data(), dsum.data(), cols_t.data(), spec.out_c, p, ck);
                } else {
                    for (std::size_t t = 0; t < t_steps; ++t) {
                        kern::im2col_t(cache.s[li - 1].data() + t * n_in, spec.in_c, spec.in_h,
                                       spec.in_w, spec.ksize, spec.ksize, spec.stride,
                                       cols_t.data());
                        kern::gemm_nn(acc.data(), delta.data() + t * n_out, cols_t.data(),
                                      spec.out_c, p, ck);
                    }
                }
                kern::round_to_f32(acc.data(), grads.dw[li].data(), acc.size());
            }

            if (spec.neuron == NeuronKind::REC && t_steps > 1) {
                const Tensor& s_self = cache.s[li];
                if (model.layers[li].v.rank() == 2) {
                    grads.dv[li] = Tensor({n_out, n_out});
                    std::vector<double> acc(n_out * n_out, 0.0);
                    // pairs (delta[t], s[t-1]) for t = 1..T-1
                    kern::gemm_tn(acc.data(), delta.data() + n_out, s_self.data(), n_out,
                                  t_steps - 1, n_out);
                    kern::round_to_f32(acc.data(), grads.dv[li].data(), acc.size());
                } else {
                    grads.dv[li] = Tensor({n_out});
                    for (std::size_t j = 0; j < n_out; ++j) {
                        double a = 0.0;
                        for (std::size_t t = 1; t < t_steps; ++t)
                            a += static_cast<double>(delta[t * n_out + j]) *
                                 static_cast<double>(s_self[(t - 1) * n_out + j]);
                        grads.dv[li][j] = static_cast<float>(a);
                    }
                }
            } else if (spec.neuron == NeuronKind::REC) {
                grads.dv[li] = Tensor(model.layers[li].v.shape());  // zero: no step before t=1
            }
        }
    }

    if (want_input_grad) {
        const LayerSpec& spec0 = model.topo[0];
        const std::size_t n0 = spec0.flat_out();
        Tensor dsum({n0});
        for (std::size_t t = 0; t < t_steps; ++t)
            for (std::size_t j = 0; j < n0; ++j) dsum[j] += deltas[0][t * n0 + j];
        // always the first layer's weights, unless an ablation override
        // replaces even this transport
        const Tensor* m0 = &model.layers[0].w;
        if (override_t && override_t->active[0]) m0 = &override_t->matrices[0];
        if (spec0.kind == LayerKind::Conv) {
            Tensor dimg = conv_image(dsum, spec0, false);
            Tensor gin = conv2d_input_grad(dimg, *m0, {spec0.in_c, spec0.in_h, spec0.in_w},
                                           spec0.stride);
            grads.dx = gin;
        } else {
            grads.dx = Tensor({spec0.in_dim});
            std::vector<double> acc(spec0.in_dim, 0.0);
            kern::weighted_rowsum_acc(acc.data(), m0->data(), dsum.data(), n0, spec0.in_dim);
            kern::round_to_f32(acc.data(), grads.dx.data(), acc.size());
        }
    }
    return grads;
}

RateCache make_rate_cache(const UnrollCache& cache) {
    RateCache rc;
    rc.T = cache.T;
    rc.input = cache.input;
    const std::size_t t_steps = static_cast<std::size_t>(cache.T);
    rc.rate.resize(cache.s.size());
    rc.mean_u.resize(cache.s.size());
    rc.rate_prev.resize(cache.s.size());
    for (std::size_t li = 0; li < cache.s.size(); ++li) {
        const std::size_t n = cache.s[li].size() / t_steps;
        rc.rate[li] = Tensor({n});
        rc.mean_u[li] = Tensor({n});
        rc.rate_prev[li] = Tensor({n});
        for (std::size_t j = 0; j < n; ++j) {
            double sr = 0.0, su = 0.0, sp = 0.0;
            for (std::size_t t = 0; t < t_steps; ++t) {
                sr += cache.s[li][t * n + j];
                su += cache.u[li][t * n + j];
                if (t + 1 < t_steps) sp += cache.s[li][t * n + j];
            }
            rc.rate[li][j] = static_cast<float>(sr / t_steps);
            rc.mean_u[li][j] = static_cast<float>(su / t_steps);
            rc.rate_prev[li][j] = static_cast<float>(sp / t_steps);
        }
    }
    return rc;
}

GradientSet backward_tr(const NetworkModel& model, const RateCache& rates,
                        const Tensor& grad_logits, int label, Rule rule,
                        bool want_input_grad, bool want_param_grads) {
    if (model.mode == Mode::Analog)
        throw ModeError("backward_tr is only defined for spiking models");
    if (rates.rate.size() != model.topo.size())
        throw StateError("backward_tr: rate cache does not match model");
    const std::size_t n_layers = model.topo.size();
    const float t_scale = static_cast<float>(rates.T);

    GradientSet grads;
    grads.dw.resize(n_layers);
    grads.dv.resize(n_layers);

    std::vector<Tensor> deltas(n_layers);
    for (std::size_t ri = 0; ri < n_layers; ++ri) {
        const std::size_t li = n_layers - 1 - ri;
        const LayerSpec& spec = model.topo[li];
        const LayerParams& params = model.layers[li];
        const std::size_t n_out = spec.flat_out();
        const bool is_output = li + 1 == n_layers;

        Tensor e({n_out});
        if (is_output) {
            for (std::size_t j = 0; j < model.classes(); ++j) e[j] = t_scale * grad_logits[j];
        } else if (rule == Rule::DFA) {
            Tensor scaled = scale(grad_logits, t_scale);
            project_feedback(e, params.g, scaled);
        } else if (rule == Rule::LE) {
            Tensor le = le_local_error(params.g, rates.rate[li].data(), n_out, label);
            for (std::size_t j = 0; j < n_out; ++j) e[j] = le[j];
        } else {
            // BP/FA: transport the layer above's delta
            const LayerSpec& sup = model.topo[li + 1];
            Transport tr = transport_matrix(model, li + 1, rule, nullptr);
            if (sup.kind == LayerKind::Conv) {
                Tensor dimg = conv_image(deltas[li + 1], sup, false);
                Tensor gin = conv2d_input_grad(dimg, *tr.m, {sup.in_c, sup.in_h, sup.in_w},
                                               sup.stride);
                for (std::size_t j = 0; j < n_out; ++j) e[j] = gin[j];
            } else {
                std::vector<double> acc(n_out, 0.0);
                kern::weighted_rowsum_acc(acc.data(), tr.m->data(), deltas[li + 1].data(),
                                          sup.out_dim, n_out);
                kern::round_to_f32(acc.data(), e.data(), n_out);
            }
        }

        Tensor delta({n_out});
        for (std::size_t j = 0; j < n_out; ++j)
            delta[j] = e[j] * surrogate_grad_scalar(rates.mean_u[li][j], model.lif);
        deltas[li] = std::move(delta);
    }

    if (want_param_grads) {
        for (std::size_t li = 0; li < n_layers; ++li) {
            const LayerSpec& spec = model.topo[li];
            const Tensor& delta = deltas[li];
            const Tensor& below = li == 0 ? rates.input : rates.rate[li - 1];
            if (spec.kind == LayerKind::Fc) {
                grads.dw[li] = Tensor({spec.out_dim, spec.in_dim});
                for (std::size_t o = 0; o < spec.out_dim; ++o) {
                    const float d = delta[o];
                    float* row = grads.dw[li].data() + o * spec.in_dim;
                    const float* b = below.data();
                    for (std::size_t j = 0; j < spec.in_dim; ++j) row[j] = d * b[j];
                }
            } else {
                Tensor bimg = conv_image(below, spec, true);
                Tensor dimg = conv_image(delta, spec, false);
                grads.dw[li] = conv2d_kernel_grad(bimg, dimg, spec.weight_shape(), spec.stride);
            }
            if (spec.neuron == NeuronKind::REC) {
                const Tensor& rp = rates.rate_prev[li];
                if (model.layers[li].v.rank() == 2) {
                    grads.dv[li] = Tensor({spec.out_dim, spec.out_dim});
                    for (std::size_t o = 0; o < spec.out_dim; ++o) {
                        const float d = delta[o];
                        float* row = grads.dv[li].data() + o * spec.out_dim;
                        for (std::size_t j = 0; j < spec.out_dim; ++j) row[j] = d * rp[j];
                    }
                } else {
                    grads.dv[li] = Tensor({spec.flat_out()});
                    for (std::size_t j = 0; j < spec.flat_out(); ++j)
                        grads.dv[li][j] = delta[j] * rp[j];
                }
            }
        }
    }

    if (want_input_grad) {
        const LayerSpec& spec0 = model.topo[0];
        if (spec0.kind == LayerKind::Conv) {
            Tensor dimg = conv_image(deltas[0], spec0, false);
            grads.dx = conv2d_input_grad(dimg, model.layers[0].w,
                                         {spec0.in_c, spec0.in_h, spec0.in_w}, spec0.stride);
        } else {
            grads.dx = Tensor({spec0.in_dim});
            std::vector<double> acc(spec0.in_dim, 0.0);
            kern::weighted_rowsum_acc(acc.data(), model.layers[0].w.data(), deltas[0].data(),
                                      spec0.out_dim, spec0.in_dim);
            kern::round_to_f32(acc.data(), grads.dx.data(), acc.size());
        }
    }
    return grads;
}

OptimState make_optimizer(const NetworkModel& model, float lr) {
    OptimState opt;
    opt.lr = lr;
    for (const auto& l : model.layers) {
        opt.m_w.emplace_back(l.w.shape());
        opt.v_w.emplace_back(l.w.shape());
        opt.m_v.emplace_back(l.v.shape());
        opt.v_v.emplace_back(l.v.shape());
    }
    return opt;
}

namespace {

void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, const OptimState& o,
                 double bc1, double bc2) {
    if (!p.same_shape(g)) throw ShapeError("optimizer_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = o.beta1 * m[i] + (1.0f - o.beta1) * g[i];
        v[i] = o.beta2 * v[i] + (1.0f - o.beta2) * g[i] * g[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        p[i] -= static_cast<float>(o.lr * mh / (std::sqrt(vh) + o.eps));
    }
}

}  // namespace

void optimizer_step(NetworkModel& model, const GradientSet& grads, OptimState& opt) {
    if (grads.dw.size() != model.layers.size())
        throw ShapeError("optimizer_step: gradient set does not match model");
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        adam_update(model.layers[li].w, grads.dw[li], opt.m_w[li], opt.v_w[li], opt, bc1, bc2);
        if (!model.layers[li].v.empty() && !grads.dv[li].empty())
            adam_update(model.layers[li].v, grads.dv[li], opt.m_v[li], opt.v_v[li], opt, bc1, bc2);
    }
    model.refresh_derived();
}

double evaluate_accuracy(const NetworkModel& model, const LabeledDataset& data, int subset) {
    const std::size_t n = subset > 0 ? std::min<std::size_t>(subset, data.size()) : data.size();
    if (n == 0) throw ConfigError("evaluate_accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (predict(model, data.image(i)) == data.labels[i]) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

struct BatchAccum {
    std::vector<std::vector<double>> dw, dv;

    explicit BatchAccum(const NetworkModel& model) {
        for (const auto& l : model.layers) {
            dw.emplace_back(l.w.size(), 0.0);
            dv.emplace_back(l.v.size(), 0.0);
        }
    }
    void reset() {
        for (auto& a : dw) std::fill(a.begin(), a.end(), 0.0);
        for (auto& a : dv) std::fill(a.begin(), a.end(), 0.0);
    }
    void add(const GradientSet& g) {
        for (std::size_t li = 0; li < dw.size(); ++li) {
            for (std::size_t i = 0; i < dw[li].size(); ++i) dw[li][i] += g.dw[li][i];
            if (!dv[li].empty() && !g.dv[li].empty())
                for (std::size_t i = 0; i < dv[li].size(); ++i) dv[li][i] += g.dv[li][i];
        }
    }
    GradientSet mean(const NetworkModel& model, double inv_batch) const {
        GradientSet g;
        g.dw.resize(dw.size());
        g.dv.resize(dv.size());
        for (std::size_t li = 0; li < dw.size(); ++li) {
            g.dw[li] = Tensor(model.layers[li].w.shape());
            for (std::size_t i = 0; i < dw[li].size(); ++i)
                g.dw[li][i] = static_cast<float>(dw[li][i] * inv_batch);
            if (!dv[li].empty()) {
                g.dv[li] = Tensor(model.layers[li].v.shape());
                for (std::size_t i = 0; i < dv[li].size(); ++i)
                    g.dv[li][i] = static_cast<float>(dv[li][i] * inv_batch);
            }
        }
        return g;
    }
};

}  // namespace

std::vector<EpochStats> train(NetworkModel& model, const LabeledDataset& train_set,
                              const LabeledDataset& test_set, const TrainOptions& opts) {
    if (opts.batch_size < 1 || opts.epochs < 0) throw ConfigError("train: bad batch/epochs");
    const std::size_t n_total = train_set.size();
    const std::size_t n = opts.subset > 0 ? std::min<std::size_t>(opts.subset, n_total) : n_total;
    if (n == 0) throw ConfigError("train: empty training set");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    OptimState opt = make_optimizer(model, opts.lr);
    BatchAccum accum(model);
    std::vector<EpochStats> stats;

    if (opts.csv && opts.csv_header)
        *opts.csv << "epoch,rule,mode,neuron_type,train_loss,eval_accuracy,wall_seconds\n";
    const NeuronKind neuron = model.topo.front().neuron;

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = Rng::derive(opts.data_seed, /*stream=*/100, /*substream=*/epoch);
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += opts.batch_size) {
            const std::size_t bs = std::min<std::size_t>(opts.batch_size, n - start);
            accum.reset();
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < bs; ++b) {
                const std::size_t idx = order[start + b];
                UnrollCache cache;
                Tensor readout = forward(model, train_set.image(idx), &cache);
                LossResult loss = loss_cross_entropy(readout, train_set.labels[idx]);
                batch_loss += loss.loss;
                GradientSet g = backward_tt(model, cache, loss.grad_logits,
                                            train_set.labels[idx], model.rule,
                                            /*want_input_grad=*/false);
                accum.add(g);
            }
            if (!std::isfinite(batch_loss))
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch) +
                                    ", sample " + std::to_string(start));
            loss_sum += batch_loss;
            seen += bs;
            GradientSet mean = accum.mean(model, 1.0 / static_cast<double>(bs));
            optimizer_step(model, mean, opt);
        }

        const double acc = evaluate_accuracy(model, test_set, opts.eval_subset);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                .count();
        EpochStats es{epoch, loss_sum / static_cast<double>(seen), acc, wall};
        stats.push_back(es);
        if (opts.csv) {
            *opts.csv << epoch << ',' << to_string(model.rule) << ',' << to_string(model.mode)
                      << ',' << to_string(neuron) << ',' << std::setprecision(9) << es.train_loss
                      << ',' << es.eval_accuracy << ',' << std::setprecision(4) << es.wall_seconds
                      << '\n';
            opts.csv->flush();
        }
        if (opts.progress) {
            *opts.progress << "epoch " << epoch << "/" << opts.epochs << "  loss "
                           << std::fixed << std::setprecision(4) << es.train_loss << "  eval "
                           << std::setprecision(2) << es.eval_accuracy << "%  (" << es.wall_seconds
                           << "s)\n";
            opts.progress->flush();
        }
    }
    return stats;
}

}  // namespace snn
