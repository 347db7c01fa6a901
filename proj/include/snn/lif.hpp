#pragma once

#include "snn/tensor.hpp"

namespace snn {

/// Leaky integrate-and-fire neuron constants. `decay` is the per-step
/// membrane retention factor e^{-1/tau_mem}; a spike fires when the membrane
/// potential strictly exceeds `v_th`, followed by a subtractive reset of
/// v_th applied through the previous step's spikes.
struct LifParams {
    float decay = 0.5f;
    float v_th = 0.9f;
    float surrogate_slope = 25.0f;

    void validate() const {
        if (!(decay > 0.0f && decay < 1.0f)) throw ConfigError("LifParams: decay must be in (0,1)");
        if (!(v_th > 0.0f)) throw ConfigError("LifParams: v_th must be positive");
        if (!(surrogate_slope > 0.0f)) throw ConfigError("LifParams: surrogate_slope must be positive");
    }
};

/// Per-layer neuron state: membrane potentials and the previous step's
/// spikes (zeros at t = 0).
struct LifState {
    Tensor u;
    Tensor s_prev;

    static LifState zeros(const std::vector<std::size_t>& shape) {
        return LifState{Tensor(shape), Tensor(shape)};
    }
};

/// One membrane update:
///   u' = decay*u + input_current [+ recurrent drive] - s_prev*v_th
///   spike = 1 where u' > v_th.
/// The optional recurrent weights are dense [n x n] (rank-2, applied as a
/// matrix-vector product) or per-neuron (rank-1, elementwise); absent for FF
/// neurons. Returns the new spikes; the state is advanced in place.
Tensor lif_step(LifState& state, const Tensor& input_current, const LifParams& params,
                const Tensor* recurrent = nullptr);

/// Fast-sigmoid surrogate derivative 1/(1 + slope*|u - v_th|)^2; peak 1 at
/// the threshold, even around it.
Tensor surrogate_grad(const Tensor& u, const LifParams& params);

inline float surrogate_grad_scalar(float u, const LifParams& p) {
    const float d = 1.0f + p.surrogate_slope * std::fabs(u - p.v_th);
    return 1.0f / (d * d);
}

/// Smooth stand-in for the spike nonlinearity whose exact derivative is
/// surrogate_grad: 0.5 + (u - v_th)/(1 + slope*|u - v_th|). Used by the
/// smoothed forward mode that gradient checks differentiate through.
Tensor smooth_spike(const Tensor& u, const LifParams& params);

inline float smooth_spike_scalar(float u, const LifParams& p) {
    const float x = u - p.v_th;
    return 0.5f + x / (1.0f + p.surrogate_slope * std::fabs(x));
}

/// Mean over the leading (time) axis of a [T x ...] spike train.
Tensor firing_rate(const Tensor& spike_train);

}  // namespace snn
