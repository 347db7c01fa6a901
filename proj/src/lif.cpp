#include "snn/lif.hpp"

#include <cmath>

#include "snn/kernels.hpp"

namespace snn {

Tensor lif_step(LifState& state, const Tensor& input_current, const LifParams& params,
                const Tensor* recurrent) {
    params.validate();
    if (!state.u.same_shape(input_current) || !state.s_prev.same_shape(input_current))
        throw ShapeError("lif_step: state and input_current shapes disagree");
    const std::size_t n = state.u.size();

    Tensor drive(input_current.shape());
    if (recurrent) {
        if (recurrent->rank() == 2) {
            if (recurrent->dim(0) != n || recurrent->dim(1) != n)
                throw ShapeError("lif_step: dense recurrent weights must be [n x n]");
            std::vector<double> acc(n, 0.0);
            kern::matvec_acc(acc.data(), recurrent->data(), state.s_prev.data(), n, n,
                             /*skip_zero_x=*/true);
            kern::round_to_f32(acc.data(), drive.data(), n);
        } else if (recurrent->rank() == 1 && recurrent->size() == n) {
            for (std::size_t i = 0; i < n; ++i) drive[i] = (*recurrent)[i] * state.s_prev[i];
        } else {
            throw ShapeError("lif_step: recurrent weights must be [n x n] or [n]");
        }
    }

    Tensor spikes(input_current.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const float u_new = params.decay * state.u[i] + input_current[i] + drive[i] -
                            state.s_prev[i] * params.v_th;
        state.u[i] = u_new;
        spikes[i] = u_new > params.v_th ? 1.0f : 0.0f;
    }
    state.s_prev = spikes;
    return spikes;
}

Tensor surrogate_grad(const Tensor& u, const LifParams& params) {
    Tensor out(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = surrogate_grad_scalar(u[i], params);
    return out;
}

Tensor smooth_spike(const Tensor& u, const LifParams& params) {
    Tensor out(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = smooth_spike_scalar(u[i], params);
    return out;
}

Tensor firing_rate(const Tensor& spike_train) {
    if (spike_train.rank() < 2)
        throw ShapeError("firing_rate expects a [T x ...] train");
    const std::size_t t_len = spike_train.dim(0);
    const std::size_t n = spike_train.size() / t_len;
    std::vector<std::size_t> shape(spike_train.shape().begin() + 1, spike_train.shape().end());
    Tensor out(shape);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) s += spike_train[t * n + i];
        out[i] = static_cast<float>(s / static_cast<double>(t_len));
    }
    return out;
}

}  // namespace snn
