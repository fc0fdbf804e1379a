#pragma once

#include <functional>
#include <map>
#include <string>

#include "ea/rng.hpp"
#include "ea/tensor.hpp"

namespace ea {

struct Param {
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    explicit Param(Tensor v)
        : value(std::move(v)), grad(value.shape), adam_m(value.shape), adam_v(value.shape) {}
    Param() = default;
};

// Named trainable tensors plus optimizer state. `buffers` holds non-trainable
// state (batch-norm running statistics). std::map keeps iteration order
// deterministic, which fixes the parameter order in checkpoints and the
// coordinate order in gradient checks.
struct ParameterSet {
    std::map<std::string, Param> params;
    std::map<std::string, Tensor> buffers;
    long step_count = 0;

    Param& add(const std::string& name, Tensor value);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) > 0; }
    void zero_grads();
    long long total_values() const;
};

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update with bias correction (t = step_count after increment).
// Gradients are zeroed after the step.
void adam_step(ParameterSet& ps, const AdamConfig& cfg);

// Initializers. All draws come from the supplied generator in argument order.
Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);
// Square orthogonal matrix via Gram-Schmidt on a Gaussian draw.
Tensor orthogonal(int n, Rng& rng);

// Central finite differences against the analytic gradient, every coordinate
// of every parameter. `f` evaluates the loss AND populates gradients (forward
// + backward); it must be deterministic (dropout in infer mode, fixed seeds).
// Returns max over coordinates of |a-n| / max(1e-8, |a|+|n|).
double finite_diff_check(const std::function<double(ParameterSet&)>& f, ParameterSet& ps,
                         double eps = 1e-5);

}  // namespace ea
