#include "ea/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ea {

Param& ParameterSet::add(const std::string& name, Tensor value) {
    if (params.count(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    return params.emplace(name, Param(std::move(value))).first->second;
}

Param& ParameterSet::at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("ParameterSet: unknown parameter " + name);
    return it->second;
}

const Param& ParameterSet::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("ParameterSet: unknown parameter " + name);
    return it->second;
}

void ParameterSet::zero_grads() {
    for (auto& [name, p] : params) p.grad.fill(0.0);
}

long long ParameterSet::total_values() const {
    long long n = 0;
    for (const auto& [name, p] : params) n += p.value.numel();
    return n;
}

void adam_step(ParameterSet& ps, const AdamConfig& cfg) {
    ps.step_count += 1;
    const double t = static_cast<double>(ps.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : ps.params) {
        for (int i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad.at(i);
            p.adam_m.at(i) = cfg.beta1 * p.adam_m.at(i) + (1.0 - cfg.beta1) * g;
            p.adam_v.at(i) = cfg.beta2 * p.adam_v.at(i) + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.adam_m.at(i) / bc1;
            const double vhat = p.adam_v.at(i) / bc2;
            p.value.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        p.grad.fill(0.0);
    }
}

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(std::move(shape));
    for (double& e : t.v) e = rng.uniform(-limit, limit);
    return t;
}

Tensor orthogonal(int n, Rng& rng) {
    // Gaussian draw (Box-Muller), then modified Gram-Schmidt.
    Tensor a({n, n});
    for (int i = 0; i < n * n; i += 2) {
        double u1 = rng.uniform();
        while (u1 <= 0.0) u1 = rng.uniform();
        const double u2 = rng.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        a.at(i) = r * std::cos(2.0 * M_PI * u2);
        if (i + 1 < n * n) a.at(i + 1) = r * std::sin(2.0 * M_PI * u2);
    }
    for (int c = 0; c < n; ++c) {
        for (int p = 0; p < c; ++p) {
            double dot = 0.0;
            for (int r = 0; r < n; ++r) dot += a.at(r, c) * a.at(r, p);
            for (int r = 0; r < n; ++r) a.at(r, c) -= dot * a.at(r, p);
        }
        double norm = 0.0;
        for (int r = 0; r < n; ++r) norm += a.at(r, c) * a.at(r, c);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("orthogonal: degenerate draw");
        for (int r = 0; r < n; ++r) a.at(r, c) /= norm;
    }
    return a;
}

double finite_diff_check(const std::function<double(ParameterSet&)>& f, ParameterSet& ps,
                         double eps) {
    ps.zero_grads();
    (void)f(ps);
    std::map<std::string, Tensor> analytic;
    for (const auto& [name, p] : ps.params) analytic.emplace(name, p.grad);

    double worst = 0.0;
    for (auto& [name, p] : ps.params) {
        const Tensor& a = analytic.at(name);
        for (int i = 0; i < p.value.numel(); ++i) {
            const double orig = p.value.at(i);
            p.value.at(i) = orig + eps;
            ps.zero_grads();
            const double lp = f(ps);
            p.value.at(i) = orig - eps;
            ps.zero_grads();
            const double lm = f(ps);
            p.value.at(i) = orig;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double diff = std::fabs(a.at(i) - numeric);
            // Central differences bottom out at roughly ulp(loss) / (2 * eps);
            // below that the numeric side is rounding noise, not signal. A real
            // pullback bug produces a discrepancy on the scale of the gradient
            // itself, so treat sub-noise absolute differences as agreement.
            const double noise = std::max(std::fabs(lp), std::fabs(lm)) * 1e-14 / eps;
            if (diff <= std::max(1e-10, noise)) continue;
            const double rel = diff / std::max(1e-8, std::fabs(a.at(i)) + std::fabs(numeric));
            worst = std::max(worst, rel);
        }
    }
    ps.zero_grads();
    return worst;
}

}  // namespace ea
