#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "soli/error.hpp"
#include "soli/rng.hpp"
#include "soli/tensor.hpp"

namespace soli {

template <typename T>
struct Param {
    Tensor<T> value; // gradient lives in value.grad
    Tensor<T> m;     // Adam first moment
    Tensor<T> v;     // Adam second moment
};

// Named, insertion-ordered parameter tensors with paired gradient buffers
// and per-parameter optimizer state. Shapes are fixed at registration.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, std::vector<int> shape) {
        if (index_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
        index_.emplace(name, names_.size());
        names_.push_back(name);
        params_.emplace_back();
        Param<T>& p = params_.back();
        p.value = Tensor<T>(shape);
        p.value.ensure_grad();
        p.m = Tensor<T>(shape);
        p.v = Tensor<T>(std::move(shape));
        return p.value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Param<T>& param(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArgumentError("unknown parameter: " + name);
        return params_[it->second];
    }
    const Param<T>& param(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArgumentError("unknown parameter: " + name);
        return params_[it->second];
    }

    Tensor<T>& value(const std::string& name) { return param(name).value; }
    const Tensor<T>& value(const std::string& name) const { return param(name).value; }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t count() const { return names_.size(); }
    Param<T>& at(std::size_t i) { return params_[i]; }
    const Param<T>& at(std::size_t i) const { return params_[i]; }

    void zero_grads() {
        for (auto& p : params_) p.value.zero_grad();
    }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (auto& p : params_) n += p.value.numel();
        return n;
    }

    // Optimizer step counter; serialized with checkpoints.
    std::uint64_t step_count = 0;

    template <typename To>
    ParamStore<To> cast() const {
        ParamStore<To> out;
        for (std::size_t i = 0; i < names_.size(); ++i) {
            auto& dst = out.add(names_[i], params_[i].value.shape);
            for (std::size_t k = 0; k < dst.data.size(); ++k)
                dst.data[k] = static_cast<To>(params_[i].value.data[k]);
            out.param(names_[i]).m = tensor_cast<To>(params_[i].m);
            out.param(names_[i]).v = tensor_cast<To>(params_[i].v);
        }
        out.step_count = step_count;
        return out;
    }

private:
    std::vector<std::string> names_;
    std::vector<Param<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Glorot-uniform init for weights, zeros for biases (names ending in ".b").
// Draw order follows registration order, so a seed pins every value.
template <typename T>
void init_params(ParamStore<T>& store, SplitMix64& rng) {
    for (const auto& name : store.names()) {
        auto& t = store.value(name);
        if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
            std::fill(t.data.begin(), t.data.end(), T(0));
            continue;
        }
        std::size_t fan_in = 1, fan_out = t.shape.empty() ? 1 : t.shape[0];
        for (std::size_t d = 1; d < t.shape.size(); ++d)
            fan_in *= static_cast<std::size_t>(t.shape[d]);
        if (t.shape.size() > 2) {
            // conv [oc, ic, kh, kw]: receptive field counts toward both fans
            std::size_t rf = 1;
            for (std::size_t d = 2; d < t.shape.size(); ++d)
                rf *= static_cast<std::size_t>(t.shape[d]);
            fan_out *= rf;
        }
        const double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
        for (auto& w : t.data)
            w = static_cast<T>((2.0 * rng.u01() - 1.0) * bound);
    }
}

// One Adam update over the parameters selected by `filter`. Skipped
// parameters are untouched entirely: values, gradients and moments.
// A non-finite gradient aborts the step before anything is modified.
template <typename T>
void adam_step(ParamStore<T>& store, double lr,
               const std::function<bool(const std::string&)>& filter = {},
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    for (std::size_t i = 0; i < store.count(); ++i) {
        if (filter && !filter(store.names()[i])) continue;
        for (T g : store.at(i).value.grad)
            if (!std::isfinite(static_cast<double>(g)))
                throw Error("adam step " + std::to_string(store.step_count + 1) +
                            " aborted: non-finite gradient in '" + store.names()[i] + "'");
    }

    store.step_count += 1;
    const double t = static_cast<double>(store.step_count);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);

    for (std::size_t i = 0; i < store.count(); ++i) {
        if (filter && !filter(store.names()[i])) continue;
        Param<T>& p = store.at(i);
        for (std::size_t k = 0; k < p.value.data.size(); ++k) {
            const double g = static_cast<double>(p.value.grad[k]);
            const double m = beta1 * p.m.data[k] + (1.0 - beta1) * g;
            const double v = beta2 * p.v.data[k] + (1.0 - beta2) * g * g;
            p.m.data[k] = static_cast<T>(m);
            p.v.data[k] = static_cast<T>(v);
            p.value.data[k] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
        }
    }
}

} // namespace soli
