#include "idedit/weights.hpp"

#include <cmath>
#include <cstring>

namespace idedit {

VarMap bind_params(const Weights& weights, bool trainable) {
    VarMap out;
    for (const auto& [name, p] : weights) {
        Tensor t(p.shape);
        for (std::size_t i = 0; i < p.value.size(); ++i) t.data[i] = p.value[i];
        out.emplace(name, ag::leaf(std::move(t), trainable));
    }
    return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= kFnvPrime;
    }
}

}  // namespace

std::uint64_t weights_hash(const Weights& weights) {
    std::uint64_t h = kFnvOffset;
    for (const auto& [name, p] : weights) {
        fnv(h, name.data(), name.size());
        fnv(h, p.shape.data(), p.shape.size() * sizeof(int));
        fnv(h, p.value.data(), p.value.size() * sizeof(float));
    }
    return h;
}

std::size_t parameter_count(const Weights& weights) {
    std::size_t n = 0;
    for (const auto& [name, p] : weights) n += p.size();
    return n;
}

Param normal_param(std::vector<int> shape, double stddev, std::mt19937_64& rng) {
    Param p{shape, std::vector<float>(Tensor::count(shape))};
    std::normal_distribution<double> dist(0.0, stddev);
    for (float& v : p.value) v = static_cast<float>(dist(rng));
    return p;
}

Param constant_param(std::vector<int> shape, float value) {
    return Param{shape, std::vector<float>(Tensor::count(shape), value)};
}

void Adam::step(Weights& weights, const VarMap& bound) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : weights) {
        auto it = bound.find(name);
        if (it == bound.end() || !it->second.has_grad()) continue;
        const auto& g = it->second.grad().data;
        auto& st = state_[name];
        if (st.m.empty()) {
            st.m.assign(p.size(), 0.0);
            st.v.assign(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
            st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double update = lr_ * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps_);
            p.value[i] = static_cast<float>(static_cast<double>(p.value[i]) - update);
        }
    }
}

}  // namespace idedit
