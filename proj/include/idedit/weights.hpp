#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "idedit/autograd.hpp"

namespace idedit {

// A named float32 parameter tensor. Arithmetic happens in double; stored
// values are always float32 so checkpoints round-trip bit-exactly.
struct Param {
    std::vector<int> shape;
    std::vector<float> value;

    std::size_t size() const { return value.size(); }
};

using Weights = std::map<std::string, Param>;
using VarMap = std::map<std::string, ag::Var>;

// Lifts every parameter into a graph leaf.
VarMap bind_params(const Weights& weights, bool trainable);

// FNV-1a over names, shapes and raw float bytes.
std::uint64_t weights_hash(const Weights& weights);

std::size_t parameter_count(const Weights& weights);

// He-style normal initialization helpers.
Param normal_param(std::vector<int> shape, double stddev, std::mt19937_64& rng);
Param constant_param(std::vector<int> shape, float value);

// Adam with bias correction over a Weights map.
class Adam {
public:
    explicit Adam(double step_size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(step_size), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one update to every parameter whose bound leaf received a gradient.
    void step(Weights& weights, const VarMap& bound);

    int steps_taken() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace idedit
