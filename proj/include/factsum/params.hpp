#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "factsum/mat.hpp"
#include "factsum/rng.hpp"

namespace factsum {

using ParamId = std::size_t;

struct Param {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = true;
};

// Named parameter collection with stable insertion order. Modules register
// their tensors under dotted prefixes ("fusion.wq", "policy.dec0.attn.wk"),
// which is also what stage freezing and checkpoint indices key on.
class ParamSet {
public:
    ParamId add(std::string name, Mat value, bool trainable = true);

    Param& at(ParamId id) { return params_[id]; }
    const Param& at(ParamId id) const { return params_[id]; }
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;

    std::size_t count() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grads();
    bool grads_finite() const;
    double grad_l2() const;

    // Copies values (shapes must already match). Used for reference snapshots.
    void copy_values_from(const ParamSet& other);

    // Little-endian float32 blob in insertion order; the on-disk checkpoint
    // format and the basis for parameter hashes.
    std::vector<std::uint8_t> to_blob() const;
    void from_blob(const std::vector<std::uint8_t>& blob);
    std::string blob_sha256() const;
    std::string blob_sha256_prefix(const std::string& prefix) const;

    template <typename Fn>
    void for_each(Fn&& fn) {
        for (auto& p : params_) fn(p);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& p : params_) fn(p);
    }

private:
    std::deque<Param> params_;
    std::unordered_map<std::string, ParamId> by_name_;
};

// Initialization helpers. Fusion weights use the spec'd +/-0.02 uniform noise;
// transformer weights use fan-scaled uniform.
Mat init_uniform(Rng& rng, int rows, int cols, double half_width);
Mat init_xavier(Rng& rng, int rows, int cols);

struct SgdConfig {
    double lr = 1e-2;
    double momentum = 0.0;
};

// Plain gradient descent with optional momentum, applied per named parameter.
class SgdOptimizer {
public:
    explicit SgdOptimizer(SgdConfig cfg) : cfg_(cfg) {}

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }

    // Steps every trainable parameter accepted by `want` (nullptr = all).
    void step(ParamSet& params, const std::function<bool(const Param&)>& want = nullptr);

private:
    SgdConfig cfg_;
    std::unordered_map<std::string, Mat> velocity_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

    void step(ParamSet& params, const std::function<bool(const Param&)>& want = nullptr);

private:
    AdamConfig cfg_;
    std::unordered_map<std::string, Mat> m_;
    std::unordered_map<std::string, Mat> v_;
    std::int64_t t_ = 0;
};

} // namespace factsum
