#include "factsum/params.hpp"

#include <cmath>
#include <cstring>

#include "factsum/error.hpp"
#include "factsum/sha256.hpp"

namespace factsum {

ParamId ParamSet::add(std::string name, Mat value, bool trainable) {
    if (by_name_.count(name))
        throw Error(ErrorKind::Config, "duplicate parameter name: " + name);
    Param p;
    p.name = std::move(name);
    p.grad = Mat::zeros(value.rows, value.cols);
    p.value = std::move(value);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    const ParamId id = params_.size() - 1;
    by_name_.emplace(params_.back().name, id);
    return id;
}

Param* ParamSet::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
}

const Param* ParamSet::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamSet::zero_grads() {
    for (auto& p : params_) p.grad.fill(0.0);
}

bool ParamSet::grads_finite() const {
    for (const auto& p : params_)
        if (!p.grad.all_finite()) return false;
    return true;
}

double ParamSet::grad_l2() const {
    double s = 0.0;
    for (const auto& p : params_)
        for (double g : p.grad.v) s += g * g;
    return std::sqrt(s);
}

void ParamSet::copy_values_from(const ParamSet& other) {
    if (other.params_.size() != params_.size())
        throw Error(ErrorKind::Config, "parameter set size mismatch in copy_values_from");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].value.same_shape(other.params_[i].value) || params_[i].name != other.params_[i].name)
            throw Error(ErrorKind::Config, "parameter mismatch at " + params_[i].name);
        params_[i].value.v = other.params_[i].value.v;
    }
}

namespace {
void append_f32_le(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<std::uint8_t>(bits));
    out.push_back(static_cast<std::uint8_t>(bits >> 8));
    out.push_back(static_cast<std::uint8_t>(bits >> 16));
    out.push_back(static_cast<std::uint8_t>(bits >> 24));
}
float read_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                         (std::uint32_t(p[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}
} // namespace

std::vector<std::uint8_t> ParamSet::to_blob() const {
    std::vector<std::uint8_t> out;
    out.reserve(scalar_count() * 4);
    for (const auto& p : params_)
        for (double x : p.value.v) append_f32_le(out, static_cast<float>(x));
    return out;
}

void ParamSet::from_blob(const std::vector<std::uint8_t>& blob) {
    if (blob.size() != scalar_count() * 4)
        throw Error(ErrorKind::Format, "parameter blob size mismatch",
                    "expected " + std::to_string(scalar_count() * 4) + " bytes, got " + std::to_string(blob.size()));
    const std::uint8_t* p = blob.data();
    for (auto& prm : params_)
        for (double& x : prm.value.v) {
            x = static_cast<double>(read_f32_le(p));
            p += 4;
        }
}

std::string ParamSet::blob_sha256() const {
    const auto blob = to_blob();
    return sha256_hex(blob.data(), blob.size());
}

std::string ParamSet::blob_sha256_prefix(const std::string& prefix) const {
    Sha256 h;
    for (const auto& p : params_) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        std::vector<std::uint8_t> buf;
        buf.reserve(p.value.size() * 4);
        for (double x : p.value.v) append_f32_le(buf, static_cast<float>(x));
        h.update(p.name);
        h.update(buf.data(), buf.size());
    }
    auto d = h.digest();
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (std::uint8_t b : d) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

Mat init_uniform(Rng& rng, int rows, int cols, double half_width) {
    Mat m(rows, cols);
    for (double& x : m.v) x = rng.uniform(-half_width, half_width);
    return m;
}

Mat init_xavier(Rng& rng, int rows, int cols) {
    const double s = std::sqrt(6.0 / (rows + cols));
    return init_uniform(rng, rows, cols, s);
}

void SgdOptimizer::step(ParamSet& params, const std::function<bool(const Param&)>& want) {
    params.for_each([&](Param& p) {
        if (!p.trainable) return;
        if (want && !want(p)) return;
        if (cfg_.momentum != 0.0) {
            auto it = velocity_.find(p.name);
            if (it == velocity_.end()) it = velocity_.emplace(p.name, Mat::zeros(p.value.rows, p.value.cols)).first;
            Mat& vel = it->second;
            for (std::size_t i = 0; i < p.value.v.size(); ++i) {
                vel.v[i] = cfg_.momentum * vel.v[i] + p.grad.v[i];
                p.value.v[i] -= cfg_.lr * vel.v[i];
            }
        } else {
            for (std::size_t i = 0; i < p.value.v.size(); ++i) p.value.v[i] -= cfg_.lr * p.grad.v[i];
        }
    });
}

void AdamOptimizer::step(ParamSet& params, const std::function<bool(const Param&)>& want) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    params.for_each([&](Param& p) {
        if (!p.trainable) return;
        if (want && !want(p)) return;
        auto mit = m_.find(p.name);
        if (mit == m_.end()) mit = m_.emplace(p.name, Mat::zeros(p.value.rows, p.value.cols)).first;
        auto vit = v_.find(p.name);
        if (vit == v_.end()) vit = v_.emplace(p.name, Mat::zeros(p.value.rows, p.value.cols)).first;
        Mat& m = mit->second;
        Mat& v = vit->second;
        for (std::size_t i = 0; i < p.value.v.size(); ++i) {
            const double g = p.grad.v[i];
            m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g;
            v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            p.value.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    });
}

} // namespace factsum
