#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "voxkit/tensor.hpp"

namespace voxkit {

struct OptimConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t block_size = 256;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("optimizer lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("optimizer betas must lie in [0,1)");
        if (!(eps > 0.0)) throw ConfigError("optimizer eps must be positive");
        if (block_size < 1) throw ConfigError("block_size must be >= 1");
    }
};

inline int64_t block_count(int64_t n, int64_t block_size) {
    return (n + block_size - 1) / block_size;
}

// Blockwise symmetric absmax quantization to signed 8-bit codes. Per block:
// scale = max|x|, code = round_half_away_from_zero(x/scale * 127) clipped to
// [-127, 127]; an all-zero block gets scale 0 and zero codes.
inline void quantize_block(std::span<const float> x, int64_t block_size,
                           std::vector<int8_t>& codes, std::vector<float>& scales) {
    const int64_t n = int64_t(x.size());
    const int64_t nb = block_count(n, block_size);
    codes.resize(size_t(n));
    scales.resize(size_t(nb));
    for (int64_t b = 0; b < nb; ++b) {
        const int64_t lo = b * block_size;
        const int64_t hi = std::min(n, lo + block_size);
        float amax = 0.0f;
        for (int64_t i = lo; i < hi; ++i) {
            const float v = x[size_t(i)];
            if (!std::isfinite(v)) throw NumericError("quantize_block: non-finite input");
            amax = std::max(amax, std::fabs(v));
        }
        scales[size_t(b)] = amax;
        if (amax == 0.0f) {
            for (int64_t i = lo; i < hi; ++i) codes[size_t(i)] = 0;
            continue;
        }
        const float s = 127.0f / amax;
        for (int64_t i = lo; i < hi; ++i) {
            long q = std::lround(double(x[size_t(i)]) * s);  // rounds half away from zero
            if (q > 127) q = 127;
            if (q < -127) q = -127;
            codes[size_t(i)] = int8_t(q);
        }
    }
}

inline std::vector<float> dequantize_block(std::span<const int8_t> codes,
                                           std::span<const float> scales, int64_t block_size) {
    std::vector<float> out(codes.size());
    for (size_t i = 0; i < codes.size(); ++i)
        out[i] = float(codes[i]) / 127.0f * scales[size_t(int64_t(i) / block_size)];
    return out;
}

struct Fp32State {
    std::vector<float> m, v;
    int64_t step_count = 0;
};

struct Quantized8State {
    std::vector<int8_t> m_codes, v_codes;
    std::vector<float> m_scales, v_scales;
    int64_t block_size = 256;
    int64_t step_count = 0;

    static Quantized8State zeros(int64_t n, int64_t block_size) {
        Quantized8State st;
        st.block_size = block_size;
        st.m_codes.assign(size_t(n), 0);
        st.v_codes.assign(size_t(n), 0);
        st.m_scales.assign(size_t(block_count(n, block_size)), 0.0f);
        st.v_scales.assign(size_t(block_count(n, block_size)), 0.0f);
        return st;
    }

    int64_t bytes() const {
        return int64_t(m_codes.size() + v_codes.size()) +
               int64_t((m_scales.size() + v_scales.size()) * sizeof(float));
    }
};

namespace detail {
// One Adam element update in fp32; both optimizer paths share it so the
// block_size == 1 trajectories coincide.
inline void adam_scalar(float& p, float g, float& m, float& v, float lr, float b1, float b2,
                        float eps, float bc1, float bc2) {
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g * g;
    const float mhat = m / bc1;
    const float vhat = v / bc2;
    p -= lr * mhat / (std::sqrt(vhat) + eps);
}
}  // namespace detail

inline void adam_step_fp32(std::span<float> params, std::span<const float> grads,
                           Fp32State& state, const OptimConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw ShapeError("adam_step_fp32: size mismatch");
    state.step_count += 1;
    const float bc1 = float(1.0 - std::pow(cfg.beta1, double(state.step_count)));
    const float bc2 = float(1.0 - std::pow(cfg.beta2, double(state.step_count)));
    const float lr = float(cfg.lr), b1 = float(cfg.beta1), b2 = float(cfg.beta2),
                eps = float(cfg.eps);
    for (size_t i = 0; i < params.size(); ++i)
        detail::adam_scalar(params[i], grads[i], state.m[i], state.v[i], lr, b1, b2, eps, bc1,
                            bc2);
}

// Dequantize both moments, run the fp32 Adam arithmetic, requantize.
// Parameters stay full precision; only the moment states are 8-bit.
inline void adam_step_8bit(std::span<float> params, std::span<const float> grads,
                           Quantized8State& state, const OptimConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m_codes.size())
        throw ShapeError("adam_step_8bit: size mismatch");
    state.step_count += 1;
    const float bc1 = float(1.0 - std::pow(cfg.beta1, double(state.step_count)));
    const float bc2 = float(1.0 - std::pow(cfg.beta2, double(state.step_count)));
    const float lr = float(cfg.lr), b1 = float(cfg.beta1), b2 = float(cfg.beta2),
                eps = float(cfg.eps);
    std::vector<float> m = dequantize_block(state.m_codes, state.m_scales, state.block_size);
    std::vector<float> v = dequantize_block(state.v_codes, state.v_scales, state.block_size);
    for (auto& vv : v) vv = std::max(vv, 0.0f);  // second moment stays non-negative
    for (size_t i = 0; i < params.size(); ++i)
        detail::adam_scalar(params[i], grads[i], m[i], v[i], lr, b1, b2, eps, bc1, bc2);
    quantize_block(m, state.block_size, state.m_codes, state.m_scales);
    quantize_block(v, state.block_size, state.v_codes, state.v_scales);
}

// Optimizer over a parameter group; one state per tensor, steps independent.
class AdamFp32 {
public:
    explicit AdamFp32(OptimConfig cfg) : cfg_(cfg) { cfg.validate(); }

    template <typename P>
    void step(const std::vector<P*>& params) {
        ensure_states(params);
        for (size_t t = 0; t < params.size(); ++t)
            adam_step_fp32(std::span<float>(params[t]->data),
                           std::span<const float>(params[t]->grad), states_[t], cfg_);
    }

    int64_t state_bytes() const {
        int64_t total = 0;
        for (const auto& s : states_) total += int64_t((s.m.size() + s.v.size()) * sizeof(float));
        return total;
    }

    const OptimConfig& config() const { return cfg_; }

private:
    template <typename P>
    void ensure_states(const std::vector<P*>& params) {
        if (!states_.empty()) return;
        states_.resize(params.size());
        for (size_t t = 0; t < params.size(); ++t) {
            states_[t].m.assign(params[t]->data.size(), 0.0f);
            states_[t].v.assign(params[t]->data.size(), 0.0f);
        }
    }

    OptimConfig cfg_;
    std::vector<Fp32State> states_;
};

class Adam8bit {
public:
    explicit Adam8bit(OptimConfig cfg) : cfg_(cfg) { cfg.validate(); }

    template <typename P>
    void step(const std::vector<P*>& params) {
        ensure_states(params);
        for (size_t t = 0; t < params.size(); ++t)
            adam_step_8bit(std::span<float>(params[t]->data),
                           std::span<const float>(params[t]->grad), states_[t], cfg_);
    }

    int64_t state_bytes() const {
        int64_t total = 0;
        for (const auto& s : states_) total += s.bytes();
        return total;
    }

    const OptimConfig& config() const { return cfg_; }
    const std::vector<Quantized8State>& states() const { return states_; }

    // Versioned binary checkpoint: header (magic, version, block_size,
    // step_count), then per-tensor code and scale arrays in declaration order.
    void save_checkpoint(std::ostream& os) const {
        write_raw(os, kMagic);
        write_raw(os, kVersion);
        write_raw(os, uint64_t(cfg_.block_size));
        write_raw(os, uint64_t(states_.empty() ? 0 : states_.front().step_count));
        write_raw(os, uint64_t(states_.size()));
        for (const auto& s : states_) {
            write_raw(os, uint64_t(s.m_codes.size()));
            os.write(reinterpret_cast<const char*>(s.m_codes.data()),
                     std::streamsize(s.m_codes.size()));
            os.write(reinterpret_cast<const char*>(s.v_codes.data()),
                     std::streamsize(s.v_codes.size()));
            write_raw(os, uint64_t(s.m_scales.size()));
            os.write(reinterpret_cast<const char*>(s.m_scales.data()),
                     std::streamsize(s.m_scales.size() * sizeof(float)));
            os.write(reinterpret_cast<const char*>(s.v_scales.data()),
                     std::streamsize(s.v_scales.size() * sizeof(float)));
        }
        if (!os) throw StateError("checkpoint write failed");
    }

    void load_checkpoint(std::istream& is) {
        uint32_t magic = 0, version = 0;
        read_raw(is, magic);
        read_raw(is, version);
        if (magic != kMagic) throw StateError("checkpoint: bad magic");
        if (version != kVersion) throw StateError("checkpoint: unsupported version");
        uint64_t block = 0, steps = 0, count = 0;
        read_raw(is, block);
        read_raw(is, steps);
        read_raw(is, count);
        if (int64_t(block) != cfg_.block_size)
            throw StateError("checkpoint: block_size mismatch");
        states_.assign(size_t(count), {});
        for (auto& s : states_) {
            s.block_size = int64_t(block);
            s.step_count = int64_t(steps);
            uint64_t n = 0;
            read_raw(is, n);
            s.m_codes.resize(size_t(n));
            s.v_codes.resize(size_t(n));
            is.read(reinterpret_cast<char*>(s.m_codes.data()), std::streamsize(n));
            is.read(reinterpret_cast<char*>(s.v_codes.data()), std::streamsize(n));
            uint64_t nb = 0;
            read_raw(is, nb);
            s.m_scales.resize(size_t(nb));
            s.v_scales.resize(size_t(nb));
            is.read(reinterpret_cast<char*>(s.m_scales.data()),
                    std::streamsize(nb * sizeof(float)));
            is.read(reinterpret_cast<char*>(s.v_scales.data()),
                    std::streamsize(nb * sizeof(float)));
        }
        if (!is) throw StateError("checkpoint: truncated blob");
    }

private:
    template <typename P>
    void ensure_states(const std::vector<P*>& params) {
        if (!states_.empty()) return;
        states_.reserve(params.size());
        for (const auto* p : params)
            states_.push_back(Quantized8State::zeros(int64_t(p->data.size()), cfg_.block_size));
    }

    template <typename V>
    static void write_raw(std::ostream& os, const V& v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(V));
    }
    template <typename V>
    static void read_raw(std::istream& is, V& v) {
        is.read(reinterpret_cast<char*>(&v), sizeof(V));
        if (!is) throw StateError("checkpoint: truncated blob");
    }

    static constexpr uint32_t kMagic = 0x384F4B56;  // "VKO8"
    static constexpr uint32_t kVersion = 1;

    OptimConfig cfg_;
    std::vector<Quantized8State> states_;
};

}  // namespace voxkit
