#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "voxkit/tensor.hpp"

namespace voxkit {

enum class Activation { relu, tanh_fn };
enum class Reduce { max, mean };

template <typename T>
struct LinearLayer {
    Value<T> weight;  // out x in, row-major
    Value<T> bias;    // out, zero-initialized
    int64_t in = 0;
    int64_t out = 0;

    LinearLayer() = default;
    LinearLayer(int64_t in_dim, int64_t out_dim, std::mt19937_64& eng) : in(in_dim), out(out_dim) {
        if (in_dim < 1 || out_dim < 1) throw ConfigError("linear layer width < 1");
        weight = Value<T>(size_t(in_dim) * size_t(out_dim));
        bias = Value<T>(size_t(out_dim));
        weight.init_uniform(eng, T(1.0 / std::sqrt(double(in_dim))));
    }
};

// Row-wise MLP with shared parameters: every input row is encoded the same
// way. Hidden layers carry the activation plus inverted dropout (train mode
// only); the final layer is linear.
template <typename T>
class Mlp {
public:
    struct Cache {
        Matrix<T> input;
        std::vector<Matrix<T>> pre;           // pre-activation per layer
        std::vector<Matrix<T>> hidden_out;    // per hidden layer, after act+dropout
        std::vector<std::vector<T>> drop_scale;  // per hidden layer; empty => identity
    };

    Mlp() = default;
    Mlp(int64_t input_dim, const std::vector<int64_t>& hidden, int64_t output_dim,
        Activation act, double dropout_rate, std::mt19937_64& eng)
        : activation_(act), dropout_(dropout_rate) {
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout rate must lie in [0,1)");
        int64_t prev = input_dim;
        for (int64_t h : hidden) {
            layers_.emplace_back(prev, h, eng);
            prev = h;
        }
        layers_.emplace_back(prev, output_dim, eng);
    }

    int64_t input_dim() const { return layers_.front().in; }
    int64_t output_dim() const { return layers_.back().out; }
    double dropout_rate() const { return dropout_; }
    Activation activation() const { return activation_; }
    const std::vector<LinearLayer<T>>& layers() const { return layers_; }

    std::vector<Value<T>*> params() {
        std::vector<Value<T>*> ps;
        for (auto& l : layers_) {
            ps.push_back(&l.weight);
            ps.push_back(&l.bias);
        }
        return ps;
    }

    Matrix<T> forward(const Matrix<T>& x, Cache* cache = nullptr, bool training = false,
                      std::mt19937_64* drop_eng = nullptr) const {
        if (x.cols != input_dim())
            throw ShapeError("mlp input width " + std::to_string(x.cols) + " != " +
                             std::to_string(input_dim()));
        if (cache) {
            cache->input = x;
            cache->pre.clear();
            cache->hidden_out.clear();
            cache->drop_scale.clear();
        }
        Matrix<T> cur = x;
        const size_t n_layers = layers_.size();
        for (size_t l = 0; l < n_layers; ++l) {
            Matrix<T> pre = linear_forward(layers_[l], cur);
            if (cache) cache->pre.push_back(pre);
            if (l + 1 == n_layers) {
                cur = std::move(pre);
                break;
            }
            Matrix<T> h = pre;
            apply_activation(h);
            std::vector<T> scale;
            if (training && dropout_ > 0.0) {
                if (!drop_eng) throw StateError("training forward needs a dropout engine");
                scale.resize(h.data.size());
                std::bernoulli_distribution keep(1.0 - dropout_);
                const T inv = T(1.0 / (1.0 - dropout_));
                for (size_t i = 0; i < h.data.size(); ++i) {
                    scale[i] = keep(*drop_eng) ? inv : T(0);
                    h.data[i] *= scale[i];
                }
            }
            if (cache) {
                cache->hidden_out.push_back(h);
                cache->drop_scale.push_back(std::move(scale));
            }
            cur = std::move(h);
        }
        return cur;
    }

    // Returns grad wrt the input matrix; accumulates parameter grads.
    Matrix<T> backward(const Cache& cache, const Matrix<T>& grad_out) {
        Matrix<T> g = grad_out;
        for (size_t li = layers_.size(); li-- > 0;) {
            LinearLayer<T>& lay = layers_[li];
            const Matrix<T>& x_in = (li == 0) ? cache.input : cache.hidden_out[li - 1];
            if (g.cols != lay.out || x_in.rows != g.rows)
                throw ShapeError("mlp backward shape mismatch");
            for (int64_t r = 0; r < g.rows; ++r) {
                const T* gr = g.row(r);
                const T* xr = x_in.row(r);
                for (int64_t o = 0; o < lay.out; ++o) {
                    lay.bias.grad[size_t(o)] += gr[o];
                    T* wg = lay.weight.grad.data() + size_t(o) * lay.in;
                    for (int64_t i = 0; i < lay.in; ++i) wg[i] += gr[o] * xr[i];
                }
            }
            Matrix<T> g_prev(g.rows, lay.in);
            for (int64_t r = 0; r < g.rows; ++r) {
                const T* gr = g.row(r);
                T* pr = g_prev.row(r);
                for (int64_t o = 0; o < lay.out; ++o) {
                    const T* wr = lay.weight.data.data() + size_t(o) * lay.in;
                    for (int64_t i = 0; i < lay.in; ++i) pr[i] += gr[o] * wr[i];
                }
            }
            if (li == 0) return g_prev;
            const auto& scale = cache.drop_scale[li - 1];
            if (!scale.empty())
                for (size_t i = 0; i < g_prev.data.size(); ++i) g_prev.data[i] *= scale[i];
            const Matrix<T>& pre = cache.pre[li - 1];
            for (size_t i = 0; i < g_prev.data.size(); ++i)
                g_prev.data[i] *= activation_deriv(pre.data[i]);
            g = std::move(g_prev);
        }
        return g;  // unreachable for non-empty layer list
    }

private:
    Matrix<T> linear_forward(const LinearLayer<T>& lay, const Matrix<T>& x) const {
        Matrix<T> out(x.rows, lay.out);
        for (int64_t r = 0; r < x.rows; ++r) {
            const T* xr = x.row(r);
            T* orow = out.row(r);
            for (int64_t o = 0; o < lay.out; ++o) {
                const T* wr = lay.weight.data.data() + size_t(o) * lay.in;
                T acc = lay.bias.data[size_t(o)];
                for (int64_t i = 0; i < lay.in; ++i) acc += wr[i] * xr[i];
                orow[o] = acc;
            }
        }
        return out;
    }

    void apply_activation(Matrix<T>& m) const {
        if (activation_ == Activation::relu) {
            for (auto& v : m.data) v = v > T(0) ? v : T(0);
        } else {
            for (auto& v : m.data) v = std::tanh(v);
        }
    }

    T activation_deriv(T pre) const {
        if (activation_ == Activation::relu) return pre > T(0) ? T(1) : T(0);
        const T t = std::tanh(pre);
        return T(1) - t * t;
    }

    std::vector<LinearLayer<T>> layers_;
    Activation activation_ = Activation::relu;
    double dropout_ = 0.0;
};

}  // namespace voxkit
