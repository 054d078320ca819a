// Dense double-precision tensors with reverse-mode autodiff.
//
// A Tensor is a shared handle to a row-major value buffer plus an optional
// gradient buffer of the same shape. Differentiable operations are methods
// on a Tape; each op that touches a grad-requiring input records a backward
// closure. Tape::backward(loss) replays the closures in reverse and leaves
// accumulated gradients on every reachable parameter.
//
// One tape is single-threaded. Independent tapes may run concurrently.

#ifndef PROCATTN_TENSOR_HPP
#define PROCATTN_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "procattn/common.hpp"

namespace procattn {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized iff requires_grad
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // Glorot-uniform fill over +-sqrt(6/(fan_in+fan_out)); always a parameter.
    static Tensor glorot(Shape shape, int fan_in, int fan_out,
                         std::mt19937_64& rng);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(d_->shape.size()); }
    std::size_t size() const { return d_->value.size(); }
    bool requires_grad() const { return d_ && d_->requires_grad; }
    void set_requires_grad(bool on);

    std::vector<double>& values() { return d_->value; }
    const std::vector<double>& values() const { return d_->value; }
    std::vector<double>& grads() { return d_->grad; }
    const std::vector<double>& grads() const { return d_->grad; }

    void zero_grad();
    // True when both handles share the same storage.
    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

private:
    std::shared_ptr<TensorData> d_;
    friend class Tape;
};

// Uniform in [0,1) built directly from the raw 64-bit stream, so results do
// not depend on the standard library's distribution implementation.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    // a: [..., M, K] (leading dims flattened), b: [K, N] -> [..., M, N]
    Tensor matmul(const Tensor& a, const Tensor& b);
    // Element-wise with numpy-style right-aligned broadcasting.
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor concat_last_axis(const std::vector<Tensor>& parts);
    Tensor sum_over_axis(const Tensor& t, int axis);
    Tensor tanh(const Tensor& t);
    Tensor sigmoid(const Tensor& t);
    // Softmax over the last axis. Masked entries get exactly 0 probability
    // and take no part in the normalisation. mask holds 0/1, same shape.
    Tensor softmax_masked(const Tensor& t, const Tensor& mask);
    Tensor softmax(const Tensor& t);
    // table: [V, D]; indices flat row-major with `index_shape` -> shape + [D]
    Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices,
                            const Shape& index_shape);

    enum class CrossEntropyInput { Logits, Probabilities };
    // Mean negative log-likelihood over the batch; log-sum-exp stabilised
    // when fed logits. t: [batch, classes].
    Tensor cross_entropy(const Tensor& t, const std::vector<int>& targets,
                         CrossEntropyInput kind = CrossEntropyInput::Logits);

    // Data-movement ops.
    Tensor reshape(const Tensor& t, Shape new_shape);
    Tensor slice_time(const Tensor& t, int step);          // [B,L,F] -> [B,F]
    Tensor stack_time(const std::vector<Tensor>& steps);   // L x [B,F] -> [B,L,F]
    Tensor reverse_time(const Tensor& t);                  // reverses axis 1 ([B,L] or [B,L,F])
    Tensor slice_last_axis(const Tensor& t, int from, int len);

    // Seeds grad(loss)=1 and replays recorded ops in reverse. Gradients
    // accumulate; callers zero them between steps.
    void backward(const Tensor& loss);

    std::size_t num_recorded() const { return records_.size(); }

private:
    void record(std::function<void()> fn);
    Tensor make_output(Shape shape, bool needs_grad);

    std::vector<std::function<void()>> records_;
    bool grad_enabled_ = true;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected ADAM over a fixed parameter list.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});
    void step();
    void zero_grad();
    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t t_ = 0;
    AdamConfig cfg_;
};

}  // namespace procattn

#endif
