#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ppt/errors.hpp"

namespace ppt {

// Row-major tensor shape. Rank 0 (empty shape) denotes a scalar with one
// element.
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class OpContext;

// Backward callback of one recorded operation: reads the output adjoint from
// the context and accumulates into the input adjoints it exposes.
using BackwardFn = std::function<void(OpContext&)>;

// Shared handle to a float32 buffer plus autograd metadata. Copying a Tensor
// copies the handle, never the data; operations return fresh tensors.
//
// Gradients accumulate across backward passes until clear_grad() is called,
// which is what a training step wants: run backward, apply the optimizer,
// then clear.
class Tensor {
public:
    Tensor() = default;  // undefined handle

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from_data(Shape shape, std::vector<float> data);
    static Tensor scalar(float value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int64_t size() const;              // element count
    int64_t extent(int axis) const;    // negative axis counts from the back

    std::span<const float> data() const;
    // Direct mutation is reserved for leaves (parameters, input buffers);
    // rewriting an op output would desynchronize it from the tape.
    std::span<float> mutable_data();
    float item() const;  // sole element of a one-element tensor

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);  // leaves only
    bool has_grad() const;
    std::span<const float> grad() const;    // empty span until first backward
    void clear_grad();

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend class GradTape;
    friend class OpContext;
    friend Tensor make_op(Shape, std::vector<float>, std::vector<Tensor>, BackwardFn);
};

// Records operations while alive (one active tape per thread, no nesting).
// backward(loss) runs reverse-mode accumulation from a scalar and then
// releases the recorded graph; a tape is single-use.
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }
    static bool recording();

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    bool used_ = false;

    friend Tensor make_op(Shape, std::vector<float>, std::vector<Tensor>, BackwardFn);
};

// Construction hook for differentiable operations. The caller supplies the
// already-computed forward value and a backward callback; recording happens
// only when a tape is active and some input requires grad. Modules outside
// the core (patch extraction, pooling, ...) define their ops through this.
Tensor make_op(Shape out_shape, std::vector<float> out_data,
               std::vector<Tensor> inputs, BackwardFn backward);

// View of one recorded node handed to its backward callback.
class OpContext {
public:
    std::span<const float> out_grad() const;
    std::span<const float> out_data() const;
    const Shape& out_shape() const;

    size_t num_inputs() const;
    std::span<const float> in_data(size_t i) const;
    const Shape& in_shape(size_t i) const;
    // False when input i does not need a gradient; callbacks may skip the work.
    bool needs_grad(size_t i) const;
    // Zero-initialized on first touch; accumulate with +=.
    std::span<float> in_grad(size_t i);

private:
    explicit OpContext(detail::Node* node) : node_(node) {}
    detail::Node* node_;
    friend class GradTape;
};

// ---- elementwise and reduction operations ------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);           // Hadamard
Tensor scale(const Tensor& a, float factor);
Tensor add_bias(const Tensor& a, const Tensor& bias);   // bias over the last axis
Tensor maximum(const Tensor& a, const Tensor& b);       // ties route grad to a
Tensor gelu(const Tensor& x);                           // exact erf form
Tensor tanh(const Tensor& x);
Tensor mean(const Tensor& x);                           // scalar
Tensor mse(const Tensor& a, const Tensor& b);           // scalar

// ---- shape operations ---------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);                      // swap the last two axes
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat(std::span<const Tensor> parts, int axis);

// ---- linear algebra and normalization -----------------------------------

// Batched matrix product over the trailing two axes. Leading axes must match
// exactly, or either operand may omit them entirely (rank 2) and is then
// shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis);

inline constexpr float kLayerNormEpsilon = 1e-5f;
// Normalizes over the last axis, then applies elementwise gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// Fused scaled dot-product attention: softmax(q kᵀ / sqrt(d)) v over the
// trailing two axes [t, d]. Probabilities are recomputed during backward
// instead of being stored, which keeps the tape footprint linear in t.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);
// The probability matrix alone (no tape recording); diagnostics and tests.
Tensor attention_probs(const Tensor& q, const Tensor& k);

bool all_finite(const Tensor& x);

}  // namespace ppt
