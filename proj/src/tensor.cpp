#include "ppt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace ppt {

namespace detail {

struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool has_history = false;  // true for recorded op outputs
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
    const GradTape* tape = nullptr;  // identity only, never dereferenced

    std::span<float> grad_accum() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
        return grad;
    }
};

}  // namespace detail

using detail::Node;

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

thread_local GradTape* g_active_tape = nullptr;

void check_extents(const Shape& shape) {
    for (int64_t e : shape) {
        if (e <= 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        }
    }
}

Node& require(const std::shared_ptr<Node>& node, const char* what) {
    if (!node) {
        throw ContractError(std::string(what) + " called on an undefined tensor");
    }
    return *node;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

}  // namespace

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
    return full(std::move(shape), 0.0f);
}

Tensor Tensor::full(Shape shape, float value) {
    check_extents(shape);
    auto node = std::make_shared<Node>();
    node->data.assign(static_cast<size_t>(shape_numel(shape)), value);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    check_extents(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value) {
    return from_data({}, {value});
}

const Shape& Tensor::shape() const {
    return require(node_, "shape()").shape;
}

int Tensor::rank() const {
    return static_cast<int>(shape().size());
}

int64_t Tensor::size() const {
    return static_cast<int64_t>(require(node_, "size()").data.size());
}

int64_t Tensor::extent(int axis) const {
    const Shape& s = shape();
    int r = static_cast<int>(s.size());
    int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
    }
    return s[a];
}

std::span<const float> Tensor::data() const {
    return require(node_, "data()").data;
}

std::span<float> Tensor::mutable_data() {
    Node& n = require(node_, "mutable_data()");
    if (n.has_history) {
        throw ContractError("mutable_data() is reserved for leaf tensors");
    }
    return n.data;
}

float Tensor::item() const {
    const Node& n = require(node_, "item()");
    if (n.data.size() != 1) {
        throw ContractError("item() needs a one-element tensor, got shape " +
                            shape_str(n.shape));
    }
    return n.data[0];
}

bool Tensor::requires_grad() const {
    return require(node_, "requires_grad()").requires_grad;
}

Tensor& Tensor::set_requires_grad(bool value) {
    Node& n = require(node_, "set_requires_grad()");
    if (n.has_history) {
        throw ContractError("set_requires_grad() must target a leaf tensor");
    }
    n.requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const {
    return !require(node_, "has_grad()").grad.empty();
}

std::span<const float> Tensor::grad() const {
    return require(node_, "grad()").grad;
}

void Tensor::clear_grad() {
    Node& n = require(node_, "clear_grad()");
    n.grad.clear();
    n.grad.shrink_to_fit();
}

// ---- GradTape -------------------------------------------------------------

GradTape::GradTape() {
    if (g_active_tape) {
        throw ContractError("a grad tape is already active on this thread");
    }
    g_active_tape = this;
}

GradTape::~GradTape() {
    if (g_active_tape == this) {
        g_active_tape = nullptr;
    }
    // Sever graph edges so intermediates die with the tape even when the
    // caller still holds a handle to some output. Null the tape link too: a
    // later tape may reuse this address, and a stale pointer would let its
    // backward() accept a loss recorded here.
    for (auto& node : nodes_) {
        node->inputs.clear();
        node->backward = nullptr;
        node->tape = nullptr;
    }
}

bool GradTape::recording() {
    return g_active_tape != nullptr;
}

void GradTape::backward(const Tensor& loss) {
    if (used_) {
        throw ContractError("backward() already ran on this tape");
    }
    Node& root = require(loss.node_, "backward()");
    if (root.data.size() != 1) {
        throw ContractError("backward() needs a one-element loss, got shape " +
                            shape_str(root.shape));
    }
    if (root.has_history && root.tape != this) {
        throw ContractError("backward(): loss was recorded on a different tape");
    }
    used_ = true;

    root.grad_accum()[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& node = **it;
        // Nodes never reached by the loss keep an empty grad; skip them.
        if (node.grad.empty() || !node.backward) continue;
        OpContext ctx(&node);
        node.backward(ctx);
    }
    for (auto& node : nodes_) {
        node->inputs.clear();
        node->backward = nullptr;
        node->tape = nullptr;
    }
    nodes_.clear();
}

// ---- op construction ------------------------------------------------------

Tensor make_op(Shape out_shape, std::vector<float> out_data,
               std::vector<Tensor> inputs, BackwardFn backward) {
    check_extents(out_shape);
    if (shape_numel(out_shape) != static_cast<int64_t>(out_data.size())) {
        throw ShapeError("make_op: shape " + shape_str(out_shape) + " wants " +
                         std::to_string(shape_numel(out_shape)) + " values, got " +
                         std::to_string(out_data.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(out_shape);
    node->data = std::move(out_data);

    bool track = g_active_tape != nullptr;
    if (track) {
        bool any_grad = false;
        for (const Tensor& t : inputs) {
            any_grad = any_grad || require(t.node_, "make_op() input").requires_grad;
        }
        track = any_grad;
    }
    if (track) {
        node->requires_grad = true;
        node->has_history = true;
        node->tape = g_active_tape;
        node->inputs.reserve(inputs.size());
        for (const Tensor& t : inputs) node->inputs.push_back(t.node_);
        node->backward = std::move(backward);
        g_active_tape->nodes_.push_back(node);
    }
    return Tensor(std::move(node));
}

// ---- OpContext --------------------------------------------------------------

std::span<const float> OpContext::out_grad() const { return node_->grad; }
std::span<const float> OpContext::out_data() const { return node_->data; }
const Shape& OpContext::out_shape() const { return node_->shape; }
size_t OpContext::num_inputs() const { return node_->inputs.size(); }

std::span<const float> OpContext::in_data(size_t i) const {
    return node_->inputs.at(i)->data;
}

const Shape& OpContext::in_shape(size_t i) const {
    return node_->inputs.at(i)->shape;
}

bool OpContext::needs_grad(size_t i) const {
    return node_->inputs.at(i)->requires_grad;
}

std::span<float> OpContext::in_grad(size_t i) {
    return node_->inputs.at(i)->grad_accum();
}

// ---- elementwise operations -------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto av = a.data();
    auto bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](OpContext& ctx) {
        auto g = ctx.out_grad();
        for (size_t k = 0; k < 2; ++k) {
            if (!ctx.needs_grad(k)) continue;
            auto gi = ctx.in_grad(k);
            for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto av = a.data();
    auto bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](OpContext& ctx) {
        auto g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            auto ga = ctx.in_grad(0);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (ctx.needs_grad(1)) {
            auto gb = ctx.in_grad(1);
            for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto av = a.data();
    auto bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](OpContext& ctx) {
        auto g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            auto ga = ctx.in_grad(0);
            auto bv = ctx.in_data(1);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (ctx.needs_grad(1)) {
            auto gb = ctx.in_grad(1);
            auto av = ctx.in_data(0);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, float factor) {
    auto av = a.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
    return make_op(a.shape(), std::move(out), {a}, [factor](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto ga = ctx.in_grad(0);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    if (a.rank() < 1 || bias.rank() != 1 || bias.extent(0) != a.extent(-1)) {
        throw ShapeError("add_bias: need bias [n] matching the last axis, got " +
                         shape_str(a.shape()) + " and " + shape_str(bias.shape()));
    }
    auto av = a.data();
    auto bv = bias.data();
    int64_t n = bias.extent(0);
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % n];
    return make_op(a.shape(), std::move(out), {a, bias}, [n](OpContext& ctx) {
        auto g = ctx.out_grad();
        if (ctx.needs_grad(0)) {
            auto ga = ctx.in_grad(0);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (ctx.needs_grad(1)) {
            auto gb = ctx.in_grad(1);
            int64_t rows = static_cast<int64_t>(g.size()) / n;
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int64_t r = 0; r < rows; ++r) acc += g[r * n + j];
                gb[j] += static_cast<float>(acc);
            }
        }
    });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "maximum");
    auto av = a.data();
    auto bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(av[i], bv[i]);
    return make_op(a.shape(), std::move(out), {a, b}, [](OpContext& ctx) {
        auto g = ctx.out_grad();
        auto av = ctx.in_data(0);
        auto bv = ctx.in_data(1);
        if (ctx.needs_grad(0)) {
            auto ga = ctx.in_grad(0);
            for (size_t i = 0; i < g.size(); ++i) {
                if (av[i] >= bv[i]) ga[i] += g[i];
            }
        }
        if (ctx.needs_grad(1)) {
            auto gb = ctx.in_grad(1);
            for (size_t i = 0; i < g.size(); ++i) {
                if (av[i] < bv[i]) gb[i] += g[i];
            }
        }
    });
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor gelu(const Tensor& x) {
    auto xv = x.data();
    std::vector<float> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = xv[i];
        out[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    return make_op(x.shape(), std::move(out), {x}, [](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto xv = ctx.in_data(0);
        auto gx = ctx.in_grad(0);
        for (size_t i = 0; i < g.size(); ++i) {
            double v = xv[i];
            double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] += static_cast<float>(g[i] * (cdf + v * pdf));
        }
    });
}

Tensor tanh(const Tensor& x) {
    auto xv = x.data();
    std::vector<float> out(xv.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(std::tanh(static_cast<double>(xv[i])));
    }
    return make_op(x.shape(), std::move(out), {x}, [](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto y = ctx.out_data();
        auto gx = ctx.in_grad(0);
        for (size_t i = 0; i < g.size(); ++i) {
            double t = y[i];
            gx[i] += static_cast<float>(g[i] * (1.0 - t * t));
        }
    });
}

Tensor mean(const Tensor& x) {
    auto xv = x.data();
    double acc = 0.0;
    for (float v : xv) acc += v;
    int64_t n = static_cast<int64_t>(xv.size());
    std::vector<float> out{static_cast<float>(acc / n)};
    return make_op({}, std::move(out), {x}, [n](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        float g = ctx.out_grad()[0] / static_cast<float>(n);
        auto gx = ctx.in_grad(0);
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    auto av = a.data();
    auto bv = b.data();
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    int64_t n = static_cast<int64_t>(av.size());
    std::vector<float> out{static_cast<float>(acc / n)};
    return make_op({}, std::move(out), {a, b}, [n](OpContext& ctx) {
        float g = ctx.out_grad()[0];
        auto av = ctx.in_data(0);
        auto bv = ctx.in_data(1);
        double c = 2.0 * g / n;
        if (ctx.needs_grad(0)) {
            auto ga = ctx.in_grad(0);
            for (size_t i = 0; i < ga.size(); ++i) {
                ga[i] += static_cast<float>(c * (av[i] - bv[i]));
            }
        }
        if (ctx.needs_grad(1)) {
            auto gb = ctx.in_grad(1);
            for (size_t i = 0; i < gb.size(); ++i) {
                gb[i] -= static_cast<float>(c * (av[i] - bv[i]));
            }
        }
    });
}

// ---- shape operations ---------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    check_extents(shape);
    if (shape_numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    }
    auto xv = x.data();
    std::vector<float> out(xv.begin(), xv.end());
    return make_op(std::move(shape), std::move(out), {x}, [](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto gx = ctx.in_grad(0);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

namespace {

// Mapping from output coordinates to input offsets for a permutation.
struct PermuteMap {
    Shape out_shape;
    std::vector<int64_t> in_stride;  // input stride for each output axis
};

PermuteMap build_permute(const Shape& in_shape, const std::vector<int>& axes) {
    int r = static_cast<int>(in_shape.size());
    if (static_cast<int>(axes.size()) != r) {
        throw ShapeError("permute: got " + std::to_string(axes.size()) +
                         " axes for shape " + shape_str(in_shape));
    }
    std::vector<bool> seen(r, false);
    for (int a : axes) {
        if (a < 0 || a >= r || seen[a]) {
            throw ShapeError("permute: axes must be a permutation of 0.." +
                             std::to_string(r - 1));
        }
        seen[a] = true;
    }
    std::vector<int64_t> stride(r, 1);
    for (int d = r - 2; d >= 0; --d) stride[d] = stride[d + 1] * in_shape[d + 1];
    PermuteMap map;
    map.out_shape.resize(r);
    map.in_stride.resize(r);
    for (int d = 0; d < r; ++d) {
        map.out_shape[d] = in_shape[axes[d]];
        map.in_stride[d] = stride[axes[d]];
    }
    return map;
}

// Walks output positions in order, reporting the matching input offset.
template <typename Fn>
void for_each_permuted(const PermuteMap& map, Fn&& fn) {
    int r = static_cast<int>(map.out_shape.size());
    int64_t n = shape_numel(map.out_shape);
    std::vector<int64_t> coord(r, 0);
    int64_t in_idx = 0;
    for (int64_t o = 0; o < n; ++o) {
        fn(o, in_idx);
        for (int d = r - 1; d >= 0; --d) {
            in_idx += map.in_stride[d];
            if (++coord[d] < map.out_shape[d]) break;
            in_idx -= map.in_stride[d] * map.out_shape[d];
            coord[d] = 0;
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    PermuteMap map = build_permute(x.shape(), axes);
    auto xv = x.data();
    std::vector<float> out(xv.size());
    for_each_permuted(map, [&](int64_t o, int64_t i) { out[o] = xv[i]; });
    return make_op(map.out_shape, std::move(out), {x}, [map](OpContext& ctx) {
        if (!ctx.needs_grad(0)) return;
        auto g = ctx.out_grad();
        auto gx = ctx.in_grad(0);
        for_each_permuted(map, [&](int64_t o, int64_t i) { gx[i] += g[o]; });
    });
}

Tensor transpose(const Tensor& x) {
    int r = x.rank();
    if (r < 2) {
        throw ShapeError("transpose: need rank >= 2, got shape " + shape_str(x.shape()));
    }
    std::vector<int> axes(r);
    for (int d = 0; d < r; ++d) axes[d] = d;
    std::swap(axes[r - 2], axes[r - 1]);
    return permute(x, axes);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty()) {
        throw ContractError("concat: needs at least one input");
    }
    const Shape& first = parts[0].shape();
    int r = static_cast<int>(first.size());
    int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError("concat: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(first));
    }
    Shape out_shape = first;
    out_shape[a] = 0;
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        if (static_cast<int>(s.size()) != r) {
            throw ShapeError("concat: rank mismatch, " + shape_str(first) + " vs " +
                             shape_str(s));
        }
        for (int d = 0; d < r; ++d) {
            if (d != a && s[d] != first[d]) {
                throw ShapeError("concat: shapes differ off the concat axis, " +
                                 shape_str(first) + " vs " + shape_str(s));
            }
        }
        out_shape[a] += s[a];
    }

    int64_t inner = 1;
    for (int d = a + 1; d < r; ++d) inner *= first[d];
    int64_t outer = 1;
    for (int d = 0; d < a; ++d) outer *= first[d];

    std::vector<float> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t out_row = out_shape[a] * inner;
    int64_t col = 0;
    std::vector<int64_t> part_cols(parts.size());
    for (size_t p = 0; p < parts.size(); ++p) {
        auto pv = parts[p].data();
        int64_t pc = parts[p].shape()[a] * inner;
        part_cols[p] = pc;
        for (int64_t o = 0; o < outer; ++o) {
            std::copy_n(pv.data() + o * pc, pc, out.data() + o * out_row + col);
        }
        col += pc;
    }

    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make_op(std::move(out_shape), std::move(out), std::move(inputs),
                   [outer, out_row, part_cols](OpContext& ctx) {
        auto g = ctx.out_grad();
        int64_t col = 0;
        for (size_t p = 0; p < ctx.num_inputs(); ++p) {
            int64_t pc = part_cols[p];
            if (ctx.needs_grad(p)) {
                auto gp = ctx.in_grad(p);
                for (int64_t o = 0; o < outer; ++o) {
                    const float* src = g.data() + o * out_row + col;
                    float* dst = gp.data() + o * pc;
                    for (int64_t i = 0; i < pc; ++i) dst[i] += src[i];
                }
            }
            col += pc;
        }
    });
}

bool all_finite(const Tensor& x) {
    for (float v : x.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace ppt
