#include "texadiff/nn/tensor.hpp"

#include <unordered_set>

#include "texadiff/error.hpp"
#include "texadiff/rng.hpp"

namespace texadiff::nn {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

std::vector<real>& detail::Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, real v) { return from(shape, std::vector<real>(nn::numel(shape), v)); }

Tensor Tensor::from(const Shape& shape, std::vector<real> values) {
    require(shape.size() <= 4, "tensor rank must be <= 4");
    for (int d : shape) require(d >= 0, "tensor dimensions must be non-negative");
    require(values.size() == nn::numel(shape), "tensor data length " + std::to_string(values.size()) +
                                               " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = shape;
    n->value = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, real stddev) {
    std::vector<real> v(nn::numel(shape));
    for (auto& x : v) x = stddev * rng.normal();
    return from(shape, std::move(v));
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, real lo, real hi) {
    std::vector<real> v(nn::numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return from(shape, std::move(v));
}

const Shape& Tensor::shape() const {
    require(defined(), "undefined tensor");
    return node_->shape;
}

int Tensor::dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

std::span<real> Tensor::data() {
    require(defined(), "undefined tensor");
    return node_->value;
}

std::span<const real> Tensor::data() const {
    require(defined(), "undefined tensor");
    return node_->value;
}

real Tensor::item() const {
    require(numel() == 1, "item() requires a single-element tensor");
    return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    require(defined(), "undefined tensor");
    require(node_->backward_fn == nullptr, "requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
    return *this;
}

std::span<const real> Tensor::grad() const {
    require(has_grad(), "tensor has no gradient");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) {
        node_->grad.clear();
        node_->grad.shrink_to_fit();
    }
}

Tensor Tensor::detach() const {
    require(defined(), "undefined tensor");
    return from(node_->shape, node_->value);
}

Tensor Tensor::make_result(Shape shape, std::vector<real> value, std::initializer_list<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool any = false;
    if (g_grad_enabled)
        for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& t : inputs) n->parents.push_back(t.node_);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

void Tensor::backward() {
    require(numel() == 1, "backward() requires a scalar output");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the recorded graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace texadiff::nn
