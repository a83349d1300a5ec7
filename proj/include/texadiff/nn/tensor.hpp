#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace texadiff {
class Rng;
}

namespace texadiff::nn {

// Storage precision. Double keeps central-difference gradient checks meaningful at 1e-3.
using real = double;

using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads self.grad and accumulates into the parents' grad buffers.
    std::function<void(Node& self)> backward_fn;

    std::vector<real>& ensure_grad();
};

}  // namespace detail

// While alive on this thread, operations record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// Reference-counted handle to a node of the autodiff graph. Copies alias the same
// storage; use clone() or detach() for an independent value. Operations never mutate
// their inputs, so a recorded graph stays valid until the last handle is dropped.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, real v);
    static Tensor from(const Shape& shape, std::vector<real> values);
    static Tensor randn(const Shape& shape, Rng& rng, real stddev = 1.0);
    static Tensor uniform(const Shape& shape, Rng& rng, real lo, real hi);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int dim(int i) const;
    int ndim() const { return static_cast<int>(shape().size()); }
    std::size_t numel() const { return node_ ? node_->value.size() : 0; }

    std::span<real> data();
    std::span<const real> data() const;
    real item() const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::span<const real> grad() const;
    void zero_grad();

    // Seeds d(self)/d(self) = 1 (self must be a scalar) and propagates through the graph.
    void backward();

    Tensor detach() const;
    Tensor clone() const { return detach(); }

    // Internal: result node for an operation.
    static Tensor make_result(Shape shape, std::vector<real> value, std::initializer_list<Tensor> inputs,
                              std::function<void(detail::Node&)> backward_fn);
    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

}  // namespace texadiff::nn
