#pragma once

#include "tfh/tensor.hpp"

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tfh {

/// A learnable tensor with its accumulated gradient. Gradients from a tape
/// are added into `grad` on backward(), so several tapes can feed one
/// parameter (summation at the caller's barrier).
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

    void zero_grad() { grad.assign(value.size(), 0.0); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor &value() const;
    const Shape &shape() const { return value().shape(); }
    Tape &tape() const { return *tape_; }
    std::size_t id() const { return id_; }

private:
    friend class Tape;
    Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape *tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Define-by-run gradient tape. Nodes are appended in execution order, so the
/// node list is always topologically sorted. One tape per worker thread.
class Tape {
public:
    // Receives the gradient of the node's output and scatters it into the
    // inputs through Tape::grad_of().
    using BackwardFn = std::function<void(Tape &, std::span<const double> out_grad)>;

    Tape() = default;
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var parameter(Parameter &p);

    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

    void backward(const Var &loss);

    const Tensor &value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    // Mutable gradient buffer for an input that requires grad. Lazily sized.
    std::span<double> grad_of(std::size_t id);
    // Gradient of a node after backward(); empty span if the node never received one.
    std::span<const double> grad(const Var &v) const;

    std::size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Parameter *param = nullptr;
        bool requires_grad = false;
    };

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

enum class Activation { relu, gelu };
enum class ElementwiseKind { add, sub, mul };

std::string to_string(Activation a);
Activation activation_from_string(const std::string &s);

// All ops require operands from the same tape.
Var matmul(const Var &a, const Var &b);
// `b` may equal `a` in shape or be a rank-1 vector matching a's last dimension.
Var elementwise(const Var &a, const Var &b, ElementwiseKind kind);
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
Var scale(const Var &a, double factor);
Var abs(const Var &a);
Var relu(const Var &a);
// GELU, tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Var gelu(const Var &a);
Var activation(const Var &a, Activation kind);
Var softmax_lastdim(const Var &a);
Var layer_norm(const Var &a, const Var &gain, const Var &bias, double eps);
Var mean_axis(const Var &a, std::size_t axis);
Var sum_all(const Var &a);
Var mean_all(const Var &a);
Var transpose(const Var &a);
Var reshape(const Var &a, Shape shape);
Var slice_cols(const Var &a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var> &parts);
Var concat_rows(const std::vector<Var> &parts);

} // namespace tfh
