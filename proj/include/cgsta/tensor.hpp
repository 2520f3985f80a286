#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cgsta {

// Guarded log/div/normalize denominators share this floor.
inline constexpr double kEps = 1e-8;

using Shape = std::vector<std::size_t>;

class Tape;

// Dense row-major tensor of 64-bit floats. Immutable after creation; copies
// share the underlying buffer. A tensor attached to a tape (node >= 0)
// participates in reverse-mode differentiation.
struct Tensor {
    Shape shape;
    std::shared_ptr<const std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;
    bool requires_grad = false;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
    std::size_t ndim() const { return shape.size(); }
    const double* ptr() const { return data->data(); }
    double at(std::size_t i) const { return (*data)[i]; }
    double scalar() const {
        if (numel() != 1) throw std::invalid_argument("scalar(): tensor has more than one element");
        return (*data)[0];
    }
    bool tracked() const { return tape != nullptr && node >= 0; }
};

std::size_t shape_numel(const Shape& s);

// Untracked constants.
Tensor constant(Shape shape, std::vector<double> values);
Tensor scalar_tensor(double v);
Tensor zeros(Shape shape);
Tensor full(Shape shape, double v);

// Returns a copy detached from any tape: downstream computation treats it as
// a constant and no gradient flows into the producing subgraph.
Tensor detach(const Tensor& t);

// Per-node gradient buffers produced by Tape::backward.
class Gradients {
  public:
    explicit Gradients(std::size_t n_nodes) : bufs_(n_nodes) {}

    // Accumulation buffer for node `id`, zero-initialized on first touch.
    double* accum(int id, std::size_t numel);
    // Gradient of a node, or nullptr if no gradient reached it.
    const std::vector<double>* at(int id) const;
    // True when the node got no gradient or an all-zero one.
    bool zero_or_absent(int id) const;
    void release(int id);

  private:
    std::vector<std::vector<double>> bufs_;
};

using BackwardFn = std::function<void(const double* grad_out, Gradients& sink)>;

// Append-only record of primitive applications. Node ids are topologically
// ordered by construction: inputs always precede consumers. One tape per
// training step; single-threaded.
class Tape {
  public:
    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);
    Tensor leaf(const Tensor& values, bool requires_grad);

    int emit(std::vector<int> inputs, std::size_t out_numel, BackwardFn backward);

    // Reverse sweep from a scalar loss. Nodes unreachable from the loss get
    // no gradient; detached tensors contribute none.
    Gradients backward(const Tensor& loss);

    // Gradient of a leaf as a tensor (zeros when the loss never reached it).
    Tensor grad_of(const Gradients& g, const Tensor& leaf_tensor) const;

    std::size_t size() const { return nodes_.size(); }
    const std::vector<int>& param_ids() const { return param_ids_; }

  private:
    struct Node {
        std::vector<int> inputs;
        std::size_t out_numel = 0;
        BackwardFn backward;  // empty for leaves
    };
    std::vector<Node> nodes_;
    std::vector<int> param_ids_;
};

// ---- primitives -----------------------------------------------------------
// Elementwise binaries broadcast only over (a) equal shapes, (b) a scalar on
// either side, (c) one operand's shape being a trailing suffix of the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // any exact-zero divisor is an error

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // rejects inputs <= 0
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor smul(const Tensor& a, double c);
Tensor sadd(const Tensor& a, double c);

// matmul supports (m,k)x(k,n), batched (...,m,k)x(k,n), and batched pairs
// with identical leading dimensions.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);               // all elements -> scalar
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);
Tensor max(const Tensor& a, int axis);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& a, const std::vector<int>& perm);
Tensor transpose(const Tensor& a);  // swap last two axes
Tensor expand_leading(const Tensor& a, std::size_t n);  // (s...) -> (n, s...)

Tensor softmax(const Tensor& a, int axis);
Tensor l2_normalize(const Tensor& a, int axis);
// Cosine similarity over the last axis of equally-shaped inputs; result drops
// that axis. Values in [-1, 1].
Tensor cosine_sim(const Tensor& a, const Tensor& b);

// ---- gradient checking ------------------------------------------------------
// f builds a scalar loss from leaves registered on the provided tape, in the
// order of `params`. Compares backward() against central finite differences
// (f(x+h e_i) - f(x-h e_i)) / 2h; relative error uses denominator
// max(|analytic|, |numeric|, 1e-8).
struct GradCheckResult {
    double max_rel_err = 0.0;
    int worst_param = -1;
    std::size_t worst_index = 0;
    bool nan_failure = false;
    int nan_param = -1;
    std::size_t nan_index = 0;
};

using GradCheckFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

GradCheckResult grad_check(const GradCheckFn& f,
                           const std::vector<std::pair<Shape, std::vector<double>>>& params,
                           double step);

}  // namespace cgsta
