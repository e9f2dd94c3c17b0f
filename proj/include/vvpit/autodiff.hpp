#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vvpit/tensor.hpp"

namespace vvpit {

// Handle into a GradTape. node < 0 marks a constant that is never recorded
// and receives no gradient.
struct Var {
    Tensor value;
    int node = -1;
};

// Reverse-mode tape. Records one entry per primitive op; backward replays the
// record in exact reverse order. Recording is single-threaded; the kernels
// invoked for forward/backward values may parallelize internally.
class GradTape {
public:
    explicit GradTape(bool grad_enabled = true) : enabled_(grad_enabled) {}

    bool grad_enabled() const { return enabled_; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor v) const { return Var{std::move(v), -1}; }
    Var leaf(Tensor v);                                // recorded, unnamed (gradients readable via grad())
    Var param(const std::string& name, Tensor v);      // recorded, named parameter

    Var conv2d(const Var& x, const Var& k, int stride, int padding);
    Var add_bias(const Var& x, const Var& b);
    Var add(const Var& a, const Var& b);
    Var sub(const Var& a, const Var& b);
    Var mul(const Var& a, const Var& b);
    Var div(const Var& a, const Var& b);
    Var emax(const Var& a, const Var& b);
    Var scale(const Var& a, double c);
    Var leaky_relu(const Var& x, double slope);
    Var softplus(const Var& x);
    Var reduce(ReduceOp op, const Var& x, const std::vector<int>& axes);
    Var reshape(const Var& x, std::vector<int> new_shape);
    Var normalize_variance(const Var& v, double rho);
    Var xcorr_pen(const Var& ms, const Var& mt, const Var& vns, const Var& vnt);
    // Weighted binary cross-entropy with logits, mean over cells; label is a
    // constant. Stable log-sum-exp form.
    Var bce_with_logits(const Var& logits, const Tensor& label, double pos_weight, double neg_weight);

    // d(loss)/d(param) for every named parameter. Also retains per-node
    // gradients for grad().
    std::map<std::string, Tensor> backward(const Var& loss);

    // Gradient of the last backward() w.r.t. a recorded Var; zeros if none
    // reached it.
    Tensor grad(const Var& v) const;

private:
    using BackFn = std::function<void(const Tensor& gout, std::vector<Tensor>& grads)>;

    Var record(Tensor value, BackFn fn);
    static void accumulate(std::vector<Tensor>& grads, int node, const Tensor& g);

    struct Node {
        BackFn back;
        std::vector<int> shape;  // for grad() zero-fill
        std::string param_name;  // empty unless a parameter
    };

    bool enabled_;
    std::vector<Node> nodes_;
    std::vector<Tensor> last_grads_;
};

}  // namespace vvpit
