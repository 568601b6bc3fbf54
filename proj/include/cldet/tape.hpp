#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cldet/tensor.hpp"

namespace cldet {

// Define-by-run reverse-mode tape. A tape is rebuilt for every forward pass;
// recording order is the topological order, so backward is a single reverse
// sweep. Gradients accumulate into the grad buffers of trainable leaf tensors.
class Tape {
public:
    struct Var {
        int id = -1;
    };

    // Wraps an external tensor. If it is trainable, backward() flushes its
    // gradient into tensor.grad (accumulating across calls).
    Var leaf(Tensor& t);
    // Captures a value that never receives gradient.
    Var constant(Tensor t);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_bias(Var a, Var bias);  // bias broadcasts over rows only
    Var relu(Var a);                // subgradient at 0 is 0
    Var scale(Var a, double c);
    Var mul_const(Var a, Tensor c);  // elementwise by a non-differentiated tensor

    Var log_softmax_rows(Var a);  // stabilized by max subtraction
    Var reduce_mean(Var a);
    Var squared_l2_rows(Var a);     // n x d -> n
    Var l2_normalize_rows(Var a);

    // -mean_i log_probs[i, labels[i]]
    Var pick_nll(Var log_probs, std::vector<int> labels);
    // sum(mask_i * x_i) / count(mask), 0 when the mask is empty
    Var masked_mean(Var row_values, std::vector<double> mask);

    const Tensor& value(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Node gradient
    // buffers are reset per call; leaf tensor grads accumulate.
    void backward(Var loss);

private:
    struct Node {
        Tensor val;             // owned value (ops and constants)
        Tensor* ext = nullptr;  // leaves alias an external tensor
        std::function<void(Tape&, const Node&)> bwd;
        std::vector<double> g;
        const Tensor& v() const { return ext ? *ext : val; }
    };

    const Tensor& val_of(int id) const { return nodes_[id].v(); }
    std::vector<double>& grad_of(int id) { return nodes_[id].g; }
    int push(Node n);
    void check_id(Var v) const;

    std::vector<Node> nodes_;
};

// Central finite-difference check. model_loss(true) must rebuild the forward
// pass, run backward, and leave analytic gradients in the params' grad
// buffers; model_loss(false) must return the loss value only. Returns
// max over parameter entries of |analytic - numeric| / max(1, |numeric|).
double grad_check(const std::function<double(bool with_grad)>& model_loss,
                  const std::vector<Tensor*>& params, double eps);

}  // namespace cldet
