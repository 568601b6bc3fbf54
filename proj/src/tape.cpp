#include "cldet/tape.hpp"

#include <cmath>
#include <utility>

#include "cldet/errors.hpp"

namespace cldet {

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_id(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw ContractError("tape: variable does not belong to this tape");
    }
}

Tape::Var Tape::leaf(Tensor& t) {
    Node n;
    n.ext = &t;
    return {push(std::move(n))};
}

Tape::Var Tape::constant(Tensor t) {
    Node n;
    n.val = std::move(t);
    return {push(std::move(n))};
}

const Tensor& Tape::value(Var v) const {
    check_id(v);
    return nodes_[v.id].v();
}

Tape::Var Tape::matmul(Var a, Var b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val_of(a.id);
    const Tensor& tb = val_of(b.id);
    if (ta.shape.size() > 2 || tb.shape.size() > 2 || ta.cols() != tb.rows()) {
        throw DimensionError("matmul: incompatible shapes " + ta.shape_str() + " and " +
                             tb.shape_str());
    }
    std::size_t m = ta.rows(), k = ta.cols(), nn = tb.cols();
    Node n;
    n.val = Tensor({m, nn});
    kernels::matmul(ta.values.data(), tb.values.data(), n.val.values.data(), m, k, nn);
    n.bwd = [a, b, m, k, nn](Tape& t, const Node& self) {
        const Tensor& av = t.val_of(a.id);
        const Tensor& bv = t.val_of(b.id);
        kernels::matmul_grad_a(self.g.data(), bv.values.data(), t.grad_of(a.id).data(), m, k, nn);
        kernels::matmul_grad_b(av.values.data(), self.g.data(), t.grad_of(b.id).data(), m, k, nn);
    };
    return {push(std::move(n))};
}

Tape::Var Tape::add(Var a, Var b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val_of(a.id);
    const Tensor& tb = val_of(b.id);
    if (!ta.same_shape(tb)) {
        throw DimensionError("add: incompatible shapes " + ta.shape_str() + " and " +
                             tb.shape_str());
    }
    Node n;
    n.val = Tensor(ta.shape);
    kernels::add(ta.values.data(), tb.values.data(), n.val.values.data(), ta.size());
    n.bwd = [a, b](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < self.g.size(); ++i) {
            ga[i] += self.g[i];
            gb[i] += self.g[i];
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::sub(Var a, Var b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val_of(a.id);
    const Tensor& tb = val_of(b.id);
    if (!ta.same_shape(tb)) {
        throw DimensionError("sub: incompatible shapes " + ta.shape_str() + " and " +
                             tb.shape_str());
    }
    Node n;
    n.val = Tensor(ta.shape);
    kernels::sub(ta.values.data(), tb.values.data(), n.val.values.data(), ta.size());
    n.bwd = [a, b](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < self.g.size(); ++i) {
            ga[i] += self.g[i];
            gb[i] -= self.g[i];
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::add_bias(Var a, Var bias) {
    check_id(a);
    check_id(bias);
    const Tensor& ta = val_of(a.id);
    const Tensor& tb = val_of(bias.id);
    if (tb.rows() != 1 || tb.cols() != ta.cols()) {
        throw DimensionError("add_bias: bias " + tb.shape_str() + " does not broadcast over rows of " +
                             ta.shape_str());
    }
    std::size_t r = ta.rows(), c = ta.cols();
    Node n;
    n.val = Tensor(ta.shape);
    kernels::add_bias(ta.values.data(), tb.values.data(), n.val.values.data(), r, c);
    n.bwd = [a, bias, r, c](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(bias.id);
        for (std::size_t i = 0; i < r * c; ++i) ga[i] += self.g[i];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += self.g[i * c + j];
    };
    return {push(std::move(n))};
}

Tape::Var Tape::relu(Var a) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    Node n;
    n.val = Tensor(ta.shape);
    kernels::relu(ta.values.data(), n.val.values.data(), ta.size());
    n.bwd = [a](Tape& t, const Node& self) {
        const Tensor& av = t.val_of(a.id);
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < self.g.size(); ++i) {
            if (av.values[i] > 0.0) ga[i] += self.g[i];
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::scale(Var a, double c) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    Node n;
    n.val = Tensor(ta.shape);
    kernels::scale(ta.values.data(), c, n.val.values.data(), ta.size());
    n.bwd = [a, c](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < self.g.size(); ++i) ga[i] += c * self.g[i];
    };
    return {push(std::move(n))};
}

Tape::Var Tape::mul_const(Var a, Tensor c) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    if (!ta.same_shape(c)) {
        throw DimensionError("mul_const: incompatible shapes " + ta.shape_str() + " and " +
                             c.shape_str());
    }
    Node n;
    n.val = Tensor(ta.shape);
    kernels::mul(ta.values.data(), c.values.data(), n.val.values.data(), ta.size());
    n.bwd = [a, c = std::move(c)](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < self.g.size(); ++i) ga[i] += c.values[i] * self.g[i];
    };
    return {push(std::move(n))};
}

Tape::Var Tape::log_softmax_rows(Var a) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    if (ta.size() == 0) throw EmptyInputError("log_softmax_rows: empty input");
    std::size_t r = ta.rows(), c = ta.cols();
    Node n;
    n.val = Tensor(ta.shape);
    kernels::log_softmax_rows(ta.values.data(), n.val.values.data(), r, c);
    // dx = dy - softmax(x) * rowsum(dy)
    n.bwd = [a, r, c](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < r; ++i) {
            const double* lp = self.val.values.data() + i * c;
            const double* gy = self.g.data() + i * c;
            double gsum = 0.0;
            for (std::size_t j = 0; j < c; ++j) gsum += gy[j];
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += gy[j] - std::exp(lp[j]) * gsum;
            }
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::reduce_mean(Var a) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    if (ta.size() == 0) throw EmptyInputError("reduce_mean: empty input");
    std::size_t n_elem = ta.size();
    double sum = 0.0;
    for (double v : ta.values) sum += v;
    Node n;
    n.val = Tensor::scalar(sum / static_cast<double>(n_elem));
    n.bwd = [a, n_elem](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        double g = self.g[0] / static_cast<double>(n_elem);
        for (std::size_t i = 0; i < n_elem; ++i) ga[i] += g;
    };
    return {push(std::move(n))};
}

Tape::Var Tape::squared_l2_rows(Var a) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    if (ta.size() == 0) throw EmptyInputError("squared_l2_rows: empty input");
    std::size_t r = ta.rows(), c = ta.cols();
    Node n;
    n.val = Tensor({r});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double v = ta.values[i * c + j];
            s += v * v;
        }
        n.val.values[i] = s;
    }
    n.bwd = [a, r, c](Tape& t, const Node& self) {
        const Tensor& av = t.val_of(a.id);
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += 2.0 * av.values[i * c + j] * self.g[i];
            }
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::l2_normalize_rows(Var a) {
    check_id(a);
    const Tensor& ta = val_of(a.id);
    if (ta.size() == 0) throw EmptyInputError("l2_normalize_rows: empty input");
    std::size_t r = ta.rows(), c = ta.cols();
    Node n;
    n.val = Tensor(ta.shape);
    std::vector<double> norms(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double v = ta.values[i * c + j];
            s += v * v;
        }
        norms[i] = std::sqrt(s);
        double inv = norms[i] > 0.0 ? 1.0 / norms[i] : 0.0;  // zero rows stay zero
        for (std::size_t j = 0; j < c; ++j) n.val.values[i * c + j] = ta.values[i * c + j] * inv;
    }
    // dx = (dy - y * dot(y, dy)) / |x|
    n.bwd = [a, r, c, norms = std::move(norms)](Tape& t, const Node& self) {
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < r; ++i) {
            if (norms[i] <= 0.0) continue;
            const double* y = self.val.values.data() + i * c;
            const double* gy = self.g.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += (gy[j] - y[j] * dot) / norms[i];
            }
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::pick_nll(Var log_probs, std::vector<int> labels) {
    check_id(log_probs);
    const Tensor& lp = val_of(log_probs.id);
    std::size_t r = lp.rows(), c = lp.cols();
    if (labels.size() != r) {
        throw DimensionError("pick_nll: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(r) + " rows");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw LabelError("pick_nll: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(c) + ") at row " + std::to_string(i));
        }
        sum -= lp.values[i * c + static_cast<std::size_t>(y)];
    }
    Node n;
    n.val = Tensor::scalar(sum / static_cast<double>(r));
    n.bwd = [log_probs, r, c, labels = std::move(labels)](Tape& t, const Node& self) {
        auto& ga = t.grad_of(log_probs.id);
        double g = self.g[0] / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i) {
            ga[i * c + static_cast<std::size_t>(labels[i])] -= g;
        }
    };
    return {push(std::move(n))};
}

Tape::Var Tape::masked_mean(Var row_values, std::vector<double> mask) {
    check_id(row_values);
    const Tensor& tv = val_of(row_values.id);
    if (tv.size() != mask.size()) {
        throw DimensionError("masked_mean: mask of " + std::to_string(mask.size()) +
                             " entries for " + std::to_string(tv.size()) + " values");
    }
    double count = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        count += mask[i];
        sum += mask[i] * tv.values[i];
    }
    Node n;
    if (count == 0.0) {
        n.val = Tensor::scalar(0.0);  // empty mask contributes nothing, no gradient
        return {push(std::move(n))};
    }
    n.val = Tensor::scalar(sum / count);
    n.bwd = [row_values, count, mask = std::move(mask)](Tape& t, const Node& self) {
        auto& ga = t.grad_of(row_values.id);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            ga[i] += self.g[0] * mask[i] / count;
        }
    };
    return {push(std::move(n))};
}

void Tape::backward(Var loss) {
    check_id(loss);
    if (!val_of(loss.id).is_scalar()) {
        throw ContractError("backward: loss must be scalar, got " +
                            val_of(loss.id).shape_str());
    }
    for (Node& n : nodes_) n.g.assign(n.v().size(), 0.0);
    nodes_[loss.id].g[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (nodes_[i].bwd) nodes_[i].bwd(*this, nodes_[i]);
    }
    for (Node& n : nodes_) {
        if (n.ext && n.ext->trainable) {
            n.ext->ensure_grad();
            for (std::size_t i = 0; i < n.g.size(); ++i) n.ext->grad[i] += n.g[i];
        }
    }
}

double grad_check(const std::function<double(bool)>& model_loss,
                  const std::vector<Tensor*>& params, double eps) {
    if (eps <= 0.0) throw HyperError("grad_check: eps must be positive");
    for (Tensor* p : params) p->zero_grad();
    double base = model_loss(true);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor* p : params) analytic.push_back(p->grad);

    double max_err = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor* p = params[pi];
        for (std::size_t i = 0; i < p->values.size(); ++i) {
            double saved = p->values[i];
            p->values[i] = saved + eps;
            double up = model_loss(false);
            p->values[i] = saved - eps;
            double down = model_loss(false);
            p->values[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: non-finite loss during perturbation");
            }
            double numeric = (up - down) / (2.0 * eps);
            double err = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace cldet
