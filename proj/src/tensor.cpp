#include "cldet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cldet/errors.hpp"

namespace cldet {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in)
    : shape(std::move(shape_in)), values(product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
    if (product(shape) != values.size()) {
        throw DimensionError("tensor: shape " + shape_str() + " does not match buffer of " +
                             std::to_string(values.size()) + " values");
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> v) {
    return Tensor({r, c}, std::move(v));
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape); }

std::size_t Tensor::rows() const {
    return shape.size() >= 2 ? shape[0] : 1;
}

std::size_t Tensor::cols() const {
    return shape.empty() ? 0 : shape.back();
}

double Tensor::item() const {
    if (!is_scalar()) {
        throw ContractError("tensor: item() on non-scalar of shape " + shape_str());
    }
    return values[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() {
    grad.assign(values.size(), 0.0);
}

namespace kernels {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
    std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_grad_a(const double* dc, const double* b, double* da,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = dc + i * n;
        double* darow = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

void matmul_grad_b(const double* a, const double* dc, double* db,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* dcrow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            double* dbrow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void add_bias(const double* a, const double* bias, double* out,
              std::size_t r, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = a + i * c;
        double* orow = out + i * c;
        for (std::size_t j = 0; j < c; ++j) orow[j] = arow[j] + bias[j];
    }
}

void relu(const double* a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void scale(const double* a, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void log_softmax_rows(const double* a, double* out, std::size_t r, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = a + i * c;
        double* orow = out + i * c;
        double mx = arow[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, arow[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(arow[j] - mx);
        double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < c; ++j) orow[j] = arow[j] - lse;
    }
}

void softmax_rows(const double* a, double* out, std::size_t r, std::size_t c) {
    log_softmax_rows(a, out, r, c);
    for (std::size_t i = 0; i < r * c; ++i) out[i] = std::exp(out[i]);
}

}  // namespace kernels

}  // namespace cldet
