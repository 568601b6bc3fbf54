#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cldet {

// Dense row-major tensor of doubles. Rank 1 tensors are treated as a single
// row by the 2-D accessors; scalars have shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_in);
    Tensor(std::vector<std::size_t> shape_in, std::vector<double> values_in);

    static Tensor scalar(double v);
    static Tensor row(std::vector<double> v);
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v);
    static Tensor zeros_like(const Tensor& t);

    std::size_t size() const { return values.size(); }
    bool is_scalar() const { return values.size() == 1; }
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
    double item() const;  // scalar value; ContractError if not scalar

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;

    // grad is lazily allocated; accumulation never resets it implicitly
    void ensure_grad();
    void zero_grad();

    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool trainable = false;
};

// Forward kernels shared by the tape ops and the no-grad forward path, so both
// produce bitwise-identical values for identical inputs.
namespace kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// da[m x k] += dc[m x n] * b^T;  db[k x n] += a^T * dc
void matmul_grad_a(const double* dc, const double* b, double* da,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_grad_b(const double* a, const double* dc, double* db,
                   std::size_t m, std::size_t k, std::size_t n);

void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
// bias[c] broadcast over each of the r rows of a
void add_bias(const double* a, const double* bias, double* out,
              std::size_t r, std::size_t c);
void relu(const double* a, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);

// max-subtraction stabilized, along each row
void log_softmax_rows(const double* a, double* out, std::size_t r, std::size_t c);
void softmax_rows(const double* a, double* out, std::size_t r, std::size_t c);

}  // namespace kernels

}  // namespace cldet
