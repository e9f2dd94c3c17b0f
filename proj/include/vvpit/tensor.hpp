#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace vvpit {

// Dense row-major tensor of 64-bit floats. Rank 0 (one element) represents a
// scalar. Values are plain `std::vector`s; copies are real copies.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(std::vector<int> shape, double v);

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::initializer_list<int> idx) { return data_[flat_index(idx)]; }
    double at(std::initializer_list<int> idx) const { return data_[flat_index(idx)]; }

    double item() const;  // requires size() == 1

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    bool all_finite() const;
    // Throws NumericError naming `context` if any value is NaN/Inf.
    void check_finite(const std::string& context) const;

private:
    std::size_t flat_index(std::initializer_list<int> idx) const;

    std::vector<int> shape_;
    std::vector<double> data_;
};

enum class EwiseOp { add, sub, mul, div, max };
enum class ReduceOp { sum, min, max, mean };

// Elementwise op on same-shape tensors, or with `b` a one-element scalar
// broadcast. div errors when any |b element| < 1e-30.
Tensor ewise(EwiseOp op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor emax(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Reduction over the given axes (result drops those axes; reducing all axes
// yields a rank-0 scalar). Accumulation runs in row-major element order.
Tensor reduce(ReduceOp op, const Tensor& t, const std::vector<int>& axes);

std::string shape_to_string(const std::vector<int>& shape);

}  // namespace vvpit
