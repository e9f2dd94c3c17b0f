#include "vvpit/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "vvpit/errors.hpp"

namespace vvpit {

namespace {

std::size_t checked_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DataError("tensor dimension must be positive, got shape " + shape_to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(checked_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_count(shape_) != data_.size())
        throw DataError("tensor shape " + shape_to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                        " values");
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_ = {v};
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw DataError("item() requires a one-element tensor, got shape " + shape_str());
    return data_[0];
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::check_finite(const std::string& context) const {
    if (!all_finite()) throw NumericError("non-finite value detected in " + context);
}

std::size_t Tensor::flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
        throw DataError("index rank " + std::to_string(idx.size()) + " does not match tensor shape " + shape_str());
    std::size_t flat = 0;
    int axis = 0;
    for (int i : idx) {
        const int d = shape_[static_cast<std::size_t>(axis)];
        if (i < 0 || i >= d) throw DataError("index out of range for shape " + shape_str());
        flat = flat * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
        ++axis;
    }
    return flat;
}

Tensor ewise(EwiseOp op, const Tensor& a, const Tensor& b) {
    const bool scalar_b = b.size() == 1;
    if (!scalar_b && !a.same_shape(b))
        throw DataError("ewise shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    if (op == EwiseOp::div) {
        for (std::size_t i = 0; i < b.size(); ++i)
            if (std::abs(b[i]) < 1e-30) throw NumericError("ewise div by near-zero element");
    }
    Tensor out(a.shape().empty() ? std::vector<int>{} : a.shape());
    if (a.shape().empty()) out = Tensor::scalar(0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.size();
    switch (op) {
        case EwiseOp::add:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[scalar_b ? 0 : i];
            break;
        case EwiseOp::sub:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[scalar_b ? 0 : i];
            break;
        case EwiseOp::mul:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[scalar_b ? 0 : i];
            break;
        case EwiseOp::div:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] / pb[scalar_b ? 0 : i];
            break;
        case EwiseOp::max:
            for (std::size_t i = 0; i < n; ++i) {
                const double x = pa[i], y = pb[scalar_b ? 0 : i];
                po[i] = x >= y ? x : y;
            }
            break;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return ewise(EwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return ewise(EwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return ewise(EwiseOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return ewise(EwiseOp::div, a, b); }
Tensor emax(const Tensor& a, const Tensor& b) { return ewise(EwiseOp::max, a, b); }
Tensor scale(const Tensor& a, double c) { return ewise(EwiseOp::mul, a, Tensor::scalar(c)); }

Tensor reduce(ReduceOp op, const Tensor& t, const std::vector<int>& axes) {
    if (t.empty()) throw DataError("reduce on empty tensor");
    std::vector<bool> reduced(static_cast<std::size_t>(t.rank()), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= t.rank()) throw DataError("reduce axis " + std::to_string(ax) + " invalid for shape " + t.shape_str());
        reduced[static_cast<std::size_t>(ax)] = true;
    }

    std::vector<int> out_shape;
    for (int ax = 0; ax < t.rank(); ++ax)
        if (!reduced[static_cast<std::size_t>(ax)]) out_shape.push_back(t.dim(ax));

    std::size_t out_count = 1;
    for (int d : out_shape) out_count *= static_cast<std::size_t>(d);

    std::size_t reduce_count = t.size() / out_count;

    const double init = op == ReduceOp::min ? std::numeric_limits<double>::infinity()
                        : op == ReduceOp::max ? -std::numeric_limits<double>::infinity()
                                              : 0.0;
    std::vector<double> acc(out_count, init);

    // Row-major walk; each element folds into its output slot in order.
    const int r = t.rank();
    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t out_flat = 0;
        for (int ax = 0; ax < r; ++ax) {
            if (!reduced[static_cast<std::size_t>(ax)])
                out_flat = out_flat * static_cast<std::size_t>(t.dim(ax)) + static_cast<std::size_t>(idx[static_cast<std::size_t>(ax)]);
        }
        const double v = t[flat];
        switch (op) {
            case ReduceOp::sum:
            case ReduceOp::mean: acc[out_flat] += v; break;
            case ReduceOp::min: acc[out_flat] = v < acc[out_flat] ? v : acc[out_flat]; break;
            case ReduceOp::max: acc[out_flat] = v > acc[out_flat] ? v : acc[out_flat]; break;
        }
        for (int ax = r - 1; ax >= 0; --ax) {
            if (++idx[static_cast<std::size_t>(ax)] < t.dim(ax)) break;
            idx[static_cast<std::size_t>(ax)] = 0;
        }
    }
    if (op == ReduceOp::mean)
        for (double& v : acc) v /= static_cast<double>(reduce_count);

    if (out_shape.empty()) return Tensor::scalar(acc[0]);
    return Tensor(out_shape, std::move(acc));
}

}  // namespace vvpit
