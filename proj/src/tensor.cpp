#include "gridwatch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gridwatch {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
        if (d < 0) throw ValidationError("Tensor: negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, 0.0);
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

void Tensor::assert_finite(const char* what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw ValidationError(std::string("non-finite value in ") + what);
        }
    }
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other)) throw ShapeError("Tensor +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    if (!same_shape(other)) throw ShapeError("Tensor -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

}  // namespace gridwatch
