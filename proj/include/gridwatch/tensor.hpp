#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "gridwatch/errors.hpp"

namespace gridwatch {

// Dense row-major tensor of doubles. Rank 1..3 is all this project needs.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(int d0) : Tensor(std::vector<int>{d0}) {}
    Tensor(int d0, int d1) : Tensor(std::vector<int>{d0, d1}) {}
    Tensor(int d0, int d1, int d2) : Tensor(std::vector<int>{d0, d1, d2}) {}

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int i) { return data_[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data_[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    void fill(double v);
    void zero() { fill(0.0); }

    // Throws ValidationError if any entry is NaN/Inf; `what` names the tensor.
    void assert_finite(const char* what) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace gridwatch
