#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hairshift/errors.hpp"

namespace hairshift {

// Dense row-major tensor of doubles. All numeric state in the library lives
// in these; persistence narrows to f32 at the file boundary.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data) {
        if (count(shape) != data.size())
            throw DimensionError("tensor data size does not match shape");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Indexing helpers for the common ranks.
    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at3(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    double at3(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { data_.assign(data_.size(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    void require_same_shape(const Tensor& o) const {
        if (!same_shape(o)) throw DimensionError("tensor shape mismatch: " + shape_str() + " vs " + o.shape_str());
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = shape.empty() ? 0 : 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sum_sq(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double mse(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

}  // namespace hairshift
