#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace actconv {

/// Dense 4-D array in batch x channel x height x width order, stored
/// row-major with width fastest. The universal value carrier: feature
/// maps, weights, gradients all live here.
///
/// Tensors are plain values. Shared tensors must be treated as
/// immutable by concurrent readers; there is no internal locking.
class Tensor {
public:
    Tensor() = default;

    /// Allocates an n*c*h*w buffer filled with `fill`. Dims may be zero
    /// (empty tensor); negative dims or element-count overflow throw.
    Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
           double fill = 0.0);

    std::int64_t n() const { return n_; }
    std::int64_t c() const { return c_; }
    std::int64_t h() const { return h_; }
    std::int64_t w() const { return w_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    bool same_shape(const Tensor& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h,
                        std::int64_t w) const {
        return ((n * c_ + c) * h_ + h) * w_ + w;
    }

    /// Bounds-checked element access; throws std::out_of_range.
    double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
    double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);

    /// Unchecked access for inner loops.
    double operator()(std::int64_t n, std::int64_t c, std::int64_t h,
                      std::int64_t w) const {
        return data_[offset(n, c, h, w)];
    }
    double& operator()(std::int64_t n, std::int64_t c, std::int64_t h,
                       std::int64_t w) {
        return data_[offset(n, c, h, w)];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v);
    bool all_finite() const;

    /// Throws std::runtime_error naming `what` if any entry is NaN/Inf.
    void require_finite(const std::string& what) const;

    std::string shape_str() const;

private:
    std::int64_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

}  // namespace actconv
