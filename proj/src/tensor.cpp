#include "actconv/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace actconv {

namespace {

std::int64_t checked_element_count(std::int64_t n, std::int64_t c,
                                   std::int64_t h, std::int64_t w) {
    const std::int64_t dims[4] = {n, c, h, w};
    std::int64_t total = 1;
    for (std::int64_t d : dims) {
        if (d < 0) {
            throw std::invalid_argument("tensor dim must be non-negative");
        }
        if (d != 0 && total > std::numeric_limits<std::int64_t>::max() / d) {
            throw std::overflow_error("tensor element count overflows");
        }
        total *= d;
    }
    return total;
}

}  // namespace

Tensor::Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
               double fill)
    : n_(n), c_(c), h_(h), w_(w) {
    const std::int64_t total = checked_element_count(n, c, h, w);
    data_.assign(static_cast<std::size_t>(total), fill);
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h,
                  std::int64_t w) const {
    if (n < 0 || n >= n_ || c < 0 || c >= c_ || h < 0 || h >= h_ || w < 0 ||
        w >= w_) {
        throw std::out_of_range("tensor index out of range");
    }
    return data_[offset(n, c, h, w)];
}

double& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h,
                   std::int64_t w) {
    if (n < 0 || n >= n_ || c < 0 || c >= c_ || h < 0 || h >= h_ || w < 0 ||
        w >= w_) {
        throw std::out_of_range("tensor index out of range");
    }
    return data_[offset(n, c, h, w)];
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) {
        throw std::runtime_error("non-finite values in " + what);
    }
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(" << n_ << "," << c_ << "," << h_ << "," << w_ << ")";
    return os.str();
}

}  // namespace actconv
