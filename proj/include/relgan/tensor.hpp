#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace relgan {

// Shape mismatch between operands, or an op applied to an unsupported rank.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input outside an op's mathematical domain (log/sqrt of non-positive, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// A computed value came out NaN/Inf. Surfaced immediately, never propagated.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed experiment file or CLI usage.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

/// N-dimensional 64-bit float value, row-major. The payload is immutable and
/// shared, so copies are cheap and detached tensors are safe to read from
/// any thread. `node()` is the handle into the tape that produced it
/// (-1 for detached values).
class Tensor {
  public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)),
          data_(std::make_shared<const std::vector<double>>(std::move(data))) {
        if (static_cast<std::int64_t>(data_->size()) != shape_size(shape_))
            throw ShapeError("tensor: data length " + std::to_string(data_->size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }

    static Tensor zeros(Shape shape) {
        auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }

    static Tensor full(Shape shape, double v) {
        auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
    }

    bool valid() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }

    std::span<const double> data() const { return {data_->data(), data_->size()}; }
    double operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
    double at(std::int64_t r, std::int64_t c) const { return (*data_)[static_cast<std::size_t>(r * shape_[1] + c)]; }

    /// Value of a [] (scalar) tensor.
    double item() const {
        if (!shape_.empty()) throw ShapeError("item: tensor is not a scalar, shape " + shape_str(shape_));
        return (*data_)[0];
    }

    int node() const { return node_; }
    bool on_tape() const { return node_ >= 0; }

    /// Same payload without the tape handle.
    Tensor detached() const {
        Tensor t = *this;
        t.node_ = -1;
        return t;
    }

    std::vector<double> to_vector() const { return *data_; }

  private:
    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    int node_ = -1;

    friend class Tape;
};

inline void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + what);
}

}  // namespace relgan
