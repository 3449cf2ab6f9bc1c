#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tfh {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape &shape);
std::size_t shape_size(const Shape &shape);

/// Dense row-major array of doubles. Plain value type; gradient bookkeeping
/// lives on the Tape, not here.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor filled(Shape shape, double v);

    const Shape &shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double> &values() const { return data_; }

    double &operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double &operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const;
    bool all_finite() const;

    bool operator==(const Tensor &other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace tfh
