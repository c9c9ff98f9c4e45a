#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "merc/common.hpp"

namespace merc {

/// Dense row-major matrix. The default scalar is double; float is the
/// opt-in 32-bit mode and shares all code paths via the template parameter.
template <typename T>
class Mat {
  public:
    Mat() = default;
    Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, T(0)) {
        if (rows < 0 || cols < 0) throw ShapeError("negative dimensions " + shape_str());
    }
    Mat(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != static_cast<size_t>(rows) * cols)
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " + shape_str());
    }

    static Mat zeros(int rows, int cols) { return Mat(rows, cols); }
    static Mat full(int rows, int cols, T v) {
        Mat m(rows, cols);
        for (auto& x : m.data_) x = v;
        return m;
    }
    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
    const T* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    void fill(T v) {
        for (auto& x : data_) x = v;
    }
    void set_zero() { fill(T(0)); }

    bool all_finite() const {
        for (const auto& x : data_)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    bool operator==(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

template <typename T>
inline void check_same_shape(const Mat<T>& a, const Mat<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace merc
