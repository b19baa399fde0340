#pragma once

#include <cstddef>
#include <vector>

namespace oos {

/// Minimal dense row-major matrix. Model parameters use Mat<float>
/// (matching the on-disk format); gradients and optimizer moments use
/// Mat<double>.
template <typename T>
class Mat {
public:
    Mat() = default;
    Mat(size_t rows, size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    T& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    void fill(T value) { data_.assign(data_.size(), value); }

    bool same_shape(const Mat& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

    bool operator==(const Mat& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<T> data_;
};

using MatF = Mat<float>;
using MatD = Mat<double>;

}  // namespace oos
