#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mugat {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes are incompatible. The message always names the
/// shapes involved.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a value or gradient stops being finite.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Allocator handing out 64-byte aligned blocks. Vectorised reductions then
/// see the same alignment for every buffer, so results do not depend on where
/// the allocator happened to place the data.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept
    {
        return true;
    }
};

template <typename T>
using Storage = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major tensor of real values.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill)
    {
        check_dims();
    }

    Tensor(Shape shape, Storage<T> data)
      : shape_(std::move(shape)), data_(std::move(data))
    {
        check_dims();
        if (data_.size() != shape_numel(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), Storage<T>(data.begin(), data.end())) {}

    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values)
    {
        return Tensor({rows, cols}, Storage<T>(values));
    }

    static Tensor vector(std::initializer_list<T> values)
    {
        return Tensor({values.size()}, Storage<T>(values));
    }

    static Tensor scalar(T value) { return Tensor({1}, Storage<T>{value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Row count of the tensor viewed as a matrix (leading dims collapsed).
    std::size_t rows() const
    {
        if (shape_.empty()) return 0;
        return shape_.size() == 1 ? 1 : data_.size() / shape_.back();
    }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    Storage<T>& values() noexcept { return data_; }
    const Storage<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool all_finite() const
    {
        for (const T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const
    {
        Storage<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const
    {
        for (const std::size_t d : shape_) {
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }

    Shape shape_;
    Storage<T> data_;
};

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b)
{
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    T worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace mugat
