#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace umsn {

using real = double;

/// Dense row-major tensor of doubles. Feature maps use the {N,C,H,W} layout,
/// images {C,H,W}, vectors {N}, scalars {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), 0.0);
    }
    Tensor(std::vector<int> shape, real fill) : shape_(std::move(shape)) {
        data_.assign(count(shape_), fill);
    }
    static Tensor scalar(real v) { return Tensor({1}, v); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    real& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    real operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // {N,C,H,W} accessors
    real& at(int n, int c, int h, int w) {
        return data_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    real at(int n, int c, int h, int w) const {
        return data_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    // {C,H,W} accessors
    real& at(int c, int h, int w) {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(c) * shape_[1] + h) * shape_[2] + w)];
    }
    real at(int c, int h, int w) const {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(c) * shape_[1] + h) * shape_[2] + w)];
    }
    // {H,W} accessors
    real& at(int h, int w) { return data_[static_cast<size_t>(static_cast<std::int64_t>(h) * shape_[1] + w)]; }
    real at(int h, int w) const { return data_[static_cast<size_t>(static_cast<std::int64_t>(h) * shape_[1] + w)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(real v) { data_.assign(data_.size(), v); }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != size()) throw std::invalid_argument("reshape: element count mismatch");
        Tensor out = *this;
        out.shape_ = std::move(shape);
        return out;
    }

    std::string shape_str() const {
        std::string s = "{";
        for (size_t i = 0; i < shape_.size(); ++i) s += (i ? "," : "") + std::to_string(shape_[i]);
        return s + "}";
    }

private:
    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = shape.empty() ? 0 : 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<real> data_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace umsn
