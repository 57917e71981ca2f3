#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ucl {

// Dense row-major tensor of doubles. Rank is small (<= 4) in practice:
// images and feature maps are (C,H,W), sampled patch matrices are (S,K),
// conv kernels are (Cout,Cin,kh,kw).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), 0.0);
    }
    Tensor(std::vector<int> shape, double fill) : Tensor(std::move(shape)) {
        for (auto& v : data_) v = fill;
    }
    Tensor(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<std::int64_t>(data_.size()) != count(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (C,H,W) accessors
    double& at3(int c, int h, int w) {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w)];
    }
    double at3(int c, int h, int w) const {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w)];
    }
    // (N,K) accessors
    double& at2(int n, int k) {
        return data_[static_cast<size_t>(static_cast<std::int64_t>(n) * dim(1) + k)];
    }
    double at2(int n, int k) const {
        return data_[static_cast<size_t>(static_cast<std::int64_t>(n) * dim(1) + k)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;
    double min() const;
    double max() const;
    double abs_max() const;
    double sum() const;

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = shape.empty() ? 0 : 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// C = A(m,k) * B(k,n), all row-major. `accumulate` adds into C instead of
// overwriting. Deterministic for any thread count (rows of C are disjoint).
void gemm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C = A^T(m,k) * B(k,n) where A is stored (k,m)
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C = A(m,k) * B^T(k,n) where B is stored (n,k)
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

}  // namespace ucl
