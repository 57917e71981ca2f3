#include "ucl/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ucl {

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
}

double Tensor::abs_max() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

namespace {

using CMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int block_rows(int m) {
#ifdef _OPENMP
    int nt = omp_get_max_threads();
#else
    int nt = 1;
#endif
    int b = (m + nt - 1) / nt;
    return std::max(1, b);
}

}  // namespace

void gemm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) std::fill(c, c + static_cast<std::int64_t>(m) * n, 0.0);
        return;
    }
    const int br = block_rows(m);
#pragma omp parallel for schedule(static)
    for (int r0 = 0; r0 < m; r0 += br) {
        const int rows = std::min(br, m - r0);
        CMat A(a + static_cast<std::int64_t>(r0) * k, rows, k);
        CMat B(b, k, n);
        MMat C(c + static_cast<std::int64_t>(r0) * n, rows, n);
        if (accumulate)
            C.noalias() += A * B;
        else
            C.noalias() = A * B;
    }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) std::fill(c, c + static_cast<std::int64_t>(m) * n, 0.0);
        return;
    }
    const int br = block_rows(m);
#pragma omp parallel for schedule(static)
    for (int r0 = 0; r0 < m; r0 += br) {
        const int rows = std::min(br, m - r0);
        CMat A(a, k, m);  // stored (k,m); we need rows [r0, r0+rows) of A^T = cols of A
        CMat B(b, k, n);
        MMat C(c + static_cast<std::int64_t>(r0) * n, rows, n);
        if (accumulate)
            C.noalias() += A.middleCols(r0, rows).transpose() * B;
        else
            C.noalias() = A.middleCols(r0, rows).transpose() * B;
    }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) std::fill(c, c + static_cast<std::int64_t>(m) * n, 0.0);
        return;
    }
    const int br = block_rows(m);
#pragma omp parallel for schedule(static)
    for (int r0 = 0; r0 < m; r0 += br) {
        const int rows = std::min(br, m - r0);
        CMat A(a + static_cast<std::int64_t>(r0) * k, rows, k);
        CMat B(b, n, k);
        MMat C(c + static_cast<std::int64_t>(r0) * n, rows, n);
        if (accumulate)
            C.noalias() += A * B.transpose();
        else
            C.noalias() = A * B.transpose();
    }
}

}  // namespace ucl
