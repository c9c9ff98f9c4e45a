#pragma once

#include <algorithm>
#include <cmath>

#include "merc/matrix.hpp"

// Dense kernels in two flavours: a plain serial reference (kernels::ref) and
// OpenMP-parallel versions (kernels::omp). Both compute every output element
// with the identical inner summation order, so their results are bit-equal
// and thread count never changes numerics. The unprefixed entry points
// dispatch on the configured thread count and the problem size.

namespace merc::kernels {

int max_threads();
void set_max_threads(int n);
/// True when the caller already runs inside an OpenMP parallel region
/// (kernels then stay serial instead of nesting teams).
bool in_parallel_region();

// Work below this many output elements is not worth a parallel region.
inline constexpr size_t kParallelCutoff = 4096;

namespace ref {

// C = A(m,k) * B(k,n), optionally accumulating into C.
template <typename T>
void matmul_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool acc) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            T s = T(0);
            for (int l = 0; l < k; ++l) s += arow[l] * b(l, j);
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

// C = A(m,k) * B(n,k)^T
template <typename T>
void matmul_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool acc) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    for (int i = 0; i < m; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            const T* brow = b.row(j);
            T s = T(0);
            for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

// C = A(k,m)^T * B(k,n)
template <typename T>
void matmul_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool acc) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        T* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            T s = T(0);
            for (int l = 0; l < k; ++l) s += a(l, i) * b(l, j);
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

// Row-wise softmax with max subtraction.
template <typename T>
void softmax_rows(const Mat<T>& x, Mat<T>& y) {
    for (int i = 0; i < x.rows(); ++i) {
        const T* xr = x.row(i);
        T* yr = y.row(i);
        T mx = xr[0];
        for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, xr[j]);
        T sum = T(0);
        for (int j = 0; j < x.cols(); ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < x.cols(); ++j) yr[j] /= sum;
    }
}

}  // namespace ref

namespace omp {

template <typename T>
void matmul_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool acc) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            T s = T(0);
            for (int l = 0; l < k; ++l) s += arow[l] * b(l, j);
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

template <typename T>
void matmul_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool acc) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            const T* brow = b.row(j);
            T s = T(0);
            for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

template <typename T>
void matmul_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool acc) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            T s = T(0);
            for (int l = 0; l < k; ++l) s += a(l, i) * b(l, j);
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

template <typename T>
void softmax_rows(const Mat<T>& x, Mat<T>& y) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < x.rows(); ++i) {
        const T* xr = x.row(i);
        T* yr = y.row(i);
        T mx = xr[0];
        for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, xr[j]);
        T sum = T(0);
        for (int j = 0; j < x.cols(); ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < x.cols(); ++j) yr[j] /= sum;
    }
}

}  // namespace omp

template <typename T>
inline bool use_parallel(size_t out_elems, size_t inner) {
    return max_threads() > 1 && !in_parallel_region() &&
           out_elems * std::max<size_t>(inner, 1) >= kParallelCutoff;
}

template <typename T>
Mat<T> matmul_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>* into = nullptr, bool acc = false) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
    Mat<T> local;
    Mat<T>& c = into ? *into : local;
    if (!into) c = Mat<T>(a.rows(), b.cols());
    if (use_parallel<T>(static_cast<size_t>(a.rows()) * b.cols(), a.cols()))
        omp::matmul_nn(a, b, c, acc);
    else
        ref::matmul_nn(a, b, c, acc);
    return into ? Mat<T>() : std::move(c);
}

template <typename T>
void matmul_nt_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: " + a.shape_str() + " * " + b.shape_str() + "^T");
    if (use_parallel<T>(static_cast<size_t>(a.rows()) * b.rows(), a.cols()))
        omp::matmul_nt(a, b, c, true);
    else
        ref::matmul_nt(a, b, c, true);
}

template <typename T>
void matmul_tn_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: " + a.shape_str() + "^T * " + b.shape_str());
    if (use_parallel<T>(static_cast<size_t>(a.cols()) * b.cols(), a.rows()))
        omp::matmul_tn(a, b, c, true);
    else
        ref::matmul_tn(a, b, c, true);
}

template <typename T>
Mat<T> softmax_rows(const Mat<T>& x) {
    if (x.empty()) throw ShapeError("softmax_rows: empty input");
    if (!x.all_finite()) throw NumericError("softmax_rows: non-finite input");
    Mat<T> y(x.rows(), x.cols());
    if (use_parallel<T>(x.size(), 2))
        omp::softmax_rows(x, y);
    else
        ref::softmax_rows(x, y);
    return y;
}

}  // namespace merc::kernels
