#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "factsum/error.hpp"

namespace factsum {

// Dense row-major matrix of doubles. All model math runs in double so that
// central-difference gradient checks are meaningful; checkpoints quantize to
// little-endian float32 on disk.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    static Mat zeros(int r, int c) { return Mat(r, c); }
    static Mat full(int r, int c, double x) {
        Mat m(r, c);
        std::fill(m.v.begin(), m.v.end(), x);
        return m;
    }
    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
    static Mat row(std::vector<double> xs) {
        Mat m;
        m.rows = 1;
        m.cols = static_cast<int>(xs.size());
        m.v = std::move(xs);
        return m;
    }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    Mat& operator+=(const Mat& o) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Mat& operator*=(double c) {
        for (double& x : v) x *= c;
        return *this;
    }
};

inline void require_shape(const Mat& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw Error(ErrorKind::Config, std::string(what) + ": expected " + std::to_string(r) + "x" +
                                           std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                           std::to_string(m.cols));
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

// C = A * B
inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = &a.v[static_cast<std::size_t>(i) * a.cols];
        double* ci = &c.v[static_cast<std::size_t>(i) * c.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = &b.v[static_cast<std::size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

// C = A * B^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = &a.v[static_cast<std::size_t>(i) * a.cols];
        for (int j = 0; j < b.rows; ++j) {
            const double* bj = &b.v[static_cast<std::size_t>(j) * b.cols];
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            c.at(i, j) = s;
        }
    }
    return c;
}

// C = A^T * B
inline Mat matmul_tn(const Mat& a, const Mat& b) {
    Mat c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* ak = &a.v[static_cast<std::size_t>(k) * a.cols];
        const double* bk = &b.v[static_cast<std::size_t>(k) * b.cols];
        for (int i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = &c.v[static_cast<std::size_t>(i) * c.cols];
            for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

} // namespace factsum
