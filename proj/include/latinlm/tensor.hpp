#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace latinlm {

// Training and inference run in double; checkpoints store float32.
using Real = double;

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

// Dense row-major tensor. Rank 1 or 2 is all the encoder needs; attention
// score blocks are kept as per-head 2-D views into rank-2 storage.
struct Tensor {
    std::vector<Real> data;
    std::vector<int> shape;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.assign(static_cast<size_t>(t.numel()), 0.0);
        return t;
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const {
        if (shape.size() == 1) return 1;
        return shape.size() >= 2 ? shape[1] : 0;
    }

    Real* ptr() { return data.data(); }
    const Real* ptr() const { return data.data(); }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline MatMap mat(Tensor& t) {
    if (t.shape.size() != 2) throw std::logic_error("mat() needs a rank-2 tensor");
    return MatMap(t.ptr(), t.shape[0], t.shape[1]);
}

inline ConstMatMap mat(const Tensor& t) {
    if (t.shape.size() != 2) throw std::logic_error("mat() needs a rank-2 tensor");
    return ConstMatMap(t.ptr(), t.shape[0], t.shape[1]);
}

inline VecMap vec(Tensor& t) { return VecMap(t.ptr(), t.numel()); }
inline ConstVecMap vec(const Tensor& t) { return ConstVecMap(t.ptr(), t.numel()); }

// 2-D map over an arbitrary contiguous block
inline MatMap block(Real* p, int r, int c) { return MatMap(p, r, c); }
inline ConstMatMap block(const Real* p, int r, int c) { return ConstMatMap(p, r, c); }

}  // namespace latinlm
