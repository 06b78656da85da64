#pragma once

#include "wsaflow/tensor.hpp"

namespace wsaflow {

// Local structure descriptor: per point i and neighbor k the per-channel
// absolute coordinate difference scaled by 1/C (C = 3). The euclidean variant
// collapses each neighbor to a single scaled distance instead.
template <typename T>
TensorT<T> local_structure(const TensorT<T>& coords, const IndexTable& idx,
                           bool euclidean = false) {
    if (coords.ndim() != 2 || coords.dim(1) != 3)
        throw DimensionError("local_structure: coords must be [N,3]");
    if (idx.rows != coords.dim(0))
        throw DimensionError("local_structure: index rows must match point count");
    auto diffs = sub_bcast(gather(coords, idx), coords);  // [N,K,3]
    if (euclidean) {
        auto d = l2norm_rows(diffs);  // [N,K]
        return scale(reshape(d, {idx.rows, idx.cols, 1}), T(1) / T(3));
    }
    return scale(abs_t(diffs), T(1) / T(3));
}

// delta_DD: elementwise |delta(P) - delta(P^w)| over paired neighborhoods.
template <typename T>
TensorT<T> deformation_degree(const TensorT<T>& src_struct, const TensorT<T>& warped_struct) {
    if (src_struct.shape() != warped_struct.shape())
        throw DimensionError("deformation_degree: structure shapes differ");
    return abs_t(sub(src_struct, warped_struct));
}

// [N,K,C] -> [N,K*C] view for the estimator input.
template <typename T>
TensorT<T> flatten_structure(const TensorT<T>& dd) {
    if (dd.ndim() != 3) throw DimensionError("flatten_structure: expected [N,K,C]");
    return reshape(dd, {dd.dim(0), dd.dim(1) * dd.dim(2)});
}

}  // namespace wsaflow
