#pragma once

#include "ptmotion/types.hpp"

#include <cstdint>

namespace ptmotion::bss {

// Real-valued view of a complex recording: column j in [0, C) holds the real
// part of channel j, column C + j its imaginary part. Columns are
// mean-centred; the removed means are retained.
struct RealizedMatrix {
  Eigen::MatrixXd data;          // N x 2C, zero-mean columns
  Eigen::VectorXd column_means;  // length 2C
};

RealizedMatrix realize(const PtRecording& rec);

// Centre the columns of an arbitrary real matrix (same conventions as
// realize); used when a pipeline builds its own intermediate matrix.
RealizedMatrix center_columns(const Eigen::MatrixXd& data);

// Principal components of the sample covariance (divisor N-1), eigenvalues
// descending. Component sign is fixed by making each column's
// largest-magnitude entry positive.
struct PcaResult {
  Eigen::MatrixXd components;   // 2C x k, orthonormal columns
  Eigen::VectorXd eigenvalues;  // k, descending, >= 0
  Eigen::MatrixXd scores;       // N x k (centred data projected onto components)
};

PcaResult pca(const RealizedMatrix& m, Index k);

// PCA-whitened representation: scores_white has identity covariance
// (divisor N-1); scores_white * dewhiten^T reconstructs the centred data in
// the retained subspace.
struct Whitened {
  Eigen::MatrixXd scores_white;  // N x k
  Eigen::MatrixXd dewhiten;      // 2C x k
};

Whitened whiten(const RealizedMatrix& m, Index k);

// Symmetric fixed-point ICA with g(u) = tanh(u) on whitened data. Rows of
// the unmixing matrix stay orthonormal; iteration stops when every row's
// direction changes by less than 1e-6 (up to sign) or after 500 sweeps.
// The orthonormal initial matrix is drawn deterministically from the seed.
struct IcaResult {
  Eigen::MatrixXd unmixing;  // k x k, orthonormal rows
  Eigen::MatrixXd sources;   // N x k, unit variance
  bool converged = false;
  int iterations = 0;
};

IcaResult fast_ica(const Eigen::MatrixXd& scores_white, std::uint64_t seed);

}  // namespace ptmotion::bss
