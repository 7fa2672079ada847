#include "ptmotion/bss.hpp"

#include "ptmotion/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>

namespace ptmotion::bss {

namespace {

// Flip each column so its largest-magnitude entry is positive; ties take the
// first (lowest-index) maximal entry. Makes the decomposition reproducible.
void canonicalize_column_signs(Eigen::MatrixXd& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    Index at = 0;
    double best = -1.0;
    for (Index r = 0; r < m.rows(); ++r) {
      double a = std::abs(m(r, c));
      if (a > best) {
        best = a;
        at = r;
      }
    }
    if (m(at, c) < 0.0) m.col(c) = -m.col(c);
  }
}

}  // namespace

RealizedMatrix center_columns(const Eigen::MatrixXd& data) {
  if (!data.allFinite()) throw Error("realize: non-finite input");
  RealizedMatrix m;
  m.column_means = data.colwise().mean();
  m.data = data.rowwise() - m.column_means.transpose();
  return m;
}

RealizedMatrix realize(const PtRecording& rec) {
  rec.validate();
  const Index n = rec.n_samples();
  const Index c = rec.n_channels();
  Eigen::MatrixXd data(n, 2 * c);
  data.leftCols(c) = rec.samples.real();
  data.rightCols(c) = rec.samples.imag();
  return center_columns(data);
}

PcaResult pca(const RealizedMatrix& m, Index k) {
  const Index n = m.data.rows();
  const Index d = m.data.cols();
  if (n < 2) throw Error("pca: need at least 2 samples");
  if (k < 1 || k > std::min(n - 1, d))
    throw Error("pca: k=" + std::to_string(k) + " out of range [1, " +
                std::to_string(std::min(n - 1, d)) + "]");
  if (!m.data.allFinite()) throw Error("pca: non-finite input");

  Eigen::MatrixXd cov =
      (m.data.transpose() * m.data) / static_cast<double>(n - 1);
  if (!cov.allFinite()) throw Error("pca: covariance is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the trailing k, reversed.
  PcaResult out;
  out.components.resize(d, k);
  out.eigenvalues.resize(k);
  for (Index i = 0; i < k; ++i) {
    Index src = d - 1 - i;
    out.components.col(i) = solver.eigenvectors().col(src);
    out.eigenvalues(i) = std::max(solver.eigenvalues()(src), 0.0);
  }
  canonicalize_column_signs(out.components);
  out.scores = m.data * out.components;
  return out;
}

Whitened whiten(const RealizedMatrix& m, Index k) {
  PcaResult p = pca(m, k);
  const double floor = 1e-12 * std::max(p.eigenvalues(0), 0.0);
  for (Index i = 0; i < k; ++i) {
    if (!(p.eigenvalues(i) > floor))
      throw Error("whiten: rank deficiency below requested k=" + std::to_string(k) +
                  " (component " + std::to_string(i) + ")");
  }
  Eigen::VectorXd root = p.eigenvalues.array().sqrt();
  Whitened w;
  w.scores_white = p.scores * root.cwiseInverse().asDiagonal();
  w.dewhiten = p.components * root.asDiagonal();
  return w;
}

IcaResult fast_ica(const Eigen::MatrixXd& scores_white, std::uint64_t seed) {
  const Index n = scores_white.rows();
  const Index k = scores_white.cols();
  if (n < 2 || k < 1) throw Error("fast_ica: input too small");
  if (!scores_white.allFinite()) throw Error("fast_ica: non-finite input");

  // The fixed-point update assumes whitened input; reject anything else
  // loudly rather than quietly converging to junk.
  Eigen::MatrixXd cov =
      (scores_white.transpose() * scores_white) / static_cast<double>(n - 1);
  double dev = (cov - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
  if (dev > 1e-3)
    throw Error("fast_ica: input is not whitened (covariance deviates by " +
                std::to_string(dev) + ")");

  // Deterministic orthonormal start: Gaussian matrix -> QR, with the sign
  // of each R diagonal folded in so the result is unique.
  Rng rng(seed, 0x1ca);
  Eigen::MatrixXd init(k, k);
  for (Index r = 0; r < k; ++r)
    for (Index c = 0; c < k; ++c) init(r, c) = rng.gauss();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(init);
  Eigen::MatrixXd w = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd r_mat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index c = 0; c < k; ++c)
    if (r_mat(c, c) < 0.0) w.col(c) = -w.col(c);
  w.transposeInPlace();  // rows are the unmixing directions

  IcaResult out;
  const double tol = 1e-6;
  const int max_iter = 500;
  Eigen::MatrixXd u, g, w_next;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sym;
  for (int it = 1; it <= max_iter; ++it) {
    u = scores_white * w.transpose();            // N x k projections
    g = u.array().tanh();
    Eigen::VectorXd g_prime_mean =
        (1.0 - g.array().square()).colwise().mean();  // E[g'(u)] per row
    w_next = (g.transpose() * scores_white) / static_cast<double>(n) -
             g_prime_mean.asDiagonal() * w;

    // Symmetric decorrelation: W <- (W W^T)^{-1/2} W.
    sym.compute(w_next * w_next.transpose());
    if (sym.info() != Eigen::Success) throw Error("fast_ica: decorrelation failed");
    Eigen::VectorXd ev = sym.eigenvalues();
    double ev_floor = std::max(ev.maxCoeff(), 1e-300) * 1e-12;
    Eigen::VectorXd inv_root(k);
    for (Index i = 0; i < k; ++i)
      inv_root(i) = 1.0 / std::sqrt(std::max(ev(i), ev_floor));
    w_next = sym.eigenvectors() * inv_root.asDiagonal() *
             sym.eigenvectors().transpose() * w_next;

    double delta = 0.0;
    for (Index i = 0; i < k; ++i)
      delta = std::max(delta, 1.0 - std::abs(w_next.row(i).dot(w.row(i))));
    w = w_next;
    out.iterations = it;
    if (delta < tol) {
      out.converged = true;
      break;
    }
  }

  out.unmixing = w;
  out.sources = scores_white * w.transpose();
  return out;
}

}  // namespace ptmotion::bss
