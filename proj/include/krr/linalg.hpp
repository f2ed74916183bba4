#pragma once

#include <Eigen/Dense>

namespace krr {

/// Eigenvalues of a symmetric K and the coordinates V^T y of y in its
/// eigenbasis, without forming V: Householder tridiagonalization followed
/// by implicit QL whose rotations are applied to the single vector.
/// Eigenvalues are returned in descending order.
struct SpectralProjection {
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd coords;
};

SpectralProjection spectral_projection(const Eigen::MatrixXd& k, const Eigen::VectorXd& y);

}  // namespace krr
