#pragma once

#include <Eigen/Dense>

#include "gazepred/error.hpp"

namespace gazepred {

/// Linear Kalman filter with fixed state dimension N.
///
/// predict:  x <- F x + b,  P <- F P F' + Q
/// update:   Joseph-form covariance update, followed by symmetrization.
template <int N>
class KalmanFilter {
 public:
  using Vector = Eigen::Matrix<double, N, 1>;
  using Matrix = Eigen::Matrix<double, N, N>;

  KalmanFilter() : x_(Vector::Zero()), P_(Matrix::Identity()) {}
  KalmanFilter(const Vector& x0, const Matrix& P0) : x_(x0), P_(P0) {}

  const Vector& mean() const { return x_; }
  const Matrix& covariance() const { return P_; }
  Vector& mean() { return x_; }
  void set(const Vector& x, const Matrix& P) {
    x_ = x;
    P_ = P;
  }

  void predict(const Matrix& F, const Vector& b, const Matrix& Q) {
    x_ = F * x_ + b;
    P_ = F * P_ * F.transpose() + Q;
    symmetrize();
  }

  template <int M>
  void update(const Eigen::Matrix<double, M, 1>& z, const Eigen::Matrix<double, M, N>& H,
              const Eigen::Matrix<double, M, M>& R) {
    const Eigen::Matrix<double, M, 1> innovation = z - H * x_;
    Eigen::Matrix<double, M, M> S = H * P_ * H.transpose() + R;
    Eigen::LLT<Eigen::Matrix<double, M, M>> llt(S);
    if (llt.info() != Eigen::Success) {
      symmetrize();
      S = H * P_ * H.transpose() + R;
      S = 0.5 * (S + S.transpose()).eval();
      llt.compute(S);
      if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is not positive definite");
    }
    // K = P H' S^-1
    const Eigen::Matrix<double, N, M> K = llt.solve(H * P_).transpose();
    x_ += K * innovation;
    const Matrix I_KH = Matrix::Identity() - K * H;
    P_ = I_KH * P_ * I_KH.transpose() + K * R * K.transpose();
    symmetrize();
  }

  void symmetrize() { P_ = 0.5 * (P_ + P_.transpose()).eval(); }

 private:
  Vector x_;
  Matrix P_;
};

}  // namespace gazepred
