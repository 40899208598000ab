#pragma once

#include <Eigen/Dense>
#include <vector>

#include "netmis/sample.hpp"

namespace netmis {
namespace kde {

/// Gaussian kernel, the default univariate kappa.
double gaussian(double u);

/// Product kernel h^{-Q} prod_q kappa(u_q / h) over the continuous
/// coordinates; Q = u.size().
double product_kernel(const Eigen::VectorXd& u, double h);

/// Column roles of one joint-density evaluator over the sample.
/// Continuous columns index into a dense matrix, discrete into an int matrix.
struct VarSpec {
    std::vector<int> continuous_cols;
    std::vector<int> discrete_cols;
};

/// Kernel estimator of a mixed joint probability function:
///   f(w) = N^{-1} sum_i K(Wc_i, wc) 1[Wd_i = wd]
/// Q = 0 degenerates to the empirical frequency of the discrete cell.
class JointDensity {
  public:
    JointDensity() = default;
    JointDensity(Eigen::MatrixXd continuous, Eigen::MatrixXi discrete, double h);

    double eval(const Eigen::VectorXd& wc, const Eigen::VectorXi& wd) const;

    int n() const { return static_cast<int>(std::max(cont_.rows(), disc_.rows())); }
    double bandwidth() const { return h_; }
    int q() const { return static_cast<int>(cont_.cols()); }

  private:
    Eigen::MatrixXd cont_;
    Eigen::MatrixXi disc_;
    double h_ = 1.0;
};

/// First-stage nuisance vector: the five joint density evaluators.
/// All five share the sample and bandwidth, so discrete margins cohere
/// exactly (summing f(ndeg_i, ndeg_c, z) over ndeg_i equals f(ndeg_c, z)).
struct GammaHat {
    JointDensity f_degI_degC_y_z;   // instrument deg, conditioning deg, outcome, z
    JointDensity f_degI_degC_z;
    JointDensity f_s_degC_z;
    JointDensity f_degC_z;
    JointDensity f_z;
    double h = 0.0;
    int cond_proxy = 2;

    // cached sample columns used by the weighted-mean entries
    Eigen::VectorXd y;
    Eigen::VectorXi deg_inst, deg_cond, s_cond;
    Eigen::MatrixXd zc;             // continuous z columns
    Eigen::MatrixXi zd;             // discrete z columns
};

/// Builds the five evaluators; `cond_proxy` selects which proxy plays the
/// conditioning role (the other is the instrument).
GammaHat estimate_gamma(const Sample& sample, double h, int cond_proxy = 2);

/// Kernel-weighted E-matrix entry: the y-integrated joint at (ndeg_i, ndeg_c)
/// conditional on z, computed as the weighted cell mean of Y times the cell
/// probability given z. Identical to integrating y against the kernel joint
/// when numerator and denominator share one kernel pass.
double cond_moment_y(const GammaHat& g, const Eigen::VectorXd& zc,
                     const Eigen::VectorXi& zd, int deg_inst, int deg_cond);

/// Kernel mass at z (denominator shared by the conditional entries).
double z_mass(const GammaHat& g, const Eigen::VectorXd& zc, const Eigen::VectorXi& zd);

/// Joint cell probability f(deg_inst, deg_cond | z) via the shared pass.
double cond_joint_deg(const GammaHat& g, const Eigen::VectorXd& zc,
                      const Eigen::VectorXi& zd, int deg_inst, int deg_cond);

}  // namespace kde
}  // namespace netmis
