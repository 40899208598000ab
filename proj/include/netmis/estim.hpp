#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "netmis/ident.hpp"
#include "netmis/kde.hpp"
#include "netmis/sample.hpp"

namespace netmis {
namespace estim {

/// Parametric conditional average structural function m*(d, s, z, n; theta).
/// Linear models supply a feature map with m* = features . theta; the
/// default map mirrors the simulation outcome equation:
///   (1, d, d*n*z, s, s^2, s*z, s*n).
struct CasfModel {
    int dim = 7;
    bool linear = true;
    std::function<Eigen::VectorXd(double d, double s, const Eigen::VectorXd& z, double n)>
        features;
    // nonlinear models supply value (and optionally grad; finite differences
    // otherwise)
    std::function<double(double d, double s, const Eigen::VectorXd& z, double n,
                         const Eigen::VectorXd& theta)>
        value;
    std::function<Eigen::VectorXd(double d, double s, const Eigen::VectorXd& z, double n,
                                  const Eigen::VectorXd& theta)>
        grad;

    static CasfModel default_linear();

    double m_star(double d, double s, const Eigen::VectorXd& z, double n,
                  const Eigen::VectorXd& theta) const;
    Eigen::VectorXd m_star_grad(double d, double s, const Eigen::VectorXd& z, double n,
                                const Eigen::VectorXd& theta) const;
};

struct ThetaFit {
    Eigen::VectorXd theta_hat;
    Eigen::MatrixXd hessian_H;    // (1/N) sum d g_i / d theta'
    Eigen::MatrixXd meat_Omega;   // dependency-neighborhood outer-product sum / N
    Eigen::MatrixXd cov;          // H^-1 Omega H^-1 / N, symmetrized
    double objective_value = 0.0;
    int n_used = 0;               // rows with positive trimming weight
};

enum class EffectKind { Treatment, Spillover };

struct EffectQuery {
    EffectKind kind;
    double s = 0.0, z = 0.0, n = 0.0;
};

struct EffectEstimate {
    EffectQuery query;
    double value = 0.0;
    double std_error = 0.0;
};

/// Observed conditional mean as the posterior-weighted CASF mixture.
double mixed_mean(const ident::Cell& x, const Eigen::VectorXd& z_row,
                  const Eigen::VectorXd& theta, const ident::LatentPosterior& posterior,
                  const CasfModel& model);

/// Weighted least squares of Y on the posterior-mixed regressors (linear
/// models solve the normal equations exactly; nonlinear models run
/// Gauss-Newton with step halving). Hessian and meat are filled by
/// sandwich_variance.
ThetaFit fit_theta(const Sample& sample,
                   const std::vector<std::optional<ident::LatentPosterior>>& posteriors,
                   const CasfModel& model, const Eigen::VectorXd& tau);

/// Treatment / spillover contrasts of the fitted CASF with delta-method
/// standard errors (exact for linear models).
std::vector<EffectEstimate> effects(const ThetaFit& fit, const CasfModel& model,
                                    const std::vector<EffectQuery>& queries);

/// Closed-form conditional propensity of the effective treatment (d, s).
double propensity(int d, int s, int n, double p1);

/// Nadaraya-Watson CASF estimate from a single proxy; exact cell mean when
/// every conditioning variable is discrete.
double single_proxy_casf(const Sample& sample, int proxy, int d, int s,
                         const Eigen::VectorXd& z, int n, double h);

struct SpeOptions {
    ident::Mode mode = ident::Mode::NoFalsePositive;
    int cond_proxy = 2;            // proxy carrying one type of error
    double p_treat = -1.0;         // < 0: use the sample mean of d
    double h = -1.0;               // < 0: N^{-bandwidth_exp}
    double bandwidth_exp = 3.0 / 8.0;
    double eps_trim = 1e-3;        // posterior cell guard on f(deg | z)
    double eps_trim_joint = 1e-3;  // objective trim on f(deg, z)
    bool delta_correction = true;
    double fd_step = 1e-5;
    ident::RecoverOptions recover;
};

/// One identified z-cell: accumulation tables plus recovered components.
struct ZCell {
    Eigen::VectorXd zc;
    Eigen::VectorXi zd;
    Eigen::VectorXd z_row;         // original z coordinates
    double mass_share = 0.0;       // kernel mass at z divided by N
    ident::ObservedTables tables;
    ident::ObservedMatrices obs;   // sliced at the identified support
    ident::IdentComponents comp;
};

struct SpeFit {
    ThetaFit fit;
    std::vector<ZCell> cells;
    std::vector<int> cell_of_unit;
    std::vector<std::optional<ident::LatentPosterior>> posteriors;
    Eigen::VectorXd tau;
    Eigen::MatrixXd grad_m;        // per-unit d m / d theta at theta_hat
    double p1 = 0.0;
    double h = 0.0;
};

/// Full two-stage semiparametric fit: first-stage kernels, per-z-cell
/// eigen-recovery, posterior-mixed least squares, then the
/// dependency-neighborhood sandwich with the first-stage correction.
SpeFit fit_spe(const Sample& sample, const DepNeighborhoods& nbrs,
               const CasfModel& model, const SpeOptions& opts);

/// Sandwich variance H^-1 Omega H^-1 / N with
/// Omega = N^-1 sum_i sum_{j in Delta(i)} (g_i + delta_i)(g_j + delta_j)'.
/// delta is the plug-in first-stage correction; disabled when
/// opts.delta_correction is false (then delta = 0).
void sandwich_variance(const Sample& sample, SpeFit& spe, const CasfModel& model,
                       const DepNeighborhoods& nbrs, const SpeOptions& opts);

/// Plain OLS on one proxy's regressors, dependency-neighborhood sandwich
/// with no first-stage correction. proxy 1 or 2; explicit columns overload
/// serves the infeasible latent-network baseline.
ThetaFit naive_ols(const Sample& sample, int proxy, const CasfModel& model,
                   const DepNeighborhoods& nbrs);
ThetaFit naive_ols_at(const Sample& sample, const Eigen::VectorXi& s,
                      const Eigen::VectorXi& deg, const CasfModel& model,
                      const DepNeighborhoods& nbrs);

}  // namespace estim
}  // namespace netmis
