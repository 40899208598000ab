#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "netmis/kde.hpp"

namespace netmis {
namespace ident {

/// Which single error type the conditioning proxy carries.
enum class Mode {
    NoFalseNegative,  // latent links all reported; degree may overstate
    NoFalsePositive,  // reported links all real; degree may understate
};

/// Contiguous degree support [lo, hi] shared by the latent network and both
/// proxies. lo = 0 reproduces the plain 0..K-1 support; lo > 0 arises when
/// identification is restricted to the reliable degree window.
struct DegreeSupport {
    int lo = 0;
    int hi = -1;

    int size() const { return hi - lo + 1; }
    bool contains(int v) const { return v >= lo && v <= hi; }
};

/// Column-stochastic conditional probability matrix with a role tag.
struct StochasticMatrix {
    Eigen::MatrixXd m;
    std::string role;

    /// Checks entries in [0,1] and column sums within tol of 1.
    bool valid(double tol = 1e-10) const;
};

/// Lexicographic enumeration of latent cells (s*, n*), 0 <= s* <= n*:
/// (0,0),(0,1),(1,1),(0,2),(1,2),(2,2),...
int lexi_index(int s, int n, int k);

struct LatentSupportIndex {
    std::vector<std::pair<int, int>> pairs;
    static LatentSupportIndex build(int k);
};

/// Exact binomial pmf C(n,s) p^s (1-p)^(n-s).
double binom_pmf(int n, int s, double p1);

/// Closed-form misreport kernel under one type of measurement error.
/// Mode NoFalseNegative returns f(S = s | S* = s*, deg* = n*, deg = n);
/// NoFalsePositive returns f(S* = s* | S = s, deg = n, deg* = n*), which is
/// the mode-(a) kernel at swapped arguments. Infeasible cells return 0.
double one_type_kernel(int s, int s_star, int n, int n_star, double p1, Mode mode);

/// Degree-distribution components recovered from one z-cell.
struct IdentQuality {
    double max_imag_ratio = 0.0;   // |Im lambda| relative to spectral radius
    double clipped_mass = 0.0;     // total negative mass clipped across outputs
    bool fallback_window = false;  // support was shrunk from the full default
};

struct IdentComponents {
    StochasticMatrix f_cond_given_latent;  // conditioning proxy's degree law
    StochasticMatrix f_inst_given_latent;  // instrument proxy's degree law
    Eigen::VectorXd f_latent_deg;          // f(deg* | z) over the support
    Eigen::VectorXd t_y_given_latent;      // eigenvalues E[Y | z, deg*]
    Eigen::VectorXd deg_marg;              // f(deg_cond | z) over the support
    DegreeSupport support;
    IdentQuality quality;
};

/// Observed-side matrices for one z-cell over a degree support window.
struct ObservedMatrices {
    Eigen::MatrixXd e;          // y-integrated joint, rows deg_inst, cols deg_cond
    Eigen::MatrixXd f;          // joint degree pmf, same layout
    Eigen::VectorXd deg_marg;   // column sums of f
    DegreeSupport support;
};

/// Full-support accumulation at one z evaluation point; one pass over the
/// sample. Window blocks are sliced and renormalized from these tables.
struct ObservedTables {
    Eigen::MatrixXd e_full, f_full;
    Eigen::VectorXd hist_inst, hist_cond;  // marginal degree pmfs given z
    int max_deg = -1;
};
ObservedTables accumulate_tables(const kde::GammaHat& gamma, const Eigen::VectorXd& zc,
                                 const Eigen::VectorXi& zd);

ObservedMatrices slice_window(const ObservedTables& tables, DegreeSupport support);

ObservedMatrices build_observed_matrices(const kde::GammaHat& gamma,
                                         const Eigen::VectorXd& zc,
                                         const Eigen::VectorXi& zd,
                                         DegreeSupport support);

struct RecoverOptions {
    double imag_tol = 1e-6;    // relative to spectral radius
    double dup_tol = 1e-8;     // duplicate-eigenvalue separation
    double cond_tol = 1e12;    // SingularInput threshold on f
    double kappa = 0.02;       // window mass floor per degree cell
    int min_width = 3;
    int k_override = -1;       // force support [0, k_override-1]
};

/// Eigendecomposition recovery of the latent degree components:
///   E F^{-1}   -> eigenvectors give the instrument proxy's conditional law,
///   E' (F')^{-1} -> the conditioning proxy's,
/// each column scaled to sum 1 and placed by its claimed latent degree
/// (argmax row; assignment problem when claims collide). Negative entries
/// are clipped and columns renormalized, with the clipped mass recorded.
/// f(deg* | z) then solves the conditioning proxy's law against deg_marg.
IdentComponents eigen_recover(const ObservedMatrices& obs,
                              const RecoverOptions& opts = {});

/// Support policy: try the full observed support first; if recovery fails
/// its error contracts, retry on the widest degree window with both
/// marginal pmfs >= kappa, shrinking an end at a time (widest-first).
IdentComponents recover_auto(const ObservedTables& tables,
                             const RecoverOptions& opts = {});

/// Latent exposure posterior at one observed cell.
struct Cell {
    int d = 0;
    double z = 0.0;  // recorded; the components already condition on z
    int s = 0;
    int n = 0;
};

struct LatentPosterior {
    Cell cell;
    struct Entry {
        int s_star, n_star;
        double prob;
    };
    std::vector<Entry> entries;   // feasible cells only, probs sum to 1
    double pre_norm_sum = 0.0;    // quality: should be near 1 with exact inputs
};

/// Assembles the six-factor posterior f(S*, deg* | D, S, Z, deg):
/// misreport kernel x binomial(deg*, s*) x f(deg | deg*) x f(deg*)
/// over binomial(deg, s) x f(deg), clipped at zero and renormalized.
LatentPosterior latent_posterior(const Cell& x, const IdentComponents& comp,
                                 double p1, Mode mode, double eps_trim = 1e-3);

/// Strict upper- and lower-triangle mass of a conditional degree law;
/// descriptive check of the one-type assumption (no test statistic).
std::pair<double, double> triangularity_diagnostic(const StochasticMatrix& f);

}  // namespace ident
}  // namespace netmis
