#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "netmis/rng.hpp"
#include "netmis/sample.hpp"

namespace netmis {
namespace simgen {

/// Undirected latent network with unit positions on [0,1]^2.
/// Invariants: hollow, symmetric; no link beyond L1 distance radius.
struct LatentNetwork {
    int n = 0;
    double radius = 0.0;                   // (r_deg / n)^(1/2)
    Eigen::MatrixXd positions;             // n x 2
    std::vector<std::vector<int>> nbrs;    // sorted neighbor lists

    bool linked(int i, int j) const;
    long total_links() const;              // ordered-pair count, sum_i deg_i
};

/// Misclassification law of one network proxy.
///   p_omega   per-unit probability of ever misreporting
///   p_u_miss  per-link false-negative probability (1 - p^U)
///   p_v_rate  false-positive scale delta^V, per-pair rate delta^V / n
///   copula_rho  cross-proxy error correlation (0 = independent draws)
struct MisclassModel {
    double p_omega = 0.0;
    double p_u_miss = 0.0;
    double p_v_rate = 0.0;
    double copula_rho = 0.0;
};

struct SimConfig {
    int n = 1000;
    double r_deg = 5.0;
    std::array<double, 3> beta{-0.25, 0.5, -1.0};
    std::array<double, 7> theta_true{0.0, 1.0, 1.0 / 3.0, 1.0, -1.0, -0.5, 1.0};
    double p_treat = 0.3;
    double p_z = 0.5;                      // Bernoulli covariate
    MisclassModel proxy1, proxy2;
    double eps_idio_sd = 1.0;              // idiosyncratic disturbance scale
    double peer_v_sd = std::sqrt(0.5);     // shared peer shock scale
    std::uint64_t seed = 1;
};

/// One generated replication: observed sample plus latent ground truth.
struct SimData {
    Sample sample;
    LatentNetwork latent;
    Eigen::VectorXi deg_star, s_star;
    DepNeighborhoods nbrs;
    // ordered-pair misclassification counts per proxy: {1->0, 0->1}
    std::array<long, 2> flips1{0, 0}, flips2{0, 0};
};

Eigen::MatrixXd gen_positions(int n, Rng& rng);

LatentNetwork gen_latent_network(const Eigen::MatrixXd& positions,
                                 const Eigen::VectorXi& z,
                                 const std::array<double, 3>& beta, double r_deg,
                                 Rng& rng);

/// Perturbs the latent network into two proxies. Pair (i,j), i<j, is
/// misreported only when omega_i = 1 (lower-indexed unit's switch); the
/// upper triangle is drawn and mirrored so proxies stay undirected.
/// copula_rho couples (U, U~) and (V, V~) through bivariate normal copulas.
struct PerturbResult {
    std::vector<std::vector<int>> nbrs1, nbrs2;
    std::array<long, 2> flips1{0, 0}, flips2{0, 0};
};
PerturbResult perturb_network(const LatentNetwork& latent, const MisclassModel& m1,
                              const MisclassModel& m2, Rng& rng);

Eigen::VectorXi gen_treatment(int n, double p_treat, Rng& rng);

Eigen::VectorXd gen_outcomes(const Eigen::VectorXi& d, const Eigen::VectorXi& z,
                             const LatentNetwork& latent,
                             const std::array<double, 7>& theta,
                             double eps_idio_sd, double peer_v_sd, Rng& rng);

/// Degree and treated-neighbor count per unit.
struct NetworkStats {
    Eigen::VectorXi deg, s;
};
NetworkStats network_stats(const std::vector<std::vector<int>>& nbrs,
                           const Eigen::VectorXi& d);

DepNeighborhoods build_dep_neighborhoods(const Eigen::MatrixXd& positions, double r);

/// Full replication from one root seed; substreams per component.
SimData simulate(const SimConfig& cfg);

}  // namespace simgen
}  // namespace netmis
