#include "netmis/simgen.hpp"

#include <algorithm>
#include <cmath>

#include "netmis/error.hpp"

namespace netmis {
namespace simgen {

namespace {

enum StreamTag : std::uint64_t {
    kPositions = 1,
    kCovariates,
    kLinkShocks,
    kProxyErrors,
    kTreatment,
    kOutcomeNoise,
};

}  // namespace

bool LatentNetwork::linked(int i, int j) const {
    const auto& row = nbrs[i];
    return std::binary_search(row.begin(), row.end(), j);
}

long LatentNetwork::total_links() const {
    long t = 0;
    for (const auto& row : nbrs) t += static_cast<long>(row.size());
    return t;
}

Eigen::MatrixXd gen_positions(int n, Rng& rng) {
    if (n < 0) throw BadArgs("gen_positions: negative n");
    Eigen::MatrixXd pos(n, 2);
    for (int i = 0; i < n; ++i) {
        pos(i, 0) = rng.uniform();
        pos(i, 1) = rng.uniform();
    }
    return pos;
}

LatentNetwork gen_latent_network(const Eigen::MatrixXd& positions,
                                 const Eigen::VectorXi& z,
                                 const std::array<double, 3>& beta, double r_deg,
                                 Rng& rng) {
    const int n = static_cast<int>(positions.rows());
    if (z.size() != n) throw DimMismatch("gen_latent_network: |z| != n");
    LatentNetwork net;
    net.n = n;
    net.radius = n > 0 ? std::sqrt(r_deg / n) : 0.0;
    net.positions = positions;
    net.nbrs.assign(n, {});
    // d(rho_i, rho_j) is 0 within the L1 radius and +inf beyond, so only
    // in-range pairs can link; the link shock is drawn per in-range pair in
    // fixed (i<j) order, which keeps the stream independent of beta.
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double l1 = std::abs(positions(i, 0) - positions(j, 0)) +
                        std::abs(positions(i, 1) - positions(j, 1));
            if (l1 > net.radius) continue;
            double zeta = rng.normal();
            if (beta[0] + beta[1] * (z[i] + z[j]) + zeta > 0.0) {
                net.nbrs[i].push_back(j);
                net.nbrs[j].push_back(i);
            }
        }
    }
    for (auto& row : net.nbrs) std::sort(row.begin(), row.end());
    return net;
}

PerturbResult perturb_network(const LatentNetwork& latent, const MisclassModel& m1,
                              const MisclassModel& m2, Rng& rng) {
    const int n = latent.n;
    PerturbResult out;
    out.nbrs1.assign(n, {});
    out.nbrs2.assign(n, {});
    const double pV1 = n > 0 ? m1.p_v_rate / n : 0.0;
    const double pV2 = n > 0 ? m2.p_v_rate / n : 0.0;
    if (pV1 < 0 || pV1 > 1 || pV2 < 0 || pV2 > 1)
        throw BadArgs("perturb_network: p^V out of [0,1]");
    const double rho = m1.copula_rho;
    const bool copula = rho != 0.0;
    const double rho_c = std::sqrt(1.0 - rho * rho);

    std::vector<bool> omega1(n), omega2(n);
    for (int i = 0; i < n; ++i) omega1[i] = rng.bernoulli(m1.p_omega);
    for (int i = 0; i < n; ++i) omega2[i] = rng.bernoulli(m2.p_omega);

    auto add = [](std::vector<std::vector<int>>& nb, int i, int j) {
        nb[i].push_back(j);
        nb[j].push_back(i);
    };

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            bool truth = latent.linked(i, j);
            bool keep1 = truth, keep2 = truth;
            bool need1 = omega1[i], need2 = omega2[i];
            if (copula) {
                // One latent normal 4-vector per pair; corr(U,U~)=corr(V,V~)=rho.
                if (need1 || need2) {
                    double a = rng.normal(), b = rng.normal();
                    double c = rng.normal(), e = rng.normal();
                    double u1 = normal_cdf(a), u2 = normal_cdf(rho * a + rho_c * b);
                    double v1 = normal_cdf(c), v2 = normal_cdf(rho * c + rho_c * e);
                    if (need1) keep1 = truth ? (u1 < 1.0 - m1.p_u_miss) : (v1 < pV1);
                    if (need2) keep2 = truth ? (u2 < 1.0 - m2.p_u_miss) : (v2 < pV2);
                }
            } else {
                if (need1) keep1 = truth ? !rng.bernoulli(m1.p_u_miss) : rng.bernoulli(pV1);
                if (need2) keep2 = truth ? !rng.bernoulli(m2.p_u_miss) : rng.bernoulli(pV2);
            }
            if (keep1) add(out.nbrs1, i, j);
            if (keep2) add(out.nbrs2, i, j);
            if (truth != keep1) (truth ? out.flips1[0] : out.flips1[1]) += 2;
            if (truth != keep2) (truth ? out.flips2[0] : out.flips2[1]) += 2;
        }
    }
    for (auto& row : out.nbrs1) std::sort(row.begin(), row.end());
    for (auto& row : out.nbrs2) std::sort(row.begin(), row.end());
    return out;
}

Eigen::VectorXi gen_treatment(int n, double p_treat, Rng& rng) {
    Eigen::VectorXi d(n);
    for (int i = 0; i < n; ++i) d[i] = rng.bernoulli(p_treat) ? 1 : 0;
    return d;
}

Eigen::VectorXd gen_outcomes(const Eigen::VectorXi& d, const Eigen::VectorXi& z,
                             const LatentNetwork& latent,
                             const std::array<double, 7>& theta,
                             double eps_idio_sd, double peer_v_sd, Rng& rng) {
    const int n = latent.n;
    if (d.size() != n || z.size() != n) throw DimMismatch("gen_outcomes: length mismatch");
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, peer_v_sd);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        double deg = static_cast<double>(latent.nbrs[i].size());
        double s = 0.0, peer = 0.0;
        for (int j : latent.nbrs[i]) {
            s += d[j];
            peer += v[j];
        }
        double eps = rng.normal(0.0, eps_idio_sd) + peer;
        y[i] = theta[0] + theta[1] * d[i] + theta[2] * d[i] * deg * z[i] +
               theta[3] * s + theta[4] * s * s + theta[5] * s * z[i] +
               theta[6] * s * deg + eps;
    }
    return y;
}

NetworkStats network_stats(const std::vector<std::vector<int>>& nbrs,
                           const Eigen::VectorXi& d) {
    const int n = static_cast<int>(nbrs.size());
    if (d.size() != n) throw DimMismatch("network_stats: length mismatch");
    NetworkStats st;
    st.deg.resize(n);
    st.s.resize(n);
    for (int i = 0; i < n; ++i) {
        st.deg[i] = static_cast<int>(nbrs[i].size());
        int s = 0;
        for (int j : nbrs[i]) s += d[j];
        st.s[i] = s;
    }
    return st;
}

DepNeighborhoods build_dep_neighborhoods(const Eigen::MatrixXd& positions, double r) {
    if (r < 0) throw BadArgs("build_dep_neighborhoods: negative radius");
    const int n = static_cast<int>(positions.rows());
    DepNeighborhoods d;
    d.sets.assign(n, {});
    for (int i = 0; i < n; ++i) {
        d.sets[i].push_back(i);
        for (int j = i + 1; j < n; ++j) {
            double l1 = std::abs(positions(i, 0) - positions(j, 0)) +
                        std::abs(positions(i, 1) - positions(j, 1));
            if (l1 <= r) {
                d.sets[i].push_back(j);
                d.sets[j].push_back(i);
            }
        }
    }
    for (auto& s : d.sets) std::sort(s.begin(), s.end());
    return d;
}

SimData simulate(const SimConfig& cfg) {
    if (cfg.n < 2) throw BadArgs("simulate: n < 2");
    if (cfg.p_treat <= 0.0 || cfg.p_treat >= 1.0)
        throw BadArgs("simulate: p_treat outside (0,1)");
    SimData out;
    Rng r_pos = Rng::substream(cfg.seed, kPositions);
    Rng r_cov = Rng::substream(cfg.seed, kCovariates);
    Rng r_zeta = Rng::substream(cfg.seed, kLinkShocks);
    Rng r_err = Rng::substream(cfg.seed, kProxyErrors);
    Rng r_d = Rng::substream(cfg.seed, kTreatment);
    Rng r_eps = Rng::substream(cfg.seed, kOutcomeNoise);

    Eigen::MatrixXd pos = gen_positions(cfg.n, r_pos);
    Eigen::VectorXi z(cfg.n);
    for (int i = 0; i < cfg.n; ++i) z[i] = r_cov.bernoulli(cfg.p_z) ? 1 : 0;

    out.latent = gen_latent_network(pos, z, cfg.beta, cfg.r_deg, r_zeta);
    auto prox = perturb_network(out.latent, cfg.proxy1, cfg.proxy2, r_err);
    out.flips1 = prox.flips1;
    out.flips2 = prox.flips2;

    Eigen::VectorXi d = gen_treatment(cfg.n, cfg.p_treat, r_d);
    Eigen::VectorXd y = gen_outcomes(d, z, out.latent, cfg.theta_true,
                                     cfg.eps_idio_sd, cfg.peer_v_sd, r_eps);

    auto stL = network_stats(out.latent.nbrs, d);
    auto st1 = network_stats(prox.nbrs1, d);
    auto st2 = network_stats(prox.nbrs2, d);
    out.deg_star = stL.deg;
    out.s_star = stL.s;

    Sample& s = out.sample;
    s.y = y;
    s.d = d;
    s.z.resize(cfg.n, 1);
    for (int i = 0; i < cfg.n; ++i) s.z(i, 0) = z[i];
    s.z_discrete = {true};
    s.s1 = st1.s;
    s.deg1 = st1.deg;
    s.s2 = st2.s;
    s.deg2 = st2.deg;
    s.positions = pos;

    out.nbrs = build_dep_neighborhoods(pos, out.latent.radius);
    return out;
}

}  // namespace simgen

DepNeighborhoods DepNeighborhoods::from_clusters(const std::vector<int>& labels) {
    const int n = static_cast<int>(labels.size());
    DepNeighborhoods d;
    d.sets.assign(n, {});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (labels[i] == labels[j]) d.sets[i].push_back(j);
    return d;
}

}  // namespace netmis
