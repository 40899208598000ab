#include "netmis/estim.hpp"

#include <cmath>
#include <map>

#include "netmis/error.hpp"

namespace netmis {
namespace estim {

CasfModel CasfModel::default_linear() {
    CasfModel m;
    m.dim = 7;
    m.linear = true;
    m.features = [](double d, double s, const Eigen::VectorXd& z, double n) {
        double z0 = z.size() > 0 ? z[0] : 0.0;
        Eigen::VectorXd f(7);
        f << 1.0, d, d * n * z0, s, s * s, s * z0, s * n;
        return f;
    };
    return m;
}

double CasfModel::m_star(double d, double s, const Eigen::VectorXd& z, double n,
                         const Eigen::VectorXd& theta) const {
    if (theta.size() != dim) throw DimMismatch("m_star: theta dimension mismatch");
    if (linear) return features(d, s, z, n).dot(theta);
    return value(d, s, z, n, theta);
}

Eigen::VectorXd CasfModel::m_star_grad(double d, double s, const Eigen::VectorXd& z,
                                       double n, const Eigen::VectorXd& theta) const {
    if (linear) return features(d, s, z, n);
    if (grad) return grad(d, s, z, n, theta);
    Eigen::VectorXd g(dim);
    Eigen::VectorXd th = theta;
    for (int k = 0; k < dim; ++k) {
        double step = 1e-6 * (1.0 + std::abs(theta[k]));
        th[k] = theta[k] + step;
        double up = value(d, s, z, n, th);
        th[k] = theta[k] - step;
        double dn = value(d, s, z, n, th);
        th[k] = theta[k];
        g[k] = (up - dn) / (2.0 * step);
    }
    return g;
}

double mixed_mean(const ident::Cell& x, const Eigen::VectorXd& z_row,
                  const Eigen::VectorXd& theta, const ident::LatentPosterior& posterior,
                  const CasfModel& model) {
    if (theta.size() != model.dim) throw DimMismatch("mixed_mean: theta dimension mismatch");
    double acc = 0.0;
    for (const auto& e : posterior.entries)
        acc += e.prob * model.m_star(x.d, e.s_star, z_row, e.n_star, theta);
    return acc;
}

namespace {

// Posterior-mixed feature row sum_j phi_j features(d, s*_j, z, n*_j).
Eigen::VectorXd mixed_features(const CasfModel& model, int d, const Eigen::VectorXd& z,
                               const ident::LatentPosterior& post) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(model.dim);
    for (const auto& e : post.entries)
        r += e.prob * model.features(d, e.s_star, z, e.n_star);
    return r;
}

double objective(const Eigen::VectorXd& y, const Eigen::VectorXd& m,
                 const Eigen::VectorXd& tau) {
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        double e = y[i] - m[i];
        acc += tau[i] * e * e;
    }
    return acc / y.size();
}

}  // namespace

ThetaFit fit_theta(const Sample& sample,
                   const std::vector<std::optional<ident::LatentPosterior>>& posteriors,
                   const CasfModel& model, const Eigen::VectorXd& tau) {
    const int n = sample.n();
    if (static_cast<int>(posteriors.size()) != n || tau.size() != n)
        throw DimMismatch("fit_theta: posterior/weight length mismatch");
    ThetaFit fit;
    fit.n_used = 0;
    for (int i = 0; i < n; ++i)
        if (tau[i] > 0.0 && posteriors[i]) ++fit.n_used;
    if (fit.n_used < model.dim)
        throw RankDeficient("fit_theta: fewer effective rows than parameters");

    if (model.linear) {
        Eigen::MatrixXd rbar = Eigen::MatrixXd::Zero(n, model.dim);
        for (int i = 0; i < n; ++i)
            if (tau[i] > 0.0 && posteriors[i])
                rbar.row(i) =
                    mixed_features(model, sample.d[i], sample.z.row(i), *posteriors[i]);
        Eigen::MatrixXd aw(fit.n_used, model.dim);
        Eigen::VectorXd bw(fit.n_used);
        int r = 0;
        for (int i = 0; i < n; ++i) {
            if (tau[i] <= 0.0 || !posteriors[i]) continue;
            double w = std::sqrt(tau[i]);
            aw.row(r) = w * rbar.row(i);
            bw[r] = w * sample.y[i];
            ++r;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(aw);
        if (qr.rank() < model.dim)
            throw RankDeficient("fit_theta: mixed design has deficient column rank");
        fit.theta_hat = qr.solve(bw);
        Eigen::VectorXd m = rbar * fit.theta_hat;
        fit.objective_value = objective(sample.y, m, tau);
        return fit;
    }

    // Gauss-Newton with step halving on the nonlinear CASF
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.dim);
    auto mixed_value = [&](const Eigen::VectorXd& th, int i) {
        ident::Cell x{sample.d[i], 0.0, 0, 0};
        return mixed_mean(x, sample.z.row(i), th, *posteriors[i], model);
    };
    double obj = 0.0;
    {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i)
            if (tau[i] > 0.0 && posteriors[i]) m[i] = mixed_value(theta, i);
        obj = objective(sample.y, m, tau);
    }
    bool converged = false;
    for (int iter = 0; iter < 200 && !converged; ++iter) {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, model.dim);
        Eigen::VectorXd resid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            if (tau[i] <= 0.0 || !posteriors[i]) continue;
            resid[i] = sample.y[i] - mixed_value(theta, i);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(model.dim);
            for (const auto& e : posteriors[i]->entries)
                g += e.prob *
                     model.m_star_grad(sample.d[i], e.s_star, sample.z.row(i), e.n_star, theta);
            jac.row(i) = g;
        }
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.dim);
        Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(model.dim, model.dim);
        for (int i = 0; i < n; ++i) {
            if (tau[i] <= 0.0) continue;
            grad += tau[i] * resid[i] * jac.row(i).transpose();
            jtj += tau[i] * jac.row(i).transpose() * jac.row(i);
        }
        if ((2.0 * grad / n).norm() < 1e-8) {
            converged = true;
            break;
        }
        Eigen::VectorXd dir = jtj.ldlt().solve(grad);
        double step = 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            Eigen::VectorXd cand = theta + step * dir;
            Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < n; ++i)
                if (tau[i] > 0.0 && posteriors[i]) m[i] = mixed_value(cand, i);
            double cobj = objective(sample.y, m, tau);
            if (cobj < obj) {
                theta = cand;
                obj = cobj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) converged = true;  // no descent direction left
    }
    if (!converged) throw NoConvergence("fit_theta: Gauss-Newton exceeded 200 iterations");
    fit.theta_hat = theta;
    fit.objective_value = obj;
    return fit;
}

std::vector<EffectEstimate> effects(const ThetaFit& fit, const CasfModel& model,
                                    const std::vector<EffectQuery>& queries) {
    std::vector<EffectEstimate> out;
    out.reserve(queries.size());
    Eigen::VectorXd z1(1);
    for (const auto& q : queries) {
        z1[0] = q.z;
        Eigen::VectorXd c;
        double value;
        if (model.linear) {
            if (q.kind == EffectKind::Treatment)
                c = model.features(1, q.s, z1, q.n) - model.features(0, q.s, z1, q.n);
            else
                c = model.features(0, q.s, z1, q.n) - model.features(0, 0, z1, q.n);
            value = c.dot(fit.theta_hat);
        } else {
            if (q.kind == EffectKind::Treatment) {
                value = model.m_star(1, q.s, z1, q.n, fit.theta_hat) -
                        model.m_star(0, q.s, z1, q.n, fit.theta_hat);
                c = model.m_star_grad(1, q.s, z1, q.n, fit.theta_hat) -
                    model.m_star_grad(0, q.s, z1, q.n, fit.theta_hat);
            } else {
                value = model.m_star(0, q.s, z1, q.n, fit.theta_hat) -
                        model.m_star(0, 0, z1, q.n, fit.theta_hat);
                c = model.m_star_grad(0, q.s, z1, q.n, fit.theta_hat) -
                    model.m_star_grad(0, 0, z1, q.n, fit.theta_hat);
            }
        }
        double var = fit.cov.size() > 0 ? c.dot(fit.cov * c) : 0.0;
        out.push_back({q, value, std::sqrt(std::max(var, 0.0))});
    }
    return out;
}

double propensity(int d, int s, int n, double p1) {
    if (d != 0 && d != 1) throw BadArgs("propensity: d must be 0 or 1");
    double own = d == 1 ? p1 : 1.0 - p1;
    return own * ident::binom_pmf(n, s, p1);
}

double single_proxy_casf(const Sample& sample, int proxy, int d, int s,
                         const Eigen::VectorXd& z, int n, double h) {
    const auto& sp = sample.s(proxy);
    const auto& dp = sample.deg(proxy);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < sample.n(); ++i) {
        if (sample.d[i] != d || sp[i] != s || dp[i] != n) continue;
        double w = 1.0;
        for (int k = 0; k < sample.z.cols(); ++k) {
            if (sample.z_discrete[k]) {
                if (std::lround(sample.z(i, k)) != std::lround(z[k])) {
                    w = 0.0;
                    break;
                }
            } else {
                w *= kde::gaussian((sample.z(i, k) - z[k]) / h) / h;
            }
        }
        num += w * sample.y[i];
        den += w;
    }
    if (den <= 0.0) throw EmptyCell("single_proxy_casf: empty conditioning cell");
    return num / den;
}

namespace {

// g_i = tau_i [Y_i - m_i] dm_i/dtheta stacked over dependency neighborhoods.
void sandwich_from_scores(const Eigen::MatrixXd& g, const Eigen::MatrixXd& grad_m,
                          const Eigen::VectorXd& tau, const DepNeighborhoods& nbrs,
                          ThetaFit& fit) {
    const int n = static_cast<int>(g.rows());
    const int dt = static_cast<int>(g.cols());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dt, dt);
    for (int i = 0; i < n; ++i)
        if (tau[i] > 0.0) h -= tau[i] * grad_m.row(i).transpose() * grad_m.row(i);
    h /= n;
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(dt, dt);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(dt);
        for (int j : nbrs.sets[i]) acc += g.row(j).transpose();
        omega += g.row(i).transpose() * acc.transpose();
    }
    omega /= n;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
    if (!lu.isInvertible()) throw SingularHessian("sandwich: Hessian not invertible");
    Eigen::MatrixXd hinv = lu.inverse();
    Eigen::MatrixXd cov = hinv * omega * hinv / n;
    fit.hessian_H = h;
    fit.meat_Omega = omega;
    fit.cov = 0.5 * (cov + cov.transpose());
}

std::string z_key(const Eigen::VectorXd& row) {
    std::string k;
    k.reserve(row.size() * sizeof(double));
    for (int i = 0; i < row.size(); ++i) {
        const char* p = reinterpret_cast<const char*>(&row[i]);
        k.append(p, sizeof(double));
    }
    return k;
}

void split_z_row(const Sample& s, int i, Eigen::VectorXd& zc, Eigen::VectorXi& zd) {
    int nc = 0, nd = 0;
    for (bool f : s.z_discrete) (f ? nd : nc)++;
    zc.resize(nc);
    zd.resize(nd);
    int ic = 0, id = 0;
    for (int k = 0; k < s.z.cols(); ++k) {
        if (s.z_discrete[k])
            zd[id++] = static_cast<int>(std::lround(s.z(i, k)));
        else
            zc[ic++] = s.z(i, k);
    }
}

}  // namespace

SpeFit fit_spe(const Sample& sample, const DepNeighborhoods& nbrs,
               const CasfModel& model, const SpeOptions& opts) {
    sample.validate();
    const int n = sample.n();
    SpeFit spe;
    spe.p1 = opts.p_treat >= 0.0 ? opts.p_treat : sample.d.cast<double>().mean();
    spe.h = opts.h > 0.0 ? opts.h : std::pow(n, -opts.bandwidth_exp);

    kde::GammaHat gamma = kde::estimate_gamma(sample, spe.h, opts.cond_proxy);

    // one identified cell per distinct z row
    std::map<std::string, int> cell_index;
    spe.cell_of_unit.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        std::string key = z_key(sample.z.row(i));
        auto it = cell_index.find(key);
        if (it == cell_index.end()) {
            ZCell cell;
            cell.z_row = sample.z.row(i);
            split_z_row(sample, i, cell.zc, cell.zd);
            cell.tables = ident::accumulate_tables(gamma, cell.zc, cell.zd);
            cell.mass_share = kde::z_mass(gamma, cell.zc, cell.zd) / n;
            cell.comp = ident::recover_auto(cell.tables, opts.recover);
            cell.obs = ident::slice_window(cell.tables, cell.comp.support);
            cell_index[key] = static_cast<int>(spe.cells.size());
            spe.cells.push_back(std::move(cell));
            it = cell_index.find(key);
        }
        spe.cell_of_unit[i] = it->second;
    }

    const auto& deg_c = sample.deg(opts.cond_proxy);
    const auto& s_c = sample.s(opts.cond_proxy);
    const auto& deg_i = sample.deg(opts.cond_proxy == 2 ? 1 : 2);

    spe.tau = Eigen::VectorXd::Ones(n);
    spe.posteriors.assign(n, std::nullopt);
    for (int i = 0; i < n; ++i) {
        const ZCell& cell = spe.cells[spe.cell_of_unit[i]];
        const auto& sup = cell.comp.support;
        if (!sup.contains(deg_c[i]) || !sup.contains(deg_i[i])) {
            spe.tau[i] = 0.0;
            continue;
        }
        // fixed trimming on the joint degree-covariate cell
        double joint = cell.tables.hist_cond[deg_c[i]] * cell.mass_share;
        if (joint <= opts.eps_trim_joint) {
            spe.tau[i] = 0.0;
            continue;
        }
        ident::Cell x{sample.d[i], cell.z_row.size() ? cell.z_row[0] : 0.0, s_c[i], deg_c[i]};
        try {
            spe.posteriors[i] =
                ident::latent_posterior(x, cell.comp, spe.p1, opts.mode, opts.eps_trim);
        } catch (const ThinCell&) {
            spe.tau[i] = 0.0;
        }
    }

    spe.fit = fit_theta(sample, spe.posteriors, model, spe.tau);
    sandwich_variance(sample, spe, model, nbrs, opts);
    return spe;
}

void sandwich_variance(const Sample& sample, SpeFit& spe, const CasfModel& model,
                       const DepNeighborhoods& nbrs, const SpeOptions& opts) {
    const int n = sample.n();
    const int dt = model.dim;
    if (nbrs.n() != n) throw DimMismatch("sandwich_variance: neighborhood size mismatch");
    const Eigen::VectorXd& theta = spe.fit.theta_hat;

    spe.grad_m = Eigen::MatrixXd::Zero(n, dt);
    Eigen::VectorXd resid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (spe.tau[i] <= 0.0 || !spe.posteriors[i]) continue;
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dt);
        double m = 0.0;
        for (const auto& e : spe.posteriors[i]->entries) {
            g += e.prob *
                 model.m_star_grad(sample.d[i], e.s_star, sample.z.row(i), e.n_star, theta);
            m += e.prob * model.m_star(sample.d[i], e.s_star, sample.z.row(i), e.n_star, theta);
        }
        spe.grad_m.row(i) = g;
        resid[i] = sample.y[i] - m;
    }
    Eigen::MatrixXd g_scores = Eigen::MatrixXd::Zero(n, dt);
    for (int i = 0; i < n; ++i)
        if (spe.tau[i] > 0.0) g_scores.row(i) = spe.tau[i] * resid[i] * spe.grad_m.row(i);

    if (opts.delta_correction) {
        const auto& deg_c = sample.deg(opts.cond_proxy);
        const auto& s_c = sample.s(opts.cond_proxy);
        const auto& deg_i = sample.deg(opts.cond_proxy == 2 ? 1 : 2);
        Eigen::MatrixXd nu = Eigen::MatrixXd::Zero(n, dt);

        // cache the posterior derivative by (cell, s, deg_cond, deg_inst)
        struct Key {
            int cell, s, dc, di;
            bool operator<(const Key& o) const {
                return std::tie(cell, s, dc, di) < std::tie(o.cell, o.s, o.dc, o.di);
            }
        };
        std::map<Key, std::optional<std::map<std::pair<int, int>, double>>> cache;

        for (int i = 0; i < n; ++i) {
            if (spe.tau[i] <= 0.0 || !spe.posteriors[i]) continue;
            const ZCell& cell = spe.cells[spe.cell_of_unit[i]];
            const auto& sup = cell.comp.support;
            Key key{spe.cell_of_unit[i], s_c[i], deg_c[i], deg_i[i]};
            auto it = cache.find(key);
            if (it == cache.end()) {
                // directional derivative of the posterior in the two gamma
                // hooks that survive renormalization: the E and F entries at
                // the unit's observed degree pair. The remaining components
                // scale the assembly by common factors the final
                // renormalization removes, so their derivative is zero.
                std::map<std::pair<int, int>, double> dphi;
                bool ok = true;
                ident::Cell x{sample.d[i], 0.0, s_c[i], deg_c[i]};
                const int r = deg_i[i] - sup.lo, c = deg_c[i] - sup.lo;
                for (int hook = 0; hook < 2 && ok; ++hook) {
                    double base = (hook == 0 ? cell.obs.e : cell.obs.f)(r, c);
                    double step = opts.fd_step * (1.0 + std::abs(base));
                    std::array<std::map<std::pair<int, int>, double>, 2> sides;
                    for (int sgn = 0; sgn < 2 && ok; ++sgn) {
                        ident::ObservedMatrices pert = cell.obs;
                        (hook == 0 ? pert.e : pert.f)(r, c) =
                            base + (sgn == 0 ? step : -step);
                        pert.deg_marg = pert.f.colwise().sum();
                        try {
                            auto comp = ident::eigen_recover(pert, opts.recover);
                            auto post = ident::latent_posterior(x, comp, spe.p1, opts.mode,
                                                                opts.eps_trim);
                            for (const auto& e : post.entries)
                                sides[sgn][{e.s_star, e.n_star}] = e.prob;
                        } catch (const Error&) {
                            ok = false;
                        }
                    }
                    if (!ok) break;
                    for (const auto& [sk, v] : sides[0])
                        dphi[sk] += (v - (sides[1].count(sk) ? sides[1][sk] : 0.0)) /
                                    (2.0 * step);
                    for (const auto& [sk, v] : sides[1])
                        if (!sides[0].count(sk)) dphi[sk] += -v / (2.0 * step);
                }
                it = cache.emplace(key, ok ? std::optional(dphi) : std::nullopt).first;
            }
            if (!it->second) continue;
            // nu_i = tau_i * dR/dtheta * sum over gamma hooks of dphi
            double acc_m = 0.0;
            Eigen::VectorXd acc_r = Eigen::VectorXd::Zero(dt);
            for (const auto& [sk, c] : *it->second) {
                double ms = model.m_star(sample.d[i], sk.first, sample.z.row(i), sk.second, theta);
                acc_m += c * ms;
                acc_r +=
                    c * model.m_star_grad(sample.d[i], sk.first, sample.z.row(i), sk.second, theta);
            }
            nu.row(i) = spe.tau[i] *
                        (-spe.grad_m.row(i) * acc_m + resid[i] * acc_r.transpose());
        }
        Eigen::RowVectorXd nu_bar = nu.colwise().mean();
        for (int i = 0; i < n; ++i) g_scores.row(i) += nu.row(i) - nu_bar;
    }

    sandwich_from_scores(g_scores, spe.grad_m, spe.tau, nbrs, spe.fit);
}

ThetaFit naive_ols_at(const Sample& sample, const Eigen::VectorXi& s,
                      const Eigen::VectorXi& deg, const CasfModel& model,
                      const DepNeighborhoods& nbrs) {
    const int n = sample.n();
    Eigen::MatrixXd x(n, model.dim);
    for (int i = 0; i < n; ++i)
        x.row(i) = model.features(sample.d[i], s[i], sample.z.row(i), deg[i]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < model.dim) throw RankDeficient("naive_ols: design rank deficient");
    ThetaFit fit;
    fit.theta_hat = qr.solve(sample.y);
    fit.n_used = n;
    Eigen::VectorXd resid = sample.y - x * fit.theta_hat;
    fit.objective_value = resid.squaredNorm() / n;
    Eigen::MatrixXd g(n, model.dim);
    for (int i = 0; i < n; ++i) g.row(i) = resid[i] * x.row(i);
    Eigen::VectorXd tau = Eigen::VectorXd::Ones(n);
    sandwich_from_scores(g, x, tau, nbrs, fit);
    return fit;
}

ThetaFit naive_ols(const Sample& sample, int proxy, const CasfModel& model,
                   const DepNeighborhoods& nbrs) {
    if (proxy != 1 && proxy != 2) throw BadArgs("naive_ols: proxy must be 1 or 2");
    return naive_ols_at(sample, sample.s(proxy), sample.deg(proxy), model, nbrs);
}

}  // namespace estim
}  // namespace netmis
