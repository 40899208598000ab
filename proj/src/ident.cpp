#include "netmis/ident.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "netmis/error.hpp"

namespace netmis {
namespace ident {

bool StochasticMatrix::valid(double tol) const {
    for (int c = 0; c < m.cols(); ++c) {
        double sum = 0.0;
        for (int r = 0; r < m.rows(); ++r) {
            double v = m(r, c);
            if (v < -tol || v > 1.0 + tol) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

int lexi_index(int s, int n, int k) {
    if (s < 0 || n < 0 || s > n || n > k - 1)
        throw BadArgs("lexi_index: need 0 <= s <= n <= k-1");
    return n * (n + 1) / 2 + s;
}

LatentSupportIndex LatentSupportIndex::build(int k) {
    LatentSupportIndex idx;
    idx.pairs.reserve(k * (k + 1) / 2);
    for (int n = 0; n < k; ++n)
        for (int s = 0; s <= n; ++s) idx.pairs.emplace_back(s, n);
    return idx;
}

double binom_pmf(int n, int s, double p1) {
    if (n < 0 || s < 0 || s > n) throw BadArgs("binom_pmf: need 0 <= s <= n");
    if (p1 < 0.0 || p1 > 1.0) throw BadArgs("binom_pmf: p1 outside [0,1]");
    // multiplicative form keeps C(n,s) exact for the small supports used here
    double c = 1.0;
    for (int i = 0; i < s; ++i) c = c * (n - i) / (i + 1);
    return c * std::pow(p1, s) * std::pow(1.0 - p1, n - s);
}

double one_type_kernel(int s, int s_star, int n, int n_star, double p1, Mode mode) {
    if (mode == Mode::NoFalsePositive) {
        std::swap(s, s_star);
        std::swap(n, n_star);
    }
    // mode (a) body: observed counts can only exceed the latent ones
    if (n_star > n) return 0.0;
    int dn = n - n_star;
    int ds = s - s_star;
    if (ds < 0 || ds > dn) return 0.0;
    return binom_pmf(dn, ds, p1);
}

ObservedTables accumulate_tables(const kde::GammaHat& gamma, const Eigen::VectorXd& zc,
                                 const Eigen::VectorXi& zd) {
    const int n = static_cast<int>(gamma.y.size());
    int max_deg = 0;
    for (int i = 0; i < n; ++i)
        max_deg = std::max({max_deg, gamma.deg_inst[i], gamma.deg_cond[i]});
    const int k = max_deg + 1;
    ObservedTables t;
    t.max_deg = max_deg;
    t.e_full = Eigen::MatrixXd::Zero(k, k);
    t.f_full = Eigen::MatrixXd::Zero(k, k);
    double mass = 0.0;
    for (int i = 0; i < n; ++i) {
        double w = 1.0;
        bool match = true;
        for (int c = 0; c < gamma.zd.cols(); ++c)
            if (gamma.zd(i, c) != zd[c]) {
                match = false;
                break;
            }
        if (!match) continue;
        for (int q = 0; q < gamma.zc.cols(); ++q)
            w *= kde::gaussian((gamma.zc(i, q) - zc[q]) / gamma.h) / gamma.h;
        mass += w;
        t.f_full(gamma.deg_inst[i], gamma.deg_cond[i]) += w;
        t.e_full(gamma.deg_inst[i], gamma.deg_cond[i]) += w * gamma.y[i];
    }
    if (mass <= 0.0) throw EmptyCell("accumulate_tables: no kernel mass at z");
    t.e_full /= mass;
    t.f_full /= mass;
    t.hist_inst = t.f_full.rowwise().sum();
    t.hist_cond = t.f_full.colwise().sum();
    return t;
}

ObservedMatrices slice_window(const ObservedTables& tables, DegreeSupport support) {
    if (support.lo < 0 || support.hi > tables.max_deg || support.size() < 1)
        throw BadArgs("slice_window: support outside observed degrees");
    const int w = support.size();
    ObservedMatrices obs;
    obs.support = support;
    obs.e = tables.e_full.block(support.lo, support.lo, w, w);
    obs.f = tables.f_full.block(support.lo, support.lo, w, w);
    double mass = obs.f.sum();
    if (mass <= 0.0) throw EmptyCell("slice_window: no mass inside window");
    // condition on the window so the joint pmf sums to one again
    obs.e /= mass;
    obs.f /= mass;
    obs.deg_marg = obs.f.colwise().sum();
    return obs;
}

ObservedMatrices build_observed_matrices(const kde::GammaHat& gamma,
                                         const Eigen::VectorXd& zc,
                                         const Eigen::VectorXi& zd,
                                         DegreeSupport support) {
    ObservedTables t = accumulate_tables(gamma, zc, zd);
    if (support.hi < 0) support = {0, t.max_deg};
    ObservedMatrices obs = slice_window(t, support);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(obs.f);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > 1e12)
        throw SingularInput("build_observed_matrices: joint degree matrix numerically singular");
    return obs;
}

namespace {

// Hungarian assignment (potentials form), minimizing total cost.
std::vector<int> assign_min_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    // p[j] holds the cost row matched to cost column j; invert so the
    // result maps cost row -> cost column
    std::vector<int> out(n);
    for (int j = 1; j <= n; ++j) out[p[j] - 1] = j - 1;
    return out;
}

struct Decomposed {
    Eigen::MatrixXd vectors;  // ordered, clipped, column-stochastic
    Eigen::VectorXd values;
    double clipped = 0.0;
    double imag_ratio = 0.0;
};

// Diagonalizes b, scales eigenvectors to sum one, and orders columns by
// their claimed latent degree.
Decomposed decompose_ordered(const Eigen::MatrixXd& b, const RecoverOptions& opts) {
    const int k = static_cast<int>(b.rows());
    Eigen::EigenSolver<Eigen::MatrixXd> es(b);
    if (es.info() != Eigen::Success)
        throw NonIdentified("eigen_recover: eigensolver failed to converge");
    Eigen::VectorXcd lam = es.eigenvalues();
    double radius = lam.cwiseAbs().maxCoeff();
    if (radius <= 0.0) throw NonIdentified("eigen_recover: zero spectrum");
    double max_imag = lam.imag().cwiseAbs().maxCoeff();
    if (max_imag > opts.imag_tol * radius)
        throw ComplexSpectrum("eigen_recover: imaginary eigenvalue mass " +
                              std::to_string(max_imag / radius));
    Eigen::VectorXd lr = lam.real();
    {
        Eigen::VectorXd sorted = lr;
        std::sort(sorted.data(), sorted.data() + k);
        for (int i = 0; i + 1 < k; ++i)
            if (sorted[i + 1] - sorted[i] < opts.dup_tol)
                throw NonIdentified("eigen_recover: duplicate eigenvalues");
    }
    Eigen::MatrixXd vec = es.eigenvectors().real();
    // scale so each column sums to one (conditional pmfs are normalized)
    for (int c = 0; c < k; ++c) {
        double s = vec.col(c).sum();
        if (std::abs(s) < 1e-12 * vec.col(c).cwiseAbs().maxCoeff())
            throw AmbiguousOrdering("eigen_recover: eigenvector has no usable scale");
        vec.col(c) /= s;
    }
    // column c claims row argmax; collisions resolved by max-total assignment
    std::vector<int> claim(k);
    std::set<int> rows;
    for (int c = 0; c < k; ++c) {
        int r;
        vec.col(c).maxCoeff(&r);
        claim[c] = r;
        rows.insert(r);
    }
    if (static_cast<int>(rows.size()) != k) {
        claim = assign_min_cost(-vec.transpose());  // maximize selected entries
    }
    Decomposed d;
    d.imag_ratio = max_imag / radius;
    d.vectors.resize(k, k);
    d.values.resize(k);
    for (int c = 0; c < k; ++c) {
        d.vectors.col(claim[c]) = vec.col(c);
        d.values[claim[c]] = lr[c];
    }
    for (int c = 0; c < k; ++c) {
        double neg = 0.0;
        for (int r = 0; r < k; ++r)
            if (d.vectors(r, c) < 0.0) {
                neg -= d.vectors(r, c);
                d.vectors(r, c) = 0.0;
            }
        d.clipped += neg;
        double s = d.vectors.col(c).sum();
        if (s <= 0.0) throw AmbiguousOrdering("eigen_recover: column clipped to zero");
        d.vectors.col(c) /= s;
    }
    return d;
}

}  // namespace

IdentComponents eigen_recover(const ObservedMatrices& obs, const RecoverOptions& opts) {
    const int k = static_cast<int>(obs.f.rows());
    if (obs.e.rows() != k || obs.e.cols() != k || obs.f.cols() != k)
        throw DimMismatch("eigen_recover: matrix shapes disagree");
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(obs.f);
    Eigen::MatrixXd b = lu.solve(obs.e.transpose()).transpose();   // E F^{-1}
    Eigen::PartialPivLU<Eigen::MatrixXd> lut(obs.f.transpose());
    Eigen::MatrixXd bt = lut.solve(obs.e).transpose();             // E' (F')^{-1}

    Decomposed inst = decompose_ordered(b, opts);
    Decomposed cond = decompose_ordered(bt, opts);

    IdentComponents out;
    out.support = obs.support;
    out.f_inst_given_latent = {inst.vectors, "f(deg_inst | z, deg*)"};
    out.f_cond_given_latent = {cond.vectors, "f(deg_cond | z, deg*)"};
    out.t_y_given_latent = inst.values;
    out.deg_marg = obs.deg_marg;
    out.quality.max_imag_ratio = std::max(inst.imag_ratio, cond.imag_ratio);
    out.quality.clipped_mass = inst.clipped + cond.clipped;

    // f(deg* | z) solves the conditioning law against the observed marginal
    Eigen::VectorXd lat = cond.vectors.partialPivLu().solve(obs.deg_marg);
    double clipped = 0.0;
    for (int i = 0; i < k; ++i)
        if (lat[i] < 0.0) {
            clipped -= lat[i];
            lat[i] = 0.0;
        }
    double s = lat.sum();
    if (s <= 0.0) throw NonIdentified("eigen_recover: latent degree law degenerate");
    out.f_latent_deg = lat / s;
    out.quality.clipped_mass += clipped;
    return out;
}

IdentComponents recover_auto(const ObservedTables& tables, const RecoverOptions& opts) {
    auto attempt = [&](DegreeSupport sup) {
        ObservedMatrices obs = slice_window(tables, sup);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(obs.f);
        double smin = svd.singularValues().minCoeff();
        double smax = svd.singularValues().maxCoeff();
        if (smin <= 0.0 || smax / smin > opts.cond_tol)
            throw SingularInput("recover_auto: joint degree matrix numerically singular");
        return eigen_recover(obs, opts);
    };

    if (opts.k_override > 0) {
        int hi = std::min(opts.k_override - 1, tables.max_deg);
        return attempt({0, hi});
    }
    try {
        return attempt({0, tables.max_deg});
    } catch (const Error&) {
        // fall through to the reliable-window search
    }
    int lo = -1, hi = -1;
    for (int v = 0; v <= tables.max_deg; ++v) {
        if (tables.hist_inst[v] >= opts.kappa && tables.hist_cond[v] >= opts.kappa) {
            if (lo < 0) lo = v;
            hi = v;
        }
    }
    if (lo < 0) throw NonIdentified("recover_auto: no degree cell clears the mass floor");
    // widest windows first; drop the lower or upper end one step at a time
    std::deque<DegreeSupport> queue{{lo, hi}};
    std::set<std::pair<int, int>> seen;
    while (!queue.empty()) {
        DegreeSupport sup = queue.front();
        queue.pop_front();
        if (sup.size() < opts.min_width || !seen.insert({sup.lo, sup.hi}).second) continue;
        try {
            IdentComponents c = attempt(sup);
            c.quality.fallback_window = true;
            return c;
        } catch (const Error&) {
            queue.push_back({sup.lo + 1, sup.hi});
            queue.push_back({sup.lo, sup.hi - 1});
        }
    }
    throw NonIdentified("recover_auto: no degree window supports a real, ordered spectrum");
}

LatentPosterior latent_posterior(const Cell& x, const IdentComponents& comp,
                                 double p1, Mode mode, double eps_trim) {
    const DegreeSupport sup = comp.support;
    if (!sup.contains(x.n))
        throw ThinCell("latent_posterior: observed degree outside identified support");
    double f_n = comp.deg_marg[x.n - sup.lo];
    if (f_n <= eps_trim)
        throw ThinCell("latent_posterior: conditioning degree cell below trim threshold");
    double denom = binom_pmf(x.n, x.s, p1) * f_n;
    if (denom <= 0.0) throw ThinCell("latent_posterior: zero denominator cell");

    LatentPosterior post;
    post.cell = x;
    double total = 0.0;
    for (int n_star = sup.lo; n_star <= sup.hi; ++n_star) {
        double f_cond = comp.f_cond_given_latent.m(x.n - sup.lo, n_star - sup.lo);
        double f_lat = comp.f_latent_deg[n_star - sup.lo];
        if (f_cond <= 0.0 || f_lat <= 0.0) continue;
        for (int s_star = 0; s_star <= n_star; ++s_star) {
            double kern = one_type_kernel(x.s, s_star, x.n, n_star, p1, mode);
            if (kern == 0.0) continue;
            if (mode == Mode::NoFalsePositive) {
                // kernel is f(S*|S); rescale to f(S|S*) by the binomial ratio
                double b_star = binom_pmf(n_star, s_star, p1);
                if (b_star <= 0.0) continue;
                kern *= binom_pmf(x.n, x.s, p1) / b_star;
            }
            double val =
                kern * binom_pmf(n_star, s_star, p1) * f_cond * f_lat / denom;
            if (val > 0.0) {
                post.entries.push_back({s_star, n_star, val});
                total += val;
            }
        }
    }
    if (total <= 0.0)
        throw ThinCell("latent_posterior: no feasible latent cell has mass");
    post.pre_norm_sum = total;
    for (auto& e : post.entries) e.prob /= total;
    return post;
}

std::pair<double, double> triangularity_diagnostic(const StochasticMatrix& f) {
    double upper = 0.0, lower = 0.0;
    for (int r = 0; r < f.m.rows(); ++r)
        for (int c = 0; c < f.m.cols(); ++c) {
            if (r < c) upper += f.m(r, c);
            if (r > c) lower += f.m(r, c);
        }
    return {upper, lower};
}

}  // namespace ident
}  // namespace netmis
