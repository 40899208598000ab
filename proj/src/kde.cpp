#include "netmis/kde.hpp"

#include <cmath>
#include <numbers>

#include "netmis/error.hpp"

namespace netmis {
namespace kde {

double gaussian(double u) {
    return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

double product_kernel(const Eigen::VectorXd& u, double h) {
    if (h <= 0.0) throw BadArgs("product_kernel: h <= 0");
    double w = 1.0;
    for (int q = 0; q < u.size(); ++q) w *= gaussian(u[q] / h) / h;
    return w;
}

JointDensity::JointDensity(Eigen::MatrixXd continuous, Eigen::MatrixXi discrete,
                           double h)
    : cont_(std::move(continuous)), disc_(std::move(discrete)), h_(h) {
    if (h <= 0.0) throw BadArgs("JointDensity: h <= 0");
    if (n() == 0) throw EmptySample("JointDensity: empty sample");
    if (cont_.rows() > 0 && disc_.rows() > 0 && cont_.rows() != disc_.rows())
        throw DimMismatch("JointDensity: row mismatch");
}

double JointDensity::eval(const Eigen::VectorXd& wc, const Eigen::VectorXi& wd) const {
    if (wc.size() != cont_.cols() || wd.size() != disc_.cols())
        throw DimMismatch("JointDensity::eval: point dimension mismatch");
    const int N = n();
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        bool match = true;
        for (int k = 0; k < disc_.cols(); ++k)
            if (disc_(i, k) != wd[k]) {
                match = false;
                break;
            }
        if (!match) continue;
        double w = 1.0;
        for (int q = 0; q < cont_.cols(); ++q)
            w *= gaussian((cont_(i, q) - wc[q]) / h_) / h_;
        acc += w;
    }
    return acc / N;
}

namespace {

void split_z(const Sample& s, Eigen::MatrixXd& zc, Eigen::MatrixXi& zd) {
    int nc = 0, nd = 0;
    for (bool f : s.z_discrete) (f ? nd : nc)++;
    zc.resize(s.n(), nc);
    zd.resize(s.n(), nd);
    int ic = 0, id = 0;
    for (int k = 0; k < s.z.cols(); ++k) {
        if (s.z_discrete[k]) {
            for (int i = 0; i < s.n(); ++i) zd(i, id) = static_cast<int>(std::lround(s.z(i, k)));
            ++id;
        } else {
            zc.col(ic) = s.z.col(k);
            ++ic;
        }
    }
}

Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd m(std::max(a.rows(), b.rows()), a.cols() + b.cols());
    if (a.cols() > 0) m.leftCols(a.cols()) = a;
    if (b.cols() > 0) m.rightCols(b.cols()) = b;
    return m;
}

Eigen::MatrixXi hcat(const Eigen::MatrixXi& a, const Eigen::MatrixXi& b) {
    Eigen::MatrixXi m(std::max(a.rows(), b.rows()), a.cols() + b.cols());
    if (a.cols() > 0) m.leftCols(a.cols()) = a;
    if (b.cols() > 0) m.rightCols(b.cols()) = b;
    return m;
}

Eigen::MatrixXi icol(const Eigen::VectorXi& v) {
    Eigen::MatrixXi m(v.size(), 1);
    m.col(0) = v;
    return m;
}

}  // namespace

GammaHat estimate_gamma(const Sample& sample, double h, int cond_proxy) {
    if (sample.n() < 2) throw EmptySample("estimate_gamma: need at least 2 rows");
    if (cond_proxy != 1 && cond_proxy != 2) throw BadArgs("estimate_gamma: proxy must be 1 or 2");
    GammaHat g;
    g.h = h;
    g.cond_proxy = cond_proxy;
    g.y = sample.y;
    g.deg_cond = sample.deg(cond_proxy);
    g.s_cond = sample.s(cond_proxy);
    g.deg_inst = sample.deg(cond_proxy == 2 ? 1 : 2);
    split_z(sample, g.zc, g.zd);

    Eigen::MatrixXd ycol(sample.n(), 1);
    ycol.col(0) = sample.y;
    Eigen::MatrixXi degs = hcat(icol(g.deg_inst), icol(g.deg_cond));

    g.f_degI_degC_y_z = JointDensity(hcat(ycol, g.zc), hcat(degs, g.zd), h);
    g.f_degI_degC_z = JointDensity(g.zc, hcat(degs, g.zd), h);
    g.f_s_degC_z = JointDensity(g.zc, hcat(hcat(icol(g.s_cond), icol(g.deg_cond)), g.zd), h);
    g.f_degC_z = JointDensity(g.zc, hcat(icol(g.deg_cond), g.zd), h);
    g.f_z = JointDensity(g.zc, g.zd, h);
    return g;
}

namespace {

// Kernel weight of row i at the z evaluation point.
inline double z_weight(const GammaHat& g, int i, const Eigen::VectorXd& zc,
                       const Eigen::VectorXi& zd) {
    for (int k = 0; k < g.zd.cols(); ++k)
        if (g.zd(i, k) != zd[k]) return 0.0;
    double w = 1.0;
    for (int q = 0; q < g.zc.cols(); ++q)
        w *= gaussian((g.zc(i, q) - zc[q]) / g.h) / g.h;
    return w;
}

}  // namespace

double z_mass(const GammaHat& g, const Eigen::VectorXd& zc, const Eigen::VectorXi& zd) {
    const int N = static_cast<int>(g.y.size());
    double acc = 0.0;
    for (int i = 0; i < N; ++i) acc += z_weight(g, i, zc, zd);
    return acc;
}

double cond_moment_y(const GammaHat& g, const Eigen::VectorXd& zc,
                     const Eigen::VectorXi& zd, int deg_inst, int deg_cond) {
    const int N = static_cast<int>(g.y.size());
    double num = 0.0, den = 0.0;
    for (int i = 0; i < N; ++i) {
        double w = z_weight(g, i, zc, zd);
        den += w;
        if (g.deg_inst[i] == deg_inst && g.deg_cond[i] == deg_cond) num += g.y[i] * w;
    }
    if (den <= 0.0) throw EmptyCell("cond_moment_y: no kernel mass at z");
    return num / den;
}

double cond_joint_deg(const GammaHat& g, const Eigen::VectorXd& zc,
                      const Eigen::VectorXi& zd, int deg_inst, int deg_cond) {
    const int N = static_cast<int>(g.y.size());
    double num = 0.0, den = 0.0;
    for (int i = 0; i < N; ++i) {
        double w = z_weight(g, i, zc, zd);
        den += w;
        if (g.deg_inst[i] == deg_inst && g.deg_cond[i] == deg_cond) num += w;
    }
    if (den <= 0.0) throw EmptyCell("cond_joint_deg: no kernel mass at z");
    return num / den;
}

}  // namespace kde
}  // namespace netmis
