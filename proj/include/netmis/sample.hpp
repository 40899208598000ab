#pragma once

#include <Eigen/Dense>
#include <vector>

#include "netmis/error.hpp"

namespace netmis {

/// Per-unit observed data: outcome, treatment, covariates and the two
/// network proxies' degree / treated-neighbor counts. Positions and cluster
/// ids are optional and only drive dependency-neighborhood construction.
struct Sample {
    Eigen::VectorXd y;
    Eigen::VectorXi d;
    Eigen::MatrixXd z;                    // n x dz
    std::vector<bool> z_discrete;         // per z column
    Eigen::VectorXi s1, deg1;
    Eigen::VectorXi s2, deg2;
    std::vector<int> cluster;             // empty when absent
    Eigen::MatrixXd positions;            // n x 2, or 0 x 2 when absent

    int n() const { return static_cast<int>(y.size()); }

    bool has_positions() const { return positions.rows() == n() && n() > 0; }
    bool has_cluster() const { return !cluster.empty(); }

    const Eigen::VectorXi& s(int proxy) const { return proxy == 1 ? s1 : s2; }
    const Eigen::VectorXi& deg(int proxy) const { return proxy == 1 ? deg1 : deg2; }

    /// Shape and integrity checks (0/1 treatment, 0 <= s <= deg).
    void validate() const {
        const int N = n();
        if (d.size() != N || z.rows() != N || s1.size() != N || deg1.size() != N ||
            s2.size() != N || deg2.size() != N)
            throw DimMismatch("sample columns have inconsistent lengths");
        if (static_cast<int>(z_discrete.size()) != z.cols())
            throw DimMismatch("z_discrete flags do not match z columns");
        for (int i = 0; i < N; ++i) {
            if (d[i] != 0 && d[i] != 1)
                throw IntegrityError("non-binary treatment at row " + std::to_string(i));
            if (s1[i] < 0 || s1[i] > deg1[i] || s2[i] < 0 || s2[i] > deg2[i])
                throw IntegrityError("treated-neighbor count exceeds degree at row " +
                                     std::to_string(i));
        }
    }
};

/// Symmetric family of index sets governing covariance aggregation.
/// Invariant: i is in sets[i]; j in sets[i] iff i in sets[j].
struct DepNeighborhoods {
    std::vector<std::vector<int>> sets;

    int n() const { return static_cast<int>(sets.size()); }

    /// Singleton neighborhoods (i.i.d. fallback).
    static DepNeighborhoods singletons(int n) {
        DepNeighborhoods d;
        d.sets.resize(n);
        for (int i = 0; i < n; ++i) d.sets[i] = {i};
        return d;
    }

    /// Cluster blocks from per-unit labels.
    static DepNeighborhoods from_clusters(const std::vector<int>& labels);
};

}  // namespace netmis
