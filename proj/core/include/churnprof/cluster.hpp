#ifndef CHURNPROF_CLUSTER_HPP
#define CHURNPROF_CLUSTER_HPP

#include <string>
#include <vector>

namespace churnprof {

struct DistanceMatrix {
    int n = 0;
    std::vector<double> d;  // row-major n x n, symmetric, zero diagonal

    double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return d[static_cast<std::size_t>(i) * n + j]; }
    void validate() const;
};

struct Merge {
    int a = 0;        // cluster ids: leaves 0..n-1, merge m creates id n+m
    int b = 0;
    double height = 0.0;
    int size = 0;     // leaves in the new cluster
};

struct Dendrogram {
    std::vector<std::string> leaf_labels;
    std::vector<Merge> merges;  // n-1 entries, non-decreasing heights

    int n_leaves() const { return static_cast<int>(leaf_labels.size()); }
};

/// Plain Euclidean distances between rows.
DistanceMatrix distance_matrix(const std::vector<std::vector<double>>& rows);

/// Ward's method on squared Euclidean distances via the Lance-Williams
/// recurrence. Merge cost is (n_i n_j / (n_i + n_j)) ||c_i - c_j||^2 and the
/// reported height is sqrt(2 * cost) (the squared-distance-consistent
/// convention, matching dendrograms built from plain Euclidean input).
/// Ties break on the lowest (a, b) cluster-id pair.
Dendrogram ward_linkage(const DistanceMatrix& dist,
                        const std::vector<std::string>& labels = {});

/// Cluster id (1..k) per leaf after undoing the last k-1 merges. Ids are
/// numbered by the smallest leaf index they contain.
std::vector<int> cut_tree(const Dendrogram& dend, int k);

/// Newick string with branch lengths = parent height - child height.
std::string to_newick(const Dendrogram& dend);

/// JSON export: height convention note, merge list, leaf labels, newick.
std::string dendrogram_json(const Dendrogram& dend);
Dendrogram dendrogram_from_json_text(const std::string& text);

std::string cluster_labels_csv(const Dendrogram& dend, const std::vector<int>& labels);

}  // namespace churnprof

#endif
