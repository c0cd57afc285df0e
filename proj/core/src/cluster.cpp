#include "churnprof/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>

#include "churnprof/common.hpp"

#include "json.hpp"

namespace churnprof {

void DistanceMatrix::validate() const {
    if (n < 0 || d.size() != static_cast<std::size_t>(n) * n)
        throw std::invalid_argument("distance matrix shape mismatch");
    for (int i = 0; i < n; ++i) {
        if (at(i, i) != 0.0) throw std::invalid_argument("distance matrix diagonal must be zero");
        for (int j = i + 1; j < n; ++j) {
            if (at(i, j) < 0.0) throw std::invalid_argument("negative distance entry");
            if (std::abs(at(i, j) - at(j, i)) > 1e-12)
                throw std::invalid_argument("distance matrix not symmetric");
        }
    }
}

DistanceMatrix distance_matrix(const std::vector<std::vector<double>>& rows) {
    DistanceMatrix dm;
    dm.n = static_cast<int>(rows.size());
    dm.d.assign(static_cast<std::size_t>(dm.n) * dm.n, 0.0);
    for (int i = 0; i < dm.n; ++i) {
        if (rows[i].size() != rows[0].size())
            throw std::invalid_argument("distance_matrix: ragged input rows");
        for (int j = i + 1; j < dm.n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < rows[i].size(); ++k) {
                double d = rows[i][k] - rows[j][k];
                acc += d * d;
            }
            double dist = std::sqrt(acc);
            dm.at(i, j) = dist;
            dm.at(j, i) = dist;
        }
    }
    return dm;
}

Dendrogram ward_linkage(const DistanceMatrix& dist, const std::vector<std::string>& labels) {
    dist.validate();
    const int n = dist.n;
    if (n < 2) throw std::invalid_argument("ward_linkage needs n >= 2");
    if (!labels.empty() && static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("ward_linkage: label count mismatch");

    Dendrogram dend;
    dend.leaf_labels.reserve(n);
    for (int i = 0; i < n; ++i)
        dend.leaf_labels.push_back(labels.empty() ? std::to_string(i) : labels[i]);

    // Active clusters keyed by id (leaves 0..n-1, merges n..2n-2); scratch
    // holds Lance-Williams squared distances between active clusters.
    std::vector<int> ids;  // active cluster ids, ascending
    std::vector<std::vector<double>> scratch(2 * n - 1,
                                             std::vector<double>(2 * n - 1, 0.0));
    for (int i = 0; i < n; ++i) {
        ids.push_back(i);
        for (int j = 0; j < n; ++j) scratch[i][j] = dist.at(i, j) * dist.at(i, j);
    }
    std::vector<int> cluster_size(2 * n - 1, 0);
    for (int i = 0; i < n; ++i) cluster_size[i] = 1;

    for (int step = 0; step < n - 1; ++step) {
        // Greedy: smallest Lance-Williams squared distance, ties on (a, b).
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (std::size_t x = 0; x < ids.size(); ++x) {
            for (std::size_t y = x + 1; y < ids.size(); ++y) {
                double v = scratch[ids[x]][ids[y]];
                if (v < best) {
                    best = v;
                    bi = static_cast<int>(x);
                    bj = static_cast<int>(y);
                }
            }
        }
        int a = ids[bi], b = ids[bj];
        int new_id = n + step;
        int na = cluster_size[a], nb = cluster_size[b];
        cluster_size[new_id] = na + nb;

        Merge merge;
        merge.a = a;
        merge.b = b;
        merge.height = std::sqrt(best);
        merge.size = na + nb;
        dend.merges.push_back(merge);

        // Lance-Williams Ward update against every other active cluster.
        for (std::size_t x = 0; x < ids.size(); ++x) {
            int k = ids[x];
            if (k == a || k == b) continue;
            int nk = cluster_size[k];
            double dak = scratch[a][k], dbk = scratch[b][k], dab = best;
            double v = ((na + nk) * dak + (nb + nk) * dbk - nk * dab) /
                       static_cast<double>(na + nb + nk);
            scratch[new_id][k] = v;
            scratch[k][new_id] = v;
        }
        // Replace a and b by the merged cluster, keeping ids ascending.
        ids.erase(ids.begin() + bj);
        ids.erase(ids.begin() + bi);
        ids.push_back(new_id);
    }
    return dend;
}

std::vector<int> cut_tree(const Dendrogram& dend, int k) {
    const int n = dend.n_leaves();
    if (k < 1 || k > n) throw std::invalid_argument("cut_tree: k out of range");
    // Apply the first n-k merges.
    std::vector<int> parent(2 * n - 1);
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (int m = 0; m < n - k; ++m) {
        int root_id = n + m;
        parent[find(dend.merges[m].a)] = root_id;
        parent[find(dend.merges[m].b)] = root_id;
    }
    // Number clusters by their smallest leaf.
    std::map<int, int> root_to_label;
    for (int i = 0; i < n; ++i) {
        int r = find(i);
        root_to_label.emplace(r, 0);
    }
    std::vector<int> labels(n, 0);
    int next = 1;
    for (int i = 0; i < n; ++i) {
        int r = find(i);
        if (root_to_label[r] == 0) root_to_label[r] = next++;
        labels[i] = root_to_label[r];
    }
    return labels;
}

namespace {

std::string sanitize_newick_label(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == ' ')
            out.push_back('_');
        else
            out.push_back(c);
    }
    return out;
}

}  // namespace

std::string to_newick(const Dendrogram& dend) {
    const int n = dend.n_leaves();
    std::vector<double> height(2 * n - 1, 0.0);
    for (int m = 0; m < static_cast<int>(dend.merges.size()); ++m)
        height[n + m] = dend.merges[m].height;

    std::function<std::string(int)> render = [&](int id) -> std::string {
        if (id < n) return sanitize_newick_label(dend.leaf_labels[id]);
        const Merge& merge = dend.merges[id - n];
        double h = height[id];
        std::string la = render(merge.a) + ":" + format_double(h - height[merge.a]);
        std::string lb = render(merge.b) + ":" + format_double(h - height[merge.b]);
        return "(" + la + "," + lb + ")";
    };
    int root = 2 * n - 2;
    if (dend.merges.empty()) return sanitize_newick_label(dend.leaf_labels[0]) + ";";
    return render(root) + ";";
}

std::string dendrogram_json(const Dendrogram& dend) {
    nlohmann::ordered_json j;
    j["height_convention"] =
        "sqrt(2 * ward_merge_cost); equals the Lance-Williams distance on Euclidean input";
    j["leaves"] = dend.leaf_labels;
    nlohmann::ordered_json merges = nlohmann::ordered_json::array();
    for (const auto& m : dend.merges) {
        nlohmann::ordered_json e;
        e["a"] = m.a;
        e["b"] = m.b;
        e["height"] = m.height;
        e["size"] = m.size;
        merges.push_back(std::move(e));
    }
    j["merges"] = std::move(merges);
    j["newick"] = to_newick(dend);
    return j.dump(2) + "\n";
}

Dendrogram dendrogram_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dendrogram JSON: ") + e.what());
    }
    Dendrogram dend;
    for (const auto& l : j.at("leaves")) dend.leaf_labels.push_back(l.get<std::string>());
    for (const auto& m : j.at("merges")) {
        Merge merge;
        merge.a = m.at("a").get<int>();
        merge.b = m.at("b").get<int>();
        merge.height = m.at("height").get<double>();
        merge.size = m.at("size").get<int>();
        dend.merges.push_back(merge);
    }
    return dend;
}

std::string cluster_labels_csv(const Dendrogram& dend, const std::vector<int>& labels) {
    if (labels.size() != dend.leaf_labels.size())
        throw std::invalid_argument("cluster_labels_csv: label count mismatch");
    std::string out = "customer_id,cluster\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out += dend.leaf_labels[i] + "," + std::to_string(labels[i]) + "\n";
    }
    return out;
}

}  // namespace churnprof
