#pragma once

// Exact k-nearest-neighbour search over a fixed point set.
//
// Results are ordered by (squared distance, index) so that the tree and the
// brute-force path return identical lists, including under ties.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "asee/geometry.hpp"

namespace asee {

struct Neighbor {
    double dist2;
    std::size_t index;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    }
};

class KdTree {
public:
    static constexpr std::size_t kBruteForceBelow = 256;
    static constexpr std::size_t kLeafSize = 8;

    explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
        if (points_.size() >= kBruteForceBelow) build();
    }

    std::size_t size() const { return points_.size(); }
    const std::vector<Vec3>& points() const { return points_; }

    /// The k nearest points to `query`, excluding index `skip` when given.
    std::vector<Neighbor> knn(const Vec3& query, std::size_t k,
                              std::size_t skip = std::numeric_limits<std::size_t>::max()) const {
        if (k == 0 || points_.empty()) return {};
        if (nodes_.empty()) return brute_knn(query, k, skip);

        Best best(k);
        search(query, skip, best);
        return std::move(best.items);
    }

    Neighbor nearest(const Vec3& query) const {
        auto r = knn(query, 1);
        return r.front();
    }

private:
    struct Node {
        // Leaf when axis < 0; then [begin, end) indexes order_.
        int axis = -1;
        double split = 0.0;
        std::uint32_t begin = 0, end = 0;
        std::uint32_t left = 0, right = 0;
    };

    std::vector<Neighbor> brute_knn(const Vec3& query, std::size_t k, std::size_t skip) const {
        std::vector<Neighbor> all;
        all.reserve(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (i == skip) continue;
            all.push_back({(points_[i] - query).squaredNorm(), i});
        }
        const std::size_t m = std::min(k, all.size());
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end());
        all.resize(m);
        return all;
    }

    void build() {
        order_.resize(points_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
        nodes_.reserve(2 * points_.size() / kLeafSize + 1);
        build_node(0, static_cast<std::uint32_t>(order_.size()));
        leaf_points_.reserve(order_.size());
        for (auto i : order_) leaf_points_.push_back(points_[i]);
    }

    std::uint32_t build_node(std::uint32_t begin, std::uint32_t end) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({});
        if (end - begin <= kLeafSize) {
            nodes_[id].begin = begin;
            nodes_[id].end = end;
            return id;
        }
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (auto i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const auto mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
        const double split = points_[order_[mid]][axis];
        const auto left = build_node(begin, mid);
        const auto right = build_node(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    // Sorted buffer of the best candidates so far, ascending by (dist2, index).
    struct Best {
        std::size_t k;
        std::vector<Neighbor> items;
        double worst = std::numeric_limits<double>::infinity();  // k-th distance once full

        explicit Best(std::size_t kk) : k(kk) { items.reserve(kk); }
        bool full() const { return items.size() == k; }
        double bound() const { return worst; }

        void offer(double d2, std::size_t idx) {
            if (d2 > worst) return;
            const Neighbor c{d2, idx};
            if (full()) {
                if (!(c < items.back())) return;
                items.pop_back();
            }
            std::size_t pos = items.size();
            items.push_back(c);
            while (pos > 0 && c < items[pos - 1]) {
                items[pos] = items[pos - 1];
                --pos;
            }
            items[pos] = c;
            if (full()) worst = items.back().dist2;
        }
    };

    // Depth-first, nearest child first. Each pending cell carries its
    // per-axis gaps to q; a cell is skipped when that lower bound exceeds
    // the current k-th distance. The small relative slack absorbs rounding
    // so that equal-distance candidates are never pruned.
    void search(const Vec3& q, std::size_t skip, Best& best) const {
        struct Pending {
            std::uint32_t node;
            double gap[3];
        };
        constexpr double kSlack = 1.0 + 1e-12;
        auto lower_bound = [](const double* g) { return g[0] * g[0] + g[1] * g[1] + g[2] * g[2]; };
        Pending stack[64];
        int top = 0;
        stack[top++] = {0, {0.0, 0.0, 0.0}};
        while (top > 0) {
            Pending p = stack[--top];
            if (lower_bound(p.gap) > best.bound() * kSlack) continue;
            const Node* n = &nodes_[p.node];
            while (n->axis >= 0) {
                const double diff = q[n->axis] - n->split;
                Pending far{diff < 0.0 ? n->right : n->left, {p.gap[0], p.gap[1], p.gap[2]}};
                far.gap[n->axis] = diff;
                if (lower_bound(far.gap) <= best.bound() * kSlack) stack[top++] = far;
                n = &nodes_[diff < 0.0 ? n->left : n->right];
            }
            for (auto i = n->begin; i < n->end; ++i) {
                const std::size_t idx = order_[i];
                if (idx == skip) continue;
                best.offer((leaf_points_[i] - q).squaredNorm(), idx);
            }
        }
    }

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Vec3> leaf_points_;  // points_ permuted into order_
    std::vector<Node> nodes_;
};

} // namespace asee
