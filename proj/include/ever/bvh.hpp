// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/geometry.hpp"
#include "ever/scene.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace ever {

enum class SplitMethod { binned_sah, median };

struct BvhOptions {
    SplitMethod method = SplitMethod::binned_sah;
    int sah_bins = 16;
    int leaf_max = 4;
};

struct BvhNode {
    Aabb box;
    std::uint32_t first = 0; // first child (internal) or offset into primitive order (leaf)
    std::uint32_t count = 0; // 0 for internal nodes; children are first and first + 1

    bool is_leaf() const { return count > 0; }
};

/// Counters gathered by traversal.
struct TraversalStats {
    std::uint64_t node_visits = 0;
    std::uint64_t primitive_tests = 0;
    std::uint64_t passes = 0;
};

/// Binary BVH over primitive bounding boxes.
class Bvh {
  public:
    Bvh() = default;

    static Bvh build(const Scene &scene, const BvhOptions &opts = {}) {
        Bvh bvh;
        bvh.opts_ = opts;
        const auto n = scene.primitives.size();
        if (n == 0) return bvh;
        bvh.order_.resize(n);
        std::iota(bvh.order_.begin(), bvh.order_.end(), 0u);
        std::vector<Aabb> boxes(n);
        std::vector<Vec3> centroids(n);
        for (std::size_t i = 0; i < n; ++i) {
            boxes[i] = padded(aabb_of(scene.primitives[i]));
            centroids[i] = boxes[i].center();
        }
        bvh.nodes_.reserve(2 * n);
        bvh.nodes_.push_back({});
        bvh.subdivide(0, 0, static_cast<std::uint32_t>(n), boxes, centroids);
        return bvh;
    }

    /// Recomputes node boxes bottom-up for moved primitives, keeping the topology.
    void refit(const Scene &scene) {
        if (nodes_.empty()) return;
        refit_node(0, scene);
    }

    bool empty() const { return nodes_.empty(); }
    const std::vector<BvhNode> &nodes() const { return nodes_; }
    /// Primitive indices in leaf order.
    const std::vector<std::uint32_t> &order() const { return order_; }
    const BvhOptions &options() const { return opts_; }

  private:
    static Aabb padded(Aabb b) {
        const double m = 1e-9 * (1.0 + std::max(max_component(vmax(b.hi, -b.lo)), 0.0));
        b.lo -= Vec3{m, m, m};
        b.hi += Vec3{m, m, m};
        return b;
    }

    void subdivide(std::uint32_t node, std::uint32_t begin, std::uint32_t end, const std::vector<Aabb> &boxes,
                   const std::vector<Vec3> &centroids) {
        Aabb box, cbox;
        for (std::uint32_t i = begin; i < end; ++i) {
            box.grow(boxes[order_[i]]);
            cbox.grow(centroids[order_[i]]);
        }
        nodes_[node].box = box;
        const std::uint32_t count = end - begin;
        auto make_leaf = [&] {
            nodes_[node].first = begin;
            nodes_[node].count = count;
        };
        if (count <= static_cast<std::uint32_t>(opts_.leaf_max)) return make_leaf();

        const Vec3 ext = cbox.extent();
        const int axis = argmax_component(ext);
        if (!(ext[axis] > 0.0)) return make_leaf(); // coincident centroids

        std::uint32_t mid = begin + count / 2;
        if (opts_.method == SplitMethod::median) {
            std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                             [&](std::uint32_t a, std::uint32_t b) {
                                 const double ca = centroids[a][axis], cb = centroids[b][axis];
                                 return ca < cb || (ca == cb && a < b);
                             });
        } else {
            const int nb = std::max(2, opts_.sah_bins);
            const double lo = cbox.lo[axis], scale = nb / ext[axis];
            auto bin_of = [&](std::uint32_t p) {
                return std::min(nb - 1, static_cast<int>((centroids[p][axis] - lo) * scale));
            };
            std::vector<Aabb> bin_box(static_cast<std::size_t>(nb));
            std::vector<std::uint32_t> bin_count(static_cast<std::size_t>(nb), 0);
            for (std::uint32_t i = begin; i < end; ++i) {
                const auto b = static_cast<std::size_t>(bin_of(order_[i]));
                bin_box[b].grow(boxes[order_[i]]);
                ++bin_count[b];
            }
            // Sweep for the cheapest of the nb - 1 candidate planes.
            std::vector<double> right_cost(static_cast<std::size_t>(nb), 0.0);
            Aabb acc;
            std::uint32_t acc_n = 0;
            for (int b = nb - 1; b > 0; --b) {
                acc.grow(bin_box[static_cast<std::size_t>(b)]);
                acc_n += bin_count[static_cast<std::size_t>(b)];
                right_cost[static_cast<std::size_t>(b)] = acc.surface_area() * acc_n;
            }
            acc = Aabb{};
            acc_n = 0;
            double best = kInf;
            int best_split = -1;
            for (int b = 1; b < nb; ++b) {
                acc.grow(bin_box[static_cast<std::size_t>(b - 1)]);
                acc_n += bin_count[static_cast<std::size_t>(b - 1)];
                if (acc_n == 0 || acc_n == count) continue;
                const double cost = acc.surface_area() * acc_n + right_cost[static_cast<std::size_t>(b)];
                if (cost < best) {
                    best = cost;
                    best_split = b;
                }
            }
            if (best_split < 0) return make_leaf();
            const auto it = std::stable_partition(order_.begin() + begin, order_.begin() + end,
                                                  [&](std::uint32_t p) { return bin_of(p) < best_split; });
            mid = static_cast<std::uint32_t>(it - order_.begin());
        }

        const auto left = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({});
        nodes_.push_back({});
        nodes_[node].first = left;
        nodes_[node].count = 0;
        subdivide(left, begin, mid, boxes, centroids);
        subdivide(left + 1, mid, end, boxes, centroids);
    }

    Aabb refit_node(std::uint32_t node, const Scene &scene) {
        BvhNode &n = nodes_[node];
        Aabb box;
        if (n.is_leaf()) {
            for (std::uint32_t i = n.first; i < n.first + n.count; ++i)
                box.grow(padded(aabb_of(scene.primitives[order_[i]])));
        } else {
            box = refit_node(n.first, scene);
            box.grow(refit_node(n.first + 1, scene));
        }
        nodes_[node].box = box;
        return box;
    }

    std::vector<BvhNode> nodes_;
    std::vector<std::uint32_t> order_;
    BvhOptions opts_;
};

inline constexpr std::size_t kDefaultHitQueueCapacity = 16;

/// Fixed-capacity buffer of the nearest candidate hits found in one traversal
/// pass, kept sorted by (t_enter, primitive_index).
class HitQueue {
  public:
    explicit HitQueue(std::size_t capacity = kDefaultHitQueueCapacity) : capacity_(std::max<std::size_t>(1, capacity)) {
        items_.reserve(capacity_ + 1);
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    bool full() const { return items_.size() == capacity_; }
    bool overflowed() const { return overflowed_; }
    const HitPair &back() const { return items_.back(); }
    const HitPair &operator[](std::size_t i) const { return items_[i]; }

    /// Records that candidates beyond the current back were skipped.
    void mark_overflow() { overflowed_ = true; }

    void clear() {
        items_.clear();
        overflowed_ = false;
    }

    void push(const HitPair &h) {
        if (full() && !hit_before(h, items_.back())) {
            overflowed_ = true;
            return;
        }
        items_.insert(std::upper_bound(items_.begin(), items_.end(), h, hit_before), h);
        if (items_.size() > capacity_) {
            items_.pop_back();
            overflowed_ = true;
        }
    }

  private:
    std::size_t capacity_;
    std::vector<HitPair> items_;
    bool overflowed_ = false;
};

/// Yields every hit pair along a ray in (t_enter, primitive_index) order.
/// Each traversal pass fills a HitQueue with the nearest hits beyond the last
/// one emitted; an overflowing pass is followed by another starting there.
class PairStream {
  public:
    PairStream(const Bvh &bvh, const Scene &scene, const Ray &ray, std::size_t capacity = kDefaultHitQueueCapacity,
               TraversalStats *stats = nullptr)
        : bvh_(&bvh), scene_(&scene), ray_(ray), queue_(capacity), stats_(stats) {
        refill();
    }

    std::optional<HitPair> next() {
        if (pos_ == queue_.size()) {
            if (!queue_.overflowed()) return std::nullopt;
            refill();
            if (queue_.size() == 0) return std::nullopt;
        }
        last_ = queue_[pos_++];
        return last_;
    }

  private:
    void refill() {
        queue_.clear();
        pos_ = 0;
        if (bvh_->empty()) return;
        if (stats_) ++stats_->passes;
        const auto &nodes = bvh_->nodes();
        const auto &order = bvh_->order();
        const double t_floor = last_ ? last_->t_enter : -kInf;
        stack_.clear();
        stack_.push_back(0);
        while (!stack_.empty()) {
            const BvhNode &node = nodes[stack_.back()];
            stack_.pop_back();
            if (stats_) ++stats_->node_visits;
            const auto span = intersect_aabb(ray_, node.box);
            if (!span || (*span)[1] < t_floor) continue;
            if (queue_.full() && (*span)[0] > queue_.back().t_enter) {
                queue_.mark_overflow(); // pruned subtree may still hold later hits
                continue;
            }
            if (node.is_leaf()) {
                for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                    const std::uint32_t idx = order[i];
                    if (stats_) ++stats_->primitive_tests;
                    const auto hit = intersect_ellipsoid(ray_, scene_->primitives[idx], idx);
                    if (hit && (!last_ || hit_before(*last_, *hit))) queue_.push(*hit);
                }
            } else {
                // Visit the nearer child first so the queue tightens early.
                const auto a = intersect_aabb(ray_, nodes[node.first].box);
                const auto b = intersect_aabb(ray_, nodes[node.first + 1].box);
                const bool swap = a && b && (*b)[0] < (*a)[0];
                if (swap) {
                    stack_.push_back(node.first);
                    stack_.push_back(node.first + 1);
                } else {
                    if (b) stack_.push_back(node.first + 1);
                    if (a) stack_.push_back(node.first);
                }
            }
        }
    }

    const Bvh *bvh_;
    const Scene *scene_;
    Ray ray_;
    HitQueue queue_;
    TraversalStats *stats_;
    std::size_t pos_ = 0;
    std::optional<HitPair> last_;
    std::vector<std::uint32_t> stack_;
};

/// All hit pairs along `ray`, ordered by (t_enter, primitive_index).
inline std::vector<HitPair> trace_pairs(const Bvh &bvh, const Scene &scene, const Ray &ray,
                                        std::size_t capacity = kDefaultHitQueueCapacity,
                                        TraversalStats *stats = nullptr) {
    std::vector<HitPair> out;
    PairStream stream(bvh, scene, ray, capacity, stats);
    while (auto h = stream.next()) out.push_back(*h);
    return out;
}

/// BVH-free reference: intersect every primitive and sort.
inline std::vector<HitPair> intersect_all(const Scene &scene, const Ray &ray) {
    std::vector<HitPair> out;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i)
        if (auto h = intersect_ellipsoid(ray, scene.primitives[i], static_cast<std::uint32_t>(i))) out.push_back(*h);
    std::sort(out.begin(), out.end(), hit_before);
    return out;
}

} // namespace ever
