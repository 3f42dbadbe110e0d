// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations shared by the unit tests and the
// acceptance binary. They favour obviousness over speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "ctxprobe/corpus.hpp"
#include "ctxprobe/mechanism.hpp"
#include "ctxprobe/rng.hpp"
#include "ctxprobe/stats.hpp"

namespace ctxprobe::oracle {

using namespace ctxprobe::mechanism;
using stats::DesignMatrix;

// 200 images over the eight categories plus two unknown scenes. Labels follow
// a skewed distribution so that some fall under the image threshold; anchors
// are sometimes buried under locals and some masks are tiny or missing.
inline std::vector<Annotation> fixture_annotations(unsigned seed = 11, std::size_t n = 200) {
    std::mt19937 gen(seed);
    const std::vector<std::string> scenes = {"bathroom", "bedroom", "kitchen", "living room",
                                             "coast",    "forest",  "mountain", "skyline",
                                             "office",   "garage"};
    std::vector<std::string> vocab;
    for (int k = 0; k < 16; ++k) vocab.push_back("obj" + std::to_string(k));
    std::discrete_distribution<int> label_pick({30, 25, 20, 16, 12, 10, 8, 7, 6, 5, 4, 3, 2, 2, 1, 1});
    std::vector<Annotation> out;
    for (std::size_t i = 0; i < n; ++i) {
        Annotation a;
        a.image_id = "img" + std::to_string(i);
        a.height = 20 + gen() % 3 * 10;
        a.width = 20 + gen() % 4 * 10;
        a.scene = scenes[gen() % scenes.size()];
        const int objects = 1 + gen() % 5;
        for (int k = 0; k < objects; ++k) {
            AnnotatedObject o;
            o.label = vocab[label_pick(gen)];
            o.type = gen() % 3 == 0 ? ObjectType::anchor : ObjectType::local;
            if (gen() % 15 != 0) {
                BinaryMask m(a.height, a.width);
                const std::size_t r0 = gen() % a.height, c0 = gen() % a.width;
                const std::size_t rh = 1 + gen() % a.height, cw = 1 + gen() % a.width;
                m.fill_rect(r0, c0, r0 + rh, c0 + cw);
                o.mask = m;
            }
            a.objects.push_back(std::move(o));
        }
        out.push_back(std::move(a));
    }
    return out;
}

using Key = std::tuple<std::string, std::size_t>; // image_id, object index

// Independent step-by-step enumeration of the curation rules.
inline std::set<Key> curation_oracle(const std::vector<Annotation> &anns, const CurationConfig &cfg) {
    // Step 1
    std::vector<const Annotation *> s1;
    for (const auto &a : anns) {
        bool listed = false;
        for (const auto &c : cfg.categories) listed |= c == a.scene;
        if (listed && superordinate_of(a.scene)) s1.push_back(&a);
    }
    // Step 2, counting pixels one by one.
    std::vector<const Annotation *> s2;
    for (const Annotation *a : s1) {
        bool drop = false;
        for (const auto &anchor : a->objects) {
            if (anchor.type != ObjectType::anchor || !anchor.mask) continue;
            std::size_t area = 0, covered = 0;
            for (std::size_t r = 0; r < a->height; ++r) {
                for (std::size_t c = 0; c < a->width; ++c) {
                    if (!anchor.mask->at(r, c)) continue;
                    ++area;
                    bool under = false;
                    for (const auto &l : a->objects) {
                        if (l.type == ObjectType::local && l.mask && l.mask->at(r, c)) under = true;
                    }
                    covered += under;
                }
            }
            if (area > 0 && covered * 1.0 >= cfg.occlusion_threshold * area) drop = true;
        }
        if (!drop) s2.push_back(a);
    }
    struct Cand {
        const Annotation *a;
        std::size_t k;
    };
    std::vector<Cand> cands;
    for (const Annotation *a : s2) {
        for (std::size_t k = 0; k < a->objects.size(); ++k) {
            if (a->objects[k].mask) cands.push_back({a, k});
        }
    }
    // Step 3
    std::map<std::string, std::set<std::string>> seen;
    for (const auto &c : cands) seen[c.a->objects[c.k].label].insert(c.a->image_id);
    std::vector<Cand> s3;
    for (const auto &c : cands) {
        if (seen[c.a->objects[c.k].label].size() >= cfg.min_images) s3.push_back(c);
    }
    // Step 4
    std::vector<Cand> s4;
    for (const auto &c : s3) {
        const auto &m = *c.a->objects[c.k].mask;
        if (m.count() > cfg.min_area * static_cast<double>(c.a->height * c.a->width)) s4.push_back(c);
    }
    // Step 5: seeded sampler, categories in config order, anchors first.
    CounterRng rng(cfg.seed);
    std::set<Key> out;
    std::vector<bool> taken(s4.size(), false);
    for (const auto &scene : cfg.categories) {
        for (const auto type : {ObjectType::anchor, ObjectType::local}) {
            std::vector<std::size_t> idx;
            for (std::size_t j = 0; j < s4.size(); ++j) {
                if (s4[j].a->scene == scene && s4[j].a->objects[s4[j].k].type == type) idx.push_back(j);
            }
            if (idx.size() > cfg.per_type_cap) {
                for (std::size_t s = 0; s < cfg.per_type_cap; ++s) {
                    std::swap(idx[s], idx[s + rng.below(idx.size() - s)]);
                }
                idx.resize(cfg.per_type_cap);
            }
            for (auto j : idx) taken[j] = true;
        }
    }
    for (std::size_t j = 0; j < s4.size(); ++j) {
        if (taken[j]) out.insert({s4[j].a->image_id, s4[j].k});
    }
    return out;
}

inline std::set<Key> keys_of(const std::vector<ObjectInstance> &instances) {
    std::set<Key> out;
    for (const auto &i : instances) {
        const auto hash = i.instance_id.rfind('#');
        out.insert({i.image_id, std::stoul(i.instance_id.substr(hash + 1))});
    }
    return out;
}

// n draws from a planted logistic model over standard-normal predictors.
inline DesignMatrix planted_design(const std::vector<double> &beta, std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed);
    const std::size_t p = beta.size() - 1;
    Eigen::MatrixXd x(n, p);
    std::vector<int> y(n);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        double eta = beta[0];
        for (std::size_t j = 0; j < p; ++j) {
            x(i, j) = rng.normal();
            eta += beta[j + 1] * x(i, j);
        }
        y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1 : 0;
    }
    return DesignMatrix(names, x, y);
}

// Direct Bernoulli log-likelihood, written out per observation.
inline double oracle_loglik(const DesignMatrix &d, const std::vector<double> &b) {
    double ll = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
        double eta = b[0];
        for (Eigen::Index j = 0; j < d.predictors().cols(); ++j) eta += b[j + 1] * d.predictors()(i, j);
        const double p = 1.0 / (1.0 + std::exp(-eta));
        ll += d.outcome()[i] ? std::log(p) : std::log(1.0 - p);
    }
    return ll;
}

// Multi-resolution grid search: 9 points per axis around the incumbent,
// halving the half-width each round.
inline std::vector<double> grid_search_mle(const DesignMatrix &d) {
    const std::size_t k = d.predictors().cols() + 1;
    std::vector<double> best(k, 0.0);
    double best_ll = oracle_loglik(d, best);
    double half = 4.0;
    for (int round = 0; round < 40; ++round) {
        const std::vector<double> center = best;
        std::vector<int> idx(k, 0);
        for (;;) {
            std::vector<double> b(k);
            for (std::size_t j = 0; j < k; ++j) b[j] = center[j] + half * (idx[j] - 4) / 4.0;
            const double ll = oracle_loglik(d, b);
            if (ll > best_ll) {
                best_ll = ll;
                best = b;
            }
            std::size_t j = 0;
            while (j < k && ++idx[j] == 9) idx[j++] = 0;
            if (j == k) break;
        }
        half *= 0.6;
    }
    return best;
}

// Nearest-neighbour source index of output pixel d when D outputs sample S inputs.
inline std::size_t source_of(std::size_t d, std::size_t S, std::size_t D) { return (2 * d + 1) * S / (2 * D); }

// Is the original-image pixel behind a model-input pixel foreground?
// Padding pixels are background.
inline bool input_pixel_on(const BinaryMask &m, const GridSpec &g, std::size_t y, std::size_t x) {
    const std::size_t h = m.height(), w = m.width();
    if (g.preprocessing == Preprocessing::resize_only) {
        return m.at(source_of(y, h, g.input_side), source_of(x, w, g.input_side));
    }
    const std::size_t s = std::max(h, w);
    const long sy = static_cast<long>(source_of(y, s, g.input_side)) - static_cast<long>((s - h) / 2);
    const long sx = static_cast<long>(source_of(x, s, g.input_side)) - static_cast<long>((s - w) / 2);
    if (sy < 0 || sx < 0 || sy >= long(h) || sx >= long(w)) return false;
    return m.at(sy, sx);
}

// Pixel-level coverage oracle. Merged grids are evaluated on the pre-merge
// patch grid: a token counts only when every one of its sub-patches is full.
inline std::vector<std::uint32_t> coverage_oracle(const BinaryMask &m, const GridSpec &g) {
    const std::size_t sub = g.cell_side / g.block_merge;
    const std::size_t fine = g.input_side / sub;
    std::vector<std::vector<bool>> full(fine, std::vector<bool>(fine, true));
    for (std::size_t y = 0; y < g.input_side; ++y) {
        for (std::size_t x = 0; x < g.input_side; ++x) {
            if (!input_pixel_on(m, g, y, x)) full[y / sub][x / sub] = false;
        }
    }
    std::vector<std::uint32_t> out;
    for (std::size_t r = 0; r < g.grid_rows; ++r) {
        for (std::size_t c = 0; c < g.grid_cols; ++c) {
            bool all = true;
            for (std::size_t dr = 0; dr < g.block_merge; ++dr) {
                for (std::size_t dc = 0; dc < g.block_merge; ++dc) {
                    all = all && full[r * g.block_merge + dr][c * g.block_merge + dc];
                }
            }
            if (all) out.push_back(static_cast<std::uint32_t>(r * g.grid_cols + c));
        }
    }
    return out;
}

inline BinaryMask fuzzed_mask(std::mt19937 &gen) {
    const std::size_t h = 40 + gen() % 400, w = 40 + gen() % 400;
    BinaryMask m(h, w);
    const int blobs = 1 + gen() % 4;
    for (int b = 0; b < blobs; ++b) {
        const std::size_t r0 = gen() % h, c0 = gen() % w;
        m.fill_rect(r0, c0, r0 + 1 + gen() % h, c0 + 1 + gen() % w);
    }
    // Speckle holes.
    const int holes = gen() % 30;
    for (int k = 0; k < holes; ++k) m.set(gen() % h, gen() % w, false);
    return m;
}

} // namespace ctxprobe::oracle
