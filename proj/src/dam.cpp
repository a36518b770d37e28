#include "s2s/dam.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace s2s {

Matrix aggregate_self_attention(const std::vector<Matrix>& maps) {
    if (maps.empty()) throw DomainError("aggregate_self_attention: no maps given");
    Matrix mean(maps[0].rows, maps[0].cols);
    for (const Matrix& m : maps) {
        if (!m.same_shape(mean))
            throw ShapeError("aggregate_self_attention: map shapes disagree");
        for (size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += m.data[i];
    }
    double inv = 1.0 / static_cast<double>(maps.size());
    for (double& v : mean.data) v *= inv;
    return mean;
}

namespace {

double sq_dist(const Matrix& m, int row, const std::vector<double>& center) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) {
        double d = m(row, c) - center[static_cast<size_t>(c)];
        s += d * d;
    }
    return s;
}

} // namespace

std::vector<ForegroundMask> cluster_attention(const Matrix& f_sa, int resolution, int k,
                                              uint64_t seed) {
    const int p = f_sa.rows;
    if (k < 2) throw DomainError("cluster_attention: k must be >= 2, got " + std::to_string(k));
    if (k > p) throw DomainError("cluster_attention: k = " + std::to_string(k) +
                                 " exceeds pixel count " + std::to_string(p));
    if (resolution * resolution != p)
        throw ShapeError("cluster_attention: feature rows " + std::to_string(p) +
                         " do not form a " + std::to_string(resolution) + " grid");

    // k-means++ seeding: weighted by squared distance to the nearest chosen
    // center, falling back to the lowest-index unchosen row on ties at zero.
    Rng rng(seed);
    std::vector<std::vector<double>> centers;
    std::vector<bool> chosen(static_cast<size_t>(p), false);
    auto row_vec = [&](int r) {
        std::vector<double> v(static_cast<size_t>(f_sa.cols));
        for (int c = 0; c < f_sa.cols; ++c) v[static_cast<size_t>(c)] = f_sa(r, c);
        return v;
    };
    int first = static_cast<int>(rng.below(static_cast<uint64_t>(p)));
    centers.push_back(row_vec(first));
    chosen[static_cast<size_t>(first)] = true;
    std::vector<double> d2(static_cast<size_t>(p));
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int r = 0; r < p; ++r) {
            double best = 1e308;
            for (const auto& c : centers) best = std::min(best, sq_dist(f_sa, r, c));
            d2[static_cast<size_t>(r)] = chosen[static_cast<size_t>(r)] ? 0.0 : best;
            total += d2[static_cast<size_t>(r)];
        }
        int pick = -1;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            for (int r = 0; r < p; ++r) {
                acc += d2[static_cast<size_t>(r)];
                if (acc >= target && !chosen[static_cast<size_t>(r)] &&
                    d2[static_cast<size_t>(r)] > 0.0) {
                    pick = r;
                    break;
                }
            }
        }
        if (pick < 0) {
            for (int r = 0; r < p; ++r)
                if (!chosen[static_cast<size_t>(r)]) {
                    pick = r;
                    break;
                }
        }
        chosen[static_cast<size_t>(pick)] = true;
        centers.push_back(row_vec(pick));
    }

    // Lloyd iterations with lowest-index tie-breaking; an emptied cluster is
    // reseeded from the row farthest from its assigned center.
    std::vector<int> assign(static_cast<size_t>(p), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int r = 0; r < p; ++r) {
            int best = 0;
            double best_d = sq_dist(f_sa, r, centers[0]);
            for (int j = 1; j < k; ++j) {
                double d = sq_dist(f_sa, r, centers[static_cast<size_t>(j)]);
                if (d < best_d - 1e-15) {
                    best_d = d;
                    best = j;
                }
            }
            if (assign[static_cast<size_t>(r)] != best) {
                assign[static_cast<size_t>(r)] = best;
                changed = true;
            }
        }

        std::vector<int> counts(static_cast<size_t>(k), 0);
        std::vector<std::vector<double>> sums(static_cast<size_t>(k),
                                              std::vector<double>(static_cast<size_t>(f_sa.cols),
                                                                  0.0));
        for (int r = 0; r < p; ++r) {
            int j = assign[static_cast<size_t>(r)];
            ++counts[static_cast<size_t>(j)];
            for (int c = 0; c < f_sa.cols; ++c)
                sums[static_cast<size_t>(j)][static_cast<size_t>(c)] += f_sa(r, c);
        }
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<size_t>(j)] == 0) {
                // Reseed with the row farthest from its current center.
                int far_row = 0;
                double far_d = -1.0;
                for (int r = 0; r < p; ++r) {
                    double d =
                        sq_dist(f_sa, r, centers[static_cast<size_t>(assign[static_cast<size_t>(r)])]);
                    if (d > far_d) {
                        far_d = d;
                        far_row = r;
                    }
                }
                centers[static_cast<size_t>(j)] = row_vec(far_row);
                assign[static_cast<size_t>(far_row)] = j;
                changed = true;
                continue;
            }
            for (int c = 0; c < f_sa.cols; ++c)
                centers[static_cast<size_t>(j)][static_cast<size_t>(c)] =
                    sums[static_cast<size_t>(j)][static_cast<size_t>(c)] /
                    counts[static_cast<size_t>(j)];
        }
        if (!changed) break;
    }

    std::vector<ForegroundMask> masks(static_cast<size_t>(k), ForegroundMask(resolution, 0));
    for (int r = 0; r < p; ++r)
        masks[static_cast<size_t>(assign[static_cast<size_t>(r)])].grid[static_cast<size_t>(r)] = 1;
    return masks;
}

double relevance_score(const ForegroundMask& m, const Matrix& a, double delta) {
    if (!(delta > 0.0)) throw DomainError("relevance_score: delta must be positive");
    if (m.resolution * m.resolution != a.rows * a.cols)
        throw ShapeError("relevance_score: mask covers " +
                         std::to_string(m.resolution * m.resolution) + " cells, map has " +
                         std::to_string(a.rows * a.cols));
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < m.grid.size(); ++i) {
        if (!m.grid[i]) continue;
        num += a.data[i];
        den += 1.0;
    }
    return num / (den + delta);
}

ForegroundMask select_foreground(const SegmentationState& state, double tau) {
    if (state.cluster_masks.empty())
        throw DomainError("select_foreground: no clusters");
    ForegroundMask out(state.resolution, 0);
    for (size_t j = 0; j < state.cluster_masks.size(); ++j) {
        bool qualifies = false;
        for (const auto& [key, r] : state.relevance) {
            if (key.first != static_cast<int>(j)) continue;
            if (r > tau) {
                qualifies = true;
                break;
            }
        }
        if (!qualifies) continue;
        const ForegroundMask& m = state.cluster_masks[j];
        for (size_t i = 0; i < out.grid.size(); ++i) out.grid[i] |= m.grid[i];
    }
    return out;
}

std::vector<std::string> extract_nouns(const std::string& caption) {
    static const std::set<std::string> stopwords = {
        "a",    "an",   "the",  "of",   "on",   "in",   "at",   "by",  "to",  "with",
        "and",  "or",   "for",  "from", "into", "over", "under", "is",  "are", "was",
        "were", "be",   "been", "it",   "its",  "this", "that",  "these", "those",
        "beside", "near", "above", "below", "behind",
    };
    std::vector<std::string> nouns;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && !stopwords.count(cur) &&
            std::find(nouns.begin(), nouns.end(), cur) == nouns.end())
            nouns.push_back(cur);
        cur.clear();
    };
    for (char ch : caption) {
        if (std::isalpha(static_cast<unsigned char>(ch)))
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else
            flush();
    }
    flush();
    return nouns;
}

} // namespace s2s
