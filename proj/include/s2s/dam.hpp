#ifndef S2S_DAM_HPP
#define S2S_DAM_HPP

#include "s2s/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace s2s {

/// Segmentation working state at one resolution: aggregated self-attention
/// rows are the pixel features, clusters partition the grid, and each caption
/// noun contributes a non-negative cross-attention map.
struct SegmentationState {
    Matrix f_sa;                              // P x P, P = resolution^2
    int resolution = 0;                       // grid side
    std::vector<ForegroundMask> cluster_masks;
    std::map<std::string, Matrix> noun_maps;  // noun -> resolution x resolution
    std::map<std::pair<int, std::string>, double> relevance;
};

/// Entrywise mean of same-shape row-stochastic attention maps.
Matrix aggregate_self_attention(const std::vector<Matrix>& maps);

/// KMeans over the rows of f_sa (k-means++ seeding, deterministic for a given
/// seed). Returns k disjoint masks covering the grid.
std::vector<ForegroundMask> cluster_attention(const Matrix& f_sa, int resolution, int k,
                                              uint64_t seed);

/// r(j, n) = sum(M_j * A_n) / (sum(M_j) + delta).
double relevance_score(const ForegroundMask& m, const Matrix& a, double delta);

/// Union of clusters whose relevance to at least one noun strictly exceeds
/// tau. Can be empty (no cluster qualifies); resolution is always recorded.
ForegroundMask select_foreground(const SegmentationState& state, double tau);

/// Deterministic stopword-filtered tagger: lowercase alpha tokens minus
/// closed-class words, deduplicated in order of first appearance.
std::vector<std::string> extract_nouns(const std::string& caption);

} // namespace s2s

#endif
