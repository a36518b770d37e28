#ifndef S2S_EVAL_HPP
#define S2S_EVAL_HPP

#include "s2s/backends.hpp"
#include "s2s/config.hpp"
#include "s2s/image.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace s2s {

/// Named metric over (output, content, reference). Shipped proxies are cheap
/// and model-free; heavier perceptual scorers slot in through the same
/// interface.
class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual std::string name() const = 0;
    virtual double score(const Image& output, const Image& content,
                         const Image& reference) const = 0;
};

/// Known scorers: "pixel_l1" (mean abs gray distance output vs content,
/// lower = closer) and "edge_overlap" (F1 of binarized contour responses,
/// higher = structure kept). Unknown names are rejected.
std::unique_ptr<PairScorer> make_scorer(const std::string& name);

std::vector<std::string> known_scorer_names();

struct PairScores {
    std::string content_source;
    std::string reference_source;
    std::map<std::string, double> metrics;
};

struct MetricReport {
    std::vector<PairScores> pairs;
    std::map<std::string, double> aggregates;  // exact mean per metric
    bool has_combined = false;
    double combined = 0.0;  // (1 + pixel_l1) * (2 - edge_overlap) of aggregates
};

/// Computes per-pair metrics plus exact-mean aggregates. The combined figure
/// is emitted when both default proxies are among the metrics.
MetricReport build_report(const std::vector<PairScores>& pairs);

} // namespace s2s

#endif
