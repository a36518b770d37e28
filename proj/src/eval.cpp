#include "s2s/eval.hpp"

#include "s2s/core.hpp"

#include <cmath>
#include <stdexcept>

namespace s2s {
namespace {

Image resized_gray(const Image& img, int h, int w) {
    Image g = img.to_gray();
    if (g.h == h && g.w == w) return g;
    return resize(g, h, w);
}

class PixelL1Scorer final : public PairScorer {
public:
    std::string name() const override { return "pixel_l1"; }

    double score(const Image& output, const Image& content,
                 const Image&) const override {
        Image a = output.to_gray();
        Image b = resized_gray(content, a.h, a.w);
        double acc = 0.0;
        const std::size_t n = a.data.size();
        for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.data[i] - b.data[i]);
        return n == 0 ? 0.0 : acc / static_cast<double>(n);
    }
};

// Binarize an edge response at a fixed threshold; F1 over the two sets.
// Both-empty counts as perfect agreement.
class EdgeOverlapScorer final : public PairScorer {
public:
    EdgeOverlapScorer() : edges_(make_backend_set("toy").edge.release()) {}

    std::string name() const override { return "edge_overlap"; }

    double score(const Image& output, const Image& content,
                 const Image&) const override {
        Image a = output.to_gray();
        Image b = resized_gray(content, a.h, a.w);
        Image ea = edges_->detect(a);
        Image eb = edges_->detect(b);
        int tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < ea.data.size(); ++i) {
            const bool pa = ea.data[i] > 0.1;
            const bool pb = eb.data[i] > 0.1;
            if (pa && pb) ++tp;
            else if (pa && !pb) ++fp;
            else if (!pa && pb) ++fn;
        }
        if (tp + fp + fn == 0) return 1.0;
        return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }

private:
    std::unique_ptr<EdgeBackend> edges_;
};

} // namespace

std::unique_ptr<PairScorer> make_scorer(const std::string& name) {
    if (name == "pixel_l1") return std::make_unique<PixelL1Scorer>();
    if (name == "edge_overlap") return std::make_unique<EdgeOverlapScorer>();
    throw DomainError("unknown metric '" + name + "'");
}

std::vector<std::string> known_scorer_names() {
    return {"pixel_l1", "edge_overlap"};
}

MetricReport build_report(const std::vector<PairScores>& pairs) {
    MetricReport report;
    report.pairs = pairs;
    std::map<std::string, double> sums;
    std::map<std::string, int> counts;
    for (const auto& p : pairs) {
        for (const auto& [metric, value] : p.metrics) {
            sums[metric] += value;
            counts[metric] += 1;
        }
    }
    for (const auto& [metric, total] : sums)
        report.aggregates[metric] = total / counts[metric];
    auto l1 = report.aggregates.find("pixel_l1");
    auto eo = report.aggregates.find("edge_overlap");
    if (l1 != report.aggregates.end() && eo != report.aggregates.end()) {
        report.has_combined = true;
        report.combined = (1.0 + l1->second) * (2.0 - eo->second);
    }
    return report;
}

} // namespace s2s
