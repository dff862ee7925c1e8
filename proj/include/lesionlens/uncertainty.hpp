#pragma once
// MC-Dropout uncertainty decomposition over a [T x C] matrix of softmax rows.
//
//   predictive  H[mean_t p_t] / ln C
//   epistemic   per-class population variance across passes, mean over classes
//   aleatoric   mean_t H[p_t] / ln C
//
// Natural logarithms; 0 ln 0 = 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "imgio.hpp"
#include "rng.hpp"

namespace lesionlens {

inline constexpr double kSimplexTolerance = 1e-6;

class McSampleMatrix {
public:
    McSampleMatrix(std::size_t passes, std::size_t classes, std::vector<double> values)
        : passes_(passes), classes_(classes), values_(std::move(values)) {
        if (passes_ < 2) fail(ErrorKind::InvalidSimplex, "need at least two stochastic passes");
        if (classes_ < 2) fail(ErrorKind::InvalidSimplex, "need at least two classes");
        if (values_.size() != passes_ * classes_) fail(ErrorKind::InvalidSimplex, "sample matrix size mismatch");
        for (std::size_t t = 0; t < passes_; ++t) {
            double sum = 0.0;
            for (double v : row(t)) {
                if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::InvalidSimplex, "probabilities must lie in [0,1]");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kSimplexTolerance)
                fail(ErrorKind::InvalidSimplex, "row " + std::to_string(t) + " does not sum to 1");
        }
    }

    static McSampleMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) fail(ErrorKind::InvalidSimplex, "empty sample matrix");
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != rows[0].size()) fail(ErrorKind::InvalidSimplex, "ragged sample matrix");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return McSampleMatrix(rows.size(), rows[0].size(), std::move(flat));
    }

    static McSampleMatrix from_tensor(const Tensor& t) {
        if (t.rank() != 2) fail(ErrorKind::InvalidSimplex, "MC samples must be a [T, C] tensor");
        return McSampleMatrix(t.dims[0], t.dims[1], std::vector<double>(t.data.begin(), t.data.end()));
    }

    std::size_t passes() const noexcept { return passes_; }
    std::size_t classes() const noexcept { return classes_; }
    std::span<const double> row(std::size_t t) const { return {values_.data() + t * classes_, classes_}; }
    double operator()(std::size_t t, std::size_t c) const { return values_[t * classes_ + c]; }

    std::vector<double> mean_prediction() const {
        std::vector<double> mean(classes_, 0.0);
        for (std::size_t t = 0; t < passes_; ++t)
            for (std::size_t c = 0; c < classes_; ++c) mean[c] += (*this)(t, c);
        for (auto& m : mean) m /= static_cast<double>(passes_);
        return mean;
    }

private:
    std::size_t passes_;
    std::size_t classes_;
    std::vector<double> values_;
};

inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

inline double normalized_entropy(std::span<const double> p) {
    return std::clamp(entropy(p) / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

inline double predictive_uncertainty(const McSampleMatrix& m) { return normalized_entropy(m.mean_prediction()); }

enum class ClassAggregation { Mean, Sum };

// Population variance per class, accumulated on deviations from the first
// pass so identical passes give exactly zero.
inline std::vector<double> per_class_variance(const McSampleMatrix& m) {
    const double T = static_cast<double>(m.passes());
    std::vector<double> var(m.classes(), 0.0);
    for (std::size_t c = 0; c < m.classes(); ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t t = 1; t < m.passes(); ++t) {
            const double d = m(t, c) - m(0, c);
            sum += d;
            sum_sq += d * d;
        }
        const double mean = sum / T;
        var[c] = std::max(0.0, sum_sq / T - mean * mean);
    }
    return var;
}

inline double epistemic_uncertainty(const McSampleMatrix& m, ClassAggregation agg = ClassAggregation::Mean) {
    const auto var = per_class_variance(m);
    double s = 0.0;
    for (double v : var) s += v;
    return agg == ClassAggregation::Sum ? s : s / static_cast<double>(var.size());
}

inline double aleatoric_uncertainty(const McSampleMatrix& m) {
    double s = 0.0;
    for (std::size_t t = 0; t < m.passes(); ++t) s += entropy(m.row(t));
    s /= static_cast<double>(m.passes());
    return std::clamp(s / std::log(static_cast<double>(m.classes())), 0.0, 1.0);
}

inline constexpr double kReliabilityThreshold = 0.5;

struct UncertaintyReport {
    double predictive = 0.0;
    double epistemic = 0.0;
    double aleatoric = 0.0;
    double mutual_information = 0.0;
    std::vector<double> mean_prediction;
    std::size_t predicted_class = 0;
    double confidence = 0.0;
    bool reliable = true;
};

// Exceeding the threshold marks a prediction unreliable; equality stays reliable.
inline bool is_reliable(double predictive, double threshold = kReliabilityThreshold) {
    return predictive <= threshold;
}

inline UncertaintyReport decompose(const McSampleMatrix& m, double threshold = kReliabilityThreshold,
                                   ClassAggregation agg = ClassAggregation::Mean) {
    UncertaintyReport r;
    r.mean_prediction = m.mean_prediction();
    r.predictive = normalized_entropy(r.mean_prediction);
    r.epistemic = epistemic_uncertainty(m, agg);
    r.aleatoric = aleatoric_uncertainty(m);
    r.mutual_information = std::max(0.0, r.predictive - r.aleatoric);
    r.predicted_class = static_cast<std::size_t>(
        std::max_element(r.mean_prediction.begin(), r.mean_prediction.end()) - r.mean_prediction.begin());
    r.confidence = r.mean_prediction[r.predicted_class];
    r.reliable = is_reliable(r.predictive, threshold);
    return r;
}

// Built-in stochastic classifier: a fixed two-layer perceptron
//   hidden = relu(W1 x + b1), dropped out with inverted dropout,
//   logits = W2 hidden, 8 classes,
// with constant weights
//   W1[h][i] = sin(1.3 (h+1) + 0.7 (i+1)) / sqrt(F)
//   b1[h]    = 0.1 cos(0.5 (h+1))
//   W2[c][h] = 1.5 cos(0.9 (c+1)(h+1) + 0.4) / sqrt(H)
// for H = 32 hidden units. Masks come from an isolated seeded stream, so
// (input, passes, seed) fully determines the output.
struct ReferenceSampler {
    static constexpr std::size_t kHidden = 32;
    static constexpr std::size_t kClasses = 8;
    double dropout_rate = 0.3;

    McSampleMatrix sample(std::span<const double> input, std::size_t passes, std::uint64_t seed) const {
        if (passes < 2) fail(ErrorKind::InvalidSimplex, "need at least two stochastic passes");
        if (input.empty()) fail(ErrorKind::DimensionMismatch, "empty input vector");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorKind::Data, "dropout rate must be in [0,1)");
        const double in_scale = 1.0 / std::sqrt(static_cast<double>(input.size()));
        const double out_scale = 1.5 / std::sqrt(static_cast<double>(kHidden));

        std::vector<double> hidden(kHidden);
        for (std::size_t h = 0; h < kHidden; ++h) {
            double a = 0.1 * std::cos(0.5 * static_cast<double>(h + 1));
            for (std::size_t i = 0; i < input.size(); ++i)
                a += std::sin(1.3 * static_cast<double>(h + 1) + 0.7 * static_cast<double>(i + 1)) * in_scale *
                     input[i];
            hidden[h] = std::max(a, 0.0);
        }

        Rng rng(seed);
        const double keep_scale = 1.0 / (1.0 - dropout_rate);
        std::vector<double> flat;
        flat.reserve(passes * kClasses);
        for (std::size_t t = 0; t < passes; ++t) {
            std::vector<double> dropped(kHidden);
            for (std::size_t h = 0; h < kHidden; ++h) {
                const bool keep = rng.uniform() >= dropout_rate;
                dropped[h] = keep ? hidden[h] * keep_scale : 0.0;
            }
            std::vector<double> logits(kClasses, 0.0);
            for (std::size_t c = 0; c < kClasses; ++c)
                for (std::size_t h = 0; h < kHidden; ++h)
                    logits[c] += std::cos(0.9 * static_cast<double>((c + 1) * (h + 1)) + 0.4) * out_scale * dropped[h];
            const double top = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (auto& l : logits) sum += l = std::exp(l - top);
            for (auto l : logits) flat.push_back(l / sum);
        }
        return McSampleMatrix(passes, kClasses, std::move(flat));
    }
};

inline McSampleMatrix reference_sampler(std::span<const double> input, std::size_t passes, std::uint64_t seed,
                                        double dropout_rate = 0.3) {
    return ReferenceSampler{dropout_rate}.sample(input, passes, seed);
}

}  // namespace lesionlens
