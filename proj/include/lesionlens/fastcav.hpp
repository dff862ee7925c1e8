#pragma once
// Concept activation vectors: a logistic-regression normal separating
// concept-positive from concept-negative feature vectors, and the class
// sensitivity of a linear softmax head along that direction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "imgio.hpp"
#include "rng.hpp"

namespace lesionlens {

// Row-major [rows x cols] matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

inline Matrix matrix_from_tensor(const Tensor& t) {
    if (t.rank() == 1) {
        Matrix m(1, t.dims[0]);
        std::copy(t.data.begin(), t.data.end(), m.data.begin());
        return m;
    }
    if (t.rank() != 2) fail(ErrorKind::DimensionMismatch, "feature tensors must be [n, F]");
    Matrix m(t.dims[0], t.dims[1]);
    std::copy(t.data.begin(), t.data.end(), m.data.begin());
    return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct CavConfig {
    double learning_rate = 0.01;
    int epochs = 100;
    double l2 = 1e-4;
    std::uint64_t seed = 42;
    double min_accuracy = 0.6;
};

enum class CavStatus { Ok, DegenerateConcept };

inline std::string_view to_string(CavStatus s) { return s == CavStatus::Ok ? "ok" : "degenerate_concept"; }

struct ConceptVector {
    std::string concept_name;
    std::vector<double> direction;  // unit L2 norm
    double train_accuracy = 0.0;
    std::uint64_t seed = 0;
    CavStatus status = CavStatus::Ok;

    std::size_t dimension() const noexcept { return direction.size(); }
};

inline std::vector<double> unit_vector(std::vector<double> v) {
    double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0) || !std::isfinite(norm)) fail(ErrorKind::Data, "cannot normalize a zero vector");
    for (auto& x : v) x /= norm;
    return v;
}

// Standardizes with pooled per-dimension statistics, fits logistic regression
// by per-sample SGD over seeded shuffles, and maps the weight vector back
// through the standardization (w_j / sigma_j) before normalizing. The result
// is oriented so positives project higher than negatives on average.
inline ConceptVector train_cav(const Matrix& positives, const Matrix& negatives, std::string name,
                               const CavConfig& cfg = {}) {
    if (positives.rows < 2 || negatives.rows < 2)
        fail(ErrorKind::DimensionMismatch, "each concept set needs at least two examples");
    if (positives.cols != negatives.cols || positives.cols == 0)
        fail(ErrorKind::DimensionMismatch, "positive and negative feature dimensions differ");
    const std::size_t F = positives.cols;
    const std::size_t n = positives.rows + negatives.rows;
    auto sample = [&](std::size_t i) { return i < positives.rows ? positives.row(i) : negatives.row(i - positives.rows); };

    std::vector<double> mean(F, 0.0), scale(F, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = sample(i);
        for (std::size_t j = 0; j < F; ++j) mean[j] += x[j];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = sample(i);
        for (std::size_t j = 0; j < F; ++j) scale[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
    }
    for (auto& s : scale) {
        s = std::sqrt(s / static_cast<double>(n));
        if (!(s > 1e-12)) s = 1.0;
    }

    Matrix z(n, F);
    std::vector<double> label(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = sample(i);
        for (std::size_t j = 0; j < F; ++j) z(i, j) = (x[j] - mean[j]) / scale[j];
        label[i] = i < positives.rows ? 1.0 : 0.0;
    }

    std::vector<double> w(F, 0.0);
    double b = 0.0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const auto x = z.row(i);
            const double p = 1.0 / (1.0 + std::exp(-(dot(w, x) + b)));
            const double err = p - label[i];
            for (std::size_t j = 0; j < F; ++j) w[j] -= cfg.learning_rate * (err * x[j] + cfg.l2 * w[j]);
            b -= cfg.learning_rate * err;
        }
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool pred = dot(w, z.row(i)) + b >= 0.0;
        correct += pred == (label[i] > 0.5);
    }

    ConceptVector cav;
    cav.concept_name = std::move(name);
    cav.seed = cfg.seed;
    cav.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);

    std::vector<double> v(F);
    for (std::size_t j = 0; j < F; ++j) v[j] = w[j] / scale[j];
    const double norm = std::sqrt(dot(v, v));
    if (norm > 1e-300 && std::isfinite(norm)) {
        v = unit_vector(std::move(v));
    } else {
        v.assign(F, 0.0);
        v[0] = 1.0;
        cav.status = CavStatus::DegenerateConcept;
    }
    double pos_mean = 0.0, neg_mean = 0.0;
    for (std::size_t i = 0; i < positives.rows; ++i) pos_mean += dot(v, positives.row(i));
    for (std::size_t i = 0; i < negatives.rows; ++i) neg_mean += dot(v, negatives.row(i));
    pos_mean /= static_cast<double>(positives.rows);
    neg_mean /= static_cast<double>(negatives.rows);
    if (pos_mean < neg_mean)
        for (auto& x : v) x = -x;
    cav.direction = std::move(v);
    if (cav.train_accuracy < cfg.min_accuracy) cav.status = CavStatus::DegenerateConcept;
    return cav;
}

// Classification head: logits = W f + b, W is [C x F].
struct LinearHead {
    Matrix weights;
    std::vector<double> bias;

    std::size_t classes() const noexcept { return weights.rows; }
    std::size_t features() const noexcept { return weights.cols; }
};

inline LinearHead make_linear_head(Matrix weights, std::vector<double> bias) {
    if (weights.rows < 2) fail(ErrorKind::DimensionMismatch, "linear head needs at least two classes");
    if (bias.size() != weights.rows) fail(ErrorKind::DimensionMismatch, "bias length must equal class count");
    return {std::move(weights), std::move(bias)};
}

// Head stored as one tensor: [C, F+1] with the bias in the last column, or
// [C, F] with zero bias when `has_bias` is false.
inline LinearHead linear_head_from_tensor(const Tensor& t, bool has_bias = true) {
    if (t.rank() != 2) fail(ErrorKind::DimensionMismatch, "linear head tensor must be 2-D");
    const std::size_t C = t.dims[0], cols = t.dims[1];
    if (has_bias && cols < 2) fail(ErrorKind::DimensionMismatch, "linear head with bias needs F+1 >= 2 columns");
    const std::size_t F = has_bias ? cols - 1 : cols;
    Matrix W(C, F);
    std::vector<double> b(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < F; ++j) W(c, j) = t.data[c * cols + j];
        if (has_bias) b[c] = t.data[c * cols + F];
    }
    return make_linear_head(std::move(W), std::move(b));
}

inline Tensor linear_head_to_tensor(const LinearHead& head) {
    const std::size_t C = head.classes(), F = head.features();
    std::vector<float> values(C * (F + 1));
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < F; ++j) values[c * (F + 1) + j] = static_cast<float>(head.weights(c, j));
        values[c * (F + 1) + F] = static_cast<float>(head.bias[c]);
    }
    return Tensor({static_cast<std::uint32_t>(C), static_cast<std::uint32_t>(F + 1)}, std::move(values));
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - top);
    for (auto& x : p) x /= sum;
    return p;
}

inline std::vector<double> head_probabilities(std::span<const double> f, const LinearHead& head) {
    if (f.size() != head.features()) fail(ErrorKind::DimensionMismatch, "feature length does not match head");
    std::vector<double> logits(head.classes());
    for (std::size_t c = 0; c < logits.size(); ++c) logits[c] = dot(head.weights.row(c), f) + head.bias[c];
    return softmax(logits);
}

enum class SensitivityMode { Probability, Logit };

// Directional derivative along v of p_c (Probability) or of logit c (Logit):
//   d p_c / d v = p_c * (w_c - sum_j p_j w_j) . v
inline double concept_sensitivity(std::span<const double> f, const LinearHead& head, std::size_t class_index,
                                  std::span<const double> v, SensitivityMode mode = SensitivityMode::Probability) {
    if (v.size() != head.features() || f.size() != head.features())
        fail(ErrorKind::DimensionMismatch, "feature, head and concept dimensions disagree");
    if (class_index >= head.classes()) fail(ErrorKind::DimensionMismatch, "class index out of range");
    const double wc_v = dot(head.weights.row(class_index), v);
    if (mode == SensitivityMode::Logit) return wc_v;
    const auto p = head_probabilities(f, head);
    double expected = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) expected += p[j] * dot(head.weights.row(j), v);
    return p[class_index] * (wc_v - expected);
}

struct ConceptScore {
    std::string concept_name;
    double tcav_fraction = 0.0;
    double mean_sensitivity = 0.0;
    std::size_t n_inputs = 0;
};

// Fraction of inputs with strictly positive sensitivity, and the mean sensitivity.
inline ConceptScore tcav_score(const Matrix& features, const LinearHead& head, std::size_t class_index,
                               const ConceptVector& cav, SensitivityMode mode = SensitivityMode::Probability) {
    if (features.rows < 1) fail(ErrorKind::DimensionMismatch, "concept scoring needs at least one input");
    if (features.cols != cav.dimension())
        fail(ErrorKind::DimensionMismatch, "feature dimension does not match the concept vector");
    ConceptScore out{cav.concept_name, 0.0, 0.0, features.rows};
    std::size_t positive = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) {
        const double s = concept_sensitivity(features.row(i), head, class_index, cav.direction, mode);
        positive += s > 0.0;
        sum += s;
    }
    out.tcav_fraction = static_cast<double>(positive) / static_cast<double>(features.rows);
    out.mean_sensitivity = sum / static_cast<double>(features.rows);
    return out;
}

}  // namespace lesionlens
