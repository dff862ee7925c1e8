#pragma once
// Full-pipeline orchestration, JSON report emission, concept-vector files
// and overlay rendering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abcde.hpp"
#include "attention.hpp"
#include "error.hpp"
#include "fastcav.hpp"
#include "imgio.hpp"
#include "segmentation.hpp"
#include "uncertainty.hpp"

namespace lesionlens {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint64_t kDefaultSeed = 42;

inline const std::vector<std::string>& default_labels() {
    static const std::vector<std::string> labels{"MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC"};
    return labels;
}

// Doubles are emitted with at most 9 significant digits; non-finite values become null.
inline Json json_number(double v) {
    if (!std::isfinite(v)) return nullptr;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    double rounded = std::strtod(buf, nullptr);
    if (rounded == 0.0) rounded = 0.0;  // drop negative zero
    return rounded;
}

inline Json json_numbers(std::span<const double> values) {
    Json arr = Json::array();
    for (double v : values) arr.push_back(json_number(v));
    return arr;
}

// ------------------------------------------------------------ stage errors

// An Error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.kind(), strip_kind(cause.what())), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    static std::string strip_kind(const std::string& what) {
        const auto pos = what.find(": ");
        return pos == std::string::npos ? what : what.substr(pos + 2);
    }
    std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    }
}

// -------------------------------------------------------- concept vectors

// A concept vector is stored as an MNT1 tensor [F] plus a JSON sidecar at
// "<path>.json" carrying name, training accuracy, seed and status.
inline std::filesystem::path cav_sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

inline Json cav_sidecar(const ConceptVector& cav) {
    Json j;
    j["concept_name"] = cav.concept_name;
    j["dimension"] = cav.dimension();
    j["train_accuracy"] = json_number(cav.train_accuracy);
    j["seed"] = cav.seed;
    j["status"] = std::string(to_string(cav.status));
    return j;
}

inline void save_concept_vector(const ConceptVector& cav, const std::filesystem::path& path) {
    const auto n = static_cast<std::uint32_t>(cav.direction.size());
    write_tensor(Tensor({n}, std::vector<float>(cav.direction.begin(), cav.direction.end())), path);
    std::ofstream out(cav_sidecar_path(path));
    if (!out) fail(ErrorKind::Io, "cannot write concept sidecar for '" + path.string() + "'");
    out << cav_sidecar(cav).dump(2) << "\n";
}

inline ConceptVector load_concept_vector(const std::filesystem::path& path) {
    const auto t = load_tensor(path);
    if (t.rank() != 1) fail(ErrorKind::Format, "concept vector tensor must be 1-D");
    ConceptVector cav;
    cav.direction = unit_vector(std::vector<double>(t.data.begin(), t.data.end()));
    cav.concept_name = path.stem().string();
    const auto side = cav_sidecar_path(path);
    if (std::filesystem::exists(side)) {
        std::ifstream in(side);
        Json j;
        try {
            j = Json::parse(in);
            cav.concept_name = j.value("concept_name", cav.concept_name);
            cav.train_accuracy = j.value("train_accuracy", 0.0);
            cav.seed = j.value("seed", std::uint64_t{0});
            cav.status = j.value("status", std::string("ok")) == "ok" ? CavStatus::Ok : CavStatus::DegenerateConcept;
            if (j.contains("dimension") && j["dimension"].get<std::size_t>() != cav.dimension())
                fail(ErrorKind::Format, "sidecar dimension does not match concept tensor");
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Format, std::string("malformed concept sidecar: ") + e.what());
        }
    }
    return cav;
}

// ---------------------------------------------------------------- overlay

// Black -> red -> yellow ramp.
inline std::array<double, 3> warm_ramp(double h) {
    h = std::clamp(h, 0.0, 1.0);
    return {255.0 * std::min(1.0, 2.0 * h), 255.0 * std::max(0.0, 2.0 * h - 1.0), 0.0};
}

// 0.5 image + 0.5 ramp(H), then the lesion boundary in pure green.
inline RasterImage render_overlay(const RasterImage& img, const AttentionMap& H, const LesionMask& mask) {
    if (!H.values.same_shape(img.width, img.height) || mask.width() != img.width || mask.height() != img.height)
        fail(ErrorKind::ShapeMismatch, "overlay inputs have different dimensions");
    RasterImage out(img.width, img.height, 3);
    const auto boundary = boundary_pixels(mask.bits());
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            if (boundary(r, c)) {
                out.at(r, c, 0) = 0;
                out.at(r, c, 1) = 255;
                out.at(r, c, 2) = 0;
                continue;
            }
            const auto ramp = warm_ramp(H(r, c));
            for (int ch = 0; ch < 3; ++ch) {
                const double src = img.at(r, c, img.channels == 3 ? ch : 0);
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(0.5 * src + 0.5 * ramp[ch]));
            }
        }
    return out;
}

inline RasterImage mask_to_pgm(const LesionMask& mask) {
    std::vector<std::uint8_t> px(mask.bits().size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits().data[i] ? 255 : 0;
    return RasterImage(mask.width(), mask.height(), 1, std::move(px));
}

// ------------------------------------------------------------ JSON blocks

inline Json to_json(const LesionMask& mask) {
    Json j;
    j["area_px"] = mask.area();
    j["centroid_row"] = json_number(mask.centroid_row());
    j["centroid_col"] = json_number(mask.centroid_col());
    return j;
}

inline Json to_json(const AbcdeReport& r) {
    Json j;
    j["asymmetry"] = json_number(r.asymmetry);
    j["asymmetry_horizontal"] = json_number(r.asymmetry_axes.horizontal);
    j["asymmetry_vertical"] = json_number(r.asymmetry_axes.vertical);
    j["border"] = json_number(r.border);
    j["vertex_count"] = r.vertex_count;
    j["perimeter_px"] = json_number(r.perimeter_px);
    j["color_count"] = r.color_count;
    j["color_std"] = json_number(r.color_std);
    Json colors = Json::array();
    for (const auto& c : r.dominant_colors) {
        Json cj;
        cj["rgb"] = {c.rgb[0], c.rgb[1], c.rgb[2]};
        cj["coverage"] = json_number(c.coverage);
        colors.push_back(cj);
    }
    j["dominant_colors"] = colors;
    j["diameter_px"] = json_number(r.diameter_px);
    j["bbox_diagonal_px"] = json_number(r.bbox_diagonal_px);
    Json flags = Json::array();
    for (char ch : r.flags.letters()) flags.push_back(std::string(1, ch));
    j["flags"] = flags;
    j["flag_count"] = r.flags.count();
    j["risk"] = std::string(to_string(r.risk));
    return j;
}

inline std::string label_for(std::size_t index, const std::vector<std::string>& labels) {
    return index < labels.size() ? labels[index] : "class_" + std::to_string(index);
}

inline Json to_json(const UncertaintyReport& r, double threshold, const std::vector<std::string>& labels) {
    Json j;
    j["predictive"] = json_number(r.predictive);
    j["epistemic"] = json_number(r.epistemic);
    j["aleatoric"] = json_number(r.aleatoric);
    j["mutual_information"] = json_number(r.mutual_information);
    j["mean_prediction"] = json_numbers(r.mean_prediction);
    j["predicted_class"] = r.predicted_class;
    j["predicted_label"] = label_for(r.predicted_class, labels);
    j["confidence"] = json_number(r.confidence);
    j["reliable"] = r.reliable;
    j["status"] = r.reliable ? "RELIABLE" : "UNCERTAIN";
    j["threshold"] = json_number(threshold);
    return j;
}

inline Json to_json(const ConceptScore& s, std::size_t class_index, const ConceptVector& cav) {
    Json j;
    j["concept_name"] = s.concept_name;
    j["class_index"] = class_index;
    j["tcav_fraction"] = json_number(s.tcav_fraction);
    j["mean_sensitivity"] = json_number(s.mean_sensitivity);
    j["n_inputs"] = s.n_inputs;
    j["cav_train_accuracy"] = json_number(cav.train_accuracy);
    j["cav_status"] = std::string(to_string(cav.status));
    return j;
}

// --------------------------------------------------------------- pipeline

// Seed fan-out: every stochastic stage draws from derive_seed(root, stage id).
enum SeedStage : std::uint64_t { kKMeansStage = 1, kWelzlStage = 2, kSgdStage = 3, kDropoutStage = 4 };

struct AnalysisConfig {
    std::uint64_t seed = kDefaultSeed;
    bool lesion_is_dark = true;
    int morph_radius = 3;
    int dilation_radius = kBorderDilationRadius;
    AxisAggregation asymmetry_aggregation = AxisAggregation::Mean;
    ClassAggregation epistemic_aggregation = ClassAggregation::Mean;
    SensitivityMode sensitivity = SensitivityMode::Probability;
    double reliability_threshold = kReliabilityThreshold;
    RiskThresholds risk;
    std::vector<std::string> labels = default_labels();

    std::uint64_t stage_seed(SeedStage s) const { return derive_seed(seed, s); }

    SegmentationOptions segmentation() const { return {lesion_is_dark, morph_radius}; }

    AbcdeOptions abcde() const {
        AbcdeOptions o;
        o.asymmetry_aggregation = asymmetry_aggregation;
        o.color.seed = stage_seed(kKMeansStage);
        o.mec_seed = stage_seed(kWelzlStage);
        o.thresholds = risk;
        return o;
    }

    Json to_json() const {
        const auto ab = abcde();
        Json j;
        j["seed"] = seed;
        j["kmeans_seed"] = ab.color.seed;
        j["welzl_seed"] = ab.mec_seed;
        j["lesion_polarity"] = lesion_is_dark ? "dark" : "light";
        j["morph_radius"] = morph_radius;
        j["border_dilation_radius"] = dilation_radius;
        j["asymmetry_aggregation"] = asymmetry_aggregation == AxisAggregation::Mean ? "mean" : "max";
        j["douglas_peucker_fraction"] = json_number(ab.dp_fraction);
        j["kmeans_clusters"] = ab.color.clusters;
        j["color_min_coverage"] = json_number(ab.color.min_coverage);
        j["kmeans_max_iterations"] = ab.color.max_iterations;
        j["kmeans_shift_tolerance"] = json_number(ab.color.shift_tolerance);
        j["risk_thresholds"] = {{"asymmetry", json_number(risk.asymmetry)},
                                {"border", json_number(risk.border)},
                                {"colors", risk.colors},
                                {"diameter_px", json_number(risk.diameter_px)}};
        j["epistemic_aggregation"] = epistemic_aggregation == ClassAggregation::Mean ? "mean" : "sum";
        j["sensitivity"] = sensitivity == SensitivityMode::Probability ? "probability" : "logit";
        j["reliability_threshold"] = json_number(reliability_threshold);
        j["gradcam_epsilon"] = json_number(kGradCamEpsilon);
        j["labels"] = labels;
        return j;
    }
};

struct AnalysisInputs {
    std::filesystem::path image;
    std::optional<std::filesystem::path> activations;
    std::optional<std::filesystem::path> gradients;
    std::optional<int> class_index;
    std::optional<std::filesystem::path> mc_samples;
    std::optional<std::filesystem::path> features;
    std::optional<std::filesystem::path> head;
    std::vector<std::filesystem::path> cavs;
    std::optional<std::filesystem::path> overlay_dir;
};

// Runs every stage whose inputs are present; absent stages become null blocks.
// Errors surface as StageError naming the failing stage.
inline Json run_analysis(const AnalysisInputs& in, const AnalysisConfig& cfg) {
    const bool want_attention = in.activations || in.gradients;
    const bool want_concepts = in.features || in.head || !in.cavs.empty();
    run_stage("arguments", [&] {
        if (want_attention && !(in.activations && in.gradients && in.class_index))
            fail(ErrorKind::Format, "attention needs --activations, --gradients and --class-index together");
        if (want_concepts && !(in.features && in.head && !in.cavs.empty()))
            fail(ErrorKind::Format, "concept scores need --features, --head and at least one --cav");
    });

    const auto img = run_stage("image", [&] { return load_image(in.image); });
    const auto mask = run_stage("segmentation", [&] { return segment_lesion(img, cfg.segmentation()); });
    const auto abcde = run_stage("abcde", [&] { return compute_abcde(img, mask, cfg.abcde()); });

    Json report;
    report["schema_version"] = kSchemaVersion;
    report["tool_version"] = kToolVersion;
    report["image_path"] = in.image.string();
    report["image"] = {{"width", img.width}, {"height", img.height}, {"channels", img.channels}};
    report["prediction"] = nullptr;
    report["lesion"] = to_json(mask);
    report["abcde"] = to_json(abcde);
    report["alignment"] = nullptr;
    report["uncertainty"] = nullptr;
    report["concepts"] = nullptr;

    std::optional<AttentionMap> heat;
    if (want_attention) {
        heat = run_stage("attention", [&] {
            auto dump = make_conv_dump(load_tensor(*in.activations), load_tensor(*in.gradients), *in.class_index);
            return attention_map(dump, img.width, img.height);
        });
        report["alignment"] = run_stage("alignment", [&] {
            Json j;
            j["class_index"] = *in.class_index;
            j["lesion"] = json_number(lesion_alignment(*heat, mask));
            j["border"] = json_number(border_alignment(*heat, mask, cfg.dilation_radius));
            j["dilation_radius"] = cfg.dilation_radius;
            return j;
        });
    }

    std::optional<UncertaintyReport> unc;
    if (in.mc_samples) {
        unc = run_stage("uncertainty", [&] {
            const auto m = McSampleMatrix::from_tensor(load_tensor(*in.mc_samples));
            return decompose(m, cfg.reliability_threshold, cfg.epistemic_aggregation);
        });
        report["uncertainty"] = to_json(*unc, cfg.reliability_threshold, cfg.labels);
        report["prediction"] = {{"class_index", unc->predicted_class},
                                {"class_name", label_for(unc->predicted_class, cfg.labels)},
                                {"confidence", json_number(unc->confidence)}};
    }

    if (want_concepts) {
        report["concepts"] = run_stage("concepts", [&] {
            const auto features = matrix_from_tensor(load_tensor(*in.features));
            const auto head = linear_head_from_tensor(load_tensor(*in.head));
            std::size_t cls = 0;
            if (in.class_index) {
                cls = static_cast<std::size_t>(*in.class_index);
            } else if (unc) {
                cls = unc->predicted_class;
            } else {
                std::vector<double> mean(head.classes(), 0.0);
                for (std::size_t i = 0; i < features.rows; ++i) {
                    const auto p = head_probabilities(features.row(i), head);
                    for (std::size_t c = 0; c < p.size(); ++c) mean[c] += p[c];
                }
                cls = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
            }
            Json arr = Json::array();
            for (const auto& path : in.cavs) {
                const auto cav = load_concept_vector(path);
                arr.push_back(to_json(tcav_score(features, head, cls, cav, cfg.sensitivity), cls, cav));
            }
            return arr;
        });
    }

    if (in.overlay_dir) {
        run_stage("overlay", [&] {
            std::error_code ec;
            std::filesystem::create_directories(*in.overlay_dir, ec);
            if (ec) fail(ErrorKind::Io, "cannot create overlay directory '" + in.overlay_dir->string() + "'");
            write_image(mask_to_pgm(mask), *in.overlay_dir / "mask.pgm");
            if (heat) {
                write_image(attention_to_pgm(*heat), *in.overlay_dir / "heatmap.pgm");
                write_image(render_overlay(img, *heat, mask), *in.overlay_dir / "overlay.ppm");
            }
        });
    }

    report["config"] = cfg.to_json();
    return report;
}

// Canonical text form: 2-space indent, fixed key order, trailing newline.
inline std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace lesionlens
