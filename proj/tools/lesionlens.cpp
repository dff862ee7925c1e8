// lesionlens command-line interface.
//
//   lesionlens analyze     --image img.ppm [attention, uncertainty, concept inputs] --out report.json
//   lesionlens abcde       --image img.ppm
//   lesionlens gradcam     --activations a.mnt --gradients g.mnt --class-index 0 --image img.ppm
//   lesionlens align       --image img.ppm (--heatmap h.pgm | --activations .. --gradients .. --class-index ..)
//   lesionlens cav-train   --positives p.mnt --negatives n.mnt --name concept --cav-out concept.mnt
//   lesionlens cav-score   --features f.mnt --head head.mnt --class-index 0 --cav concept.mnt...
//   lesionlens uncertainty --mc-samples m.mnt
//   lesionlens mc-sample   --input x.mnt --passes 10 --out m.mnt
//
// Exit codes: 0 success, 2 input/format errors, 3 degenerate analysis.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lesionlens/lesionlens.hpp"

namespace ll = lesionlens;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDegenerate = 3;

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    bool lesion_light = false;
    int morph_radius = 3;
    int dilation_radius = ll::kBorderDilationRadius;
    std::string asymmetry_agg = "mean";
    std::string epistemic_agg = "mean";
    std::string sensitivity = "probability";
    double threshold = ll::kReliabilityThreshold;
    std::string labels;
    std::string out;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("LESIONLENS_SEED"); env && *env) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
        ll::fail(ll::ErrorKind::Format, std::string("LESIONLENS_SEED is not an unsigned integer: ") + env);
    }
    return ll::kDefaultSeed;
}

std::vector<std::string> split_labels(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

ll::AnalysisConfig make_config(const CommonFlags& f) {
    ll::AnalysisConfig cfg;
    cfg.seed = resolve_seed(f.seed);
    cfg.lesion_is_dark = !f.lesion_light;
    cfg.morph_radius = f.morph_radius;
    cfg.dilation_radius = f.dilation_radius;
    cfg.asymmetry_aggregation = f.asymmetry_agg == "max" ? ll::AxisAggregation::Max : ll::AxisAggregation::Mean;
    cfg.epistemic_aggregation = f.epistemic_agg == "sum" ? ll::ClassAggregation::Sum : ll::ClassAggregation::Mean;
    cfg.sensitivity = f.sensitivity == "logit" ? ll::SensitivityMode::Logit : ll::SensitivityMode::Probability;
    cfg.reliability_threshold = f.threshold;
    if (!f.labels.empty()) cfg.labels = split_labels(f.labels);
    return cfg;
}

void add_seed(CLI::App* app, CommonFlags& f) {
    app->add_option("--seed", f.seed, "Root seed for every stochastic stage (default: $LESIONLENS_SEED or 42)");
}

void add_segmentation_flags(CLI::App* app, CommonFlags& f) {
    app->add_flag("--lesion-light", f.lesion_light, "Lesion is brighter than the surrounding skin");
    app->add_option("--morph-radius", f.morph_radius, "Disk radius for opening/closing")->check(CLI::PositiveNumber);
    app->add_option("--asymmetry-agg", f.asymmetry_agg, "Combine axis asymmetries by mean or max")
        ->check(CLI::IsMember({"mean", "max"}));
}

void add_uncertainty_flags(CLI::App* app, CommonFlags& f) {
    app->add_option("--threshold", f.threshold, "Predictive-uncertainty reliability threshold")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--epistemic-agg", f.epistemic_agg, "Aggregate per-class variance by mean or sum")
        ->check(CLI::IsMember({"mean", "sum"}));
    app->add_option("--labels", f.labels, "Comma-separated class names (default: 8 ISIC labels)");
}

void emit(const ll::Json& j, const std::string& out) {
    const auto text = ll::canonical_dump(j);
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) ll::fail(ll::ErrorKind::Io, "cannot write '" + out + "'");
    f << text;
    if (!f) ll::fail(ll::ErrorKind::Io, "write error on '" + out + "'");
}

ll::AttentionMap attention_from_dumps(const std::string& acts, const std::string& grads, int class_index, int width,
                                      int height) {
    return ll::run_stage("attention", [&] {
        auto dump = ll::make_conv_dump(ll::load_tensor(acts), ll::load_tensor(grads), class_index);
        return ll::attention_map(dump, width, height);
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lesionlens: ABCDE scoring, attention alignment, concept scores and MC-Dropout uncertainty"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ll::kToolVersion);

    CommonFlags flags;

    // analyze
    ll::AnalysisInputs in;
    std::string image, acts, grads, mc, feats, head, overlay_dir;
    std::vector<std::string> cavs;
    std::optional<int> class_index;
    auto* analyze = app.add_subcommand("analyze", "Run the full explanation pipeline on one image");
    analyze->add_option("--image", image, "Lesion image (binary PGM/PPM)")->required();
    analyze->add_option("--activations", acts, "Final-conv activations [K,h,w] (MNT1)");
    analyze->add_option("--gradients", grads, "Class-score gradients [K,h,w] (MNT1)");
    analyze->add_option("--class-index", class_index, "Class the gradients were taken for");
    analyze->add_option("--mc-samples", mc, "MC-Dropout softmax samples [T,C] (MNT1)");
    analyze->add_option("--features", feats, "Feature vectors [n,F] for concept scoring (MNT1)");
    analyze->add_option("--head", head, "Linear head [C,F+1], bias in last column (MNT1)");
    analyze->add_option("--cav", cavs, "Concept vector file(s) (MNT1 + .json sidecar)");
    analyze->add_option("--out", flags.out, "Report path (default: stdout)");
    analyze->add_option("--overlay-dir", overlay_dir, "Directory for mask/heatmap/overlay images");
    analyze->add_option("--dilation-radius", flags.dilation_radius, "Border band dilation radius")
        ->check(CLI::NonNegativeNumber);
    analyze->add_option("--sensitivity", flags.sensitivity, "Concept sensitivity on probability or logit")
        ->check(CLI::IsMember({"probability", "logit"}));
    add_seed(analyze, flags);
    add_segmentation_flags(analyze, flags);
    add_uncertainty_flags(analyze, flags);

    // abcde
    std::string mask_out;
    auto* abcde = app.add_subcommand("abcde", "Segment the lesion and report ABCDE criteria");
    abcde->add_option("--image", image, "Lesion image (binary PGM/PPM)")->required();
    abcde->add_option("--mask-out", mask_out, "Write the lesion mask as PGM");
    abcde->add_option("--out", flags.out, "JSON path (default: stdout)");
    add_seed(abcde, flags);
    add_segmentation_flags(abcde, flags);

    // gradcam
    int width = 0, height = 0;
    std::string heatmap_out, overlay_out;
    auto* gradcam = app.add_subcommand("gradcam", "Compute a GradCAM++ heatmap from conv dumps");
    gradcam->add_option("--activations", acts, "Final-conv activations [K,h,w] (MNT1)")->required();
    gradcam->add_option("--gradients", grads, "Class-score gradients [K,h,w] (MNT1)")->required();
    gradcam->add_option("--class-index", class_index, "Class the gradients were taken for")->required();
    gradcam->add_option("--image", image, "Source image; sets output size and enables --overlay-out");
    gradcam->add_option("--width", width, "Output width when no image is given");
    gradcam->add_option("--height", height, "Output height when no image is given");
    gradcam->add_option("--heatmap-out", heatmap_out, "Write the normalized heatmap as PGM");
    gradcam->add_option("--overlay-out", overlay_out, "Write the overlay as PPM (needs --image)");
    gradcam->add_option("--out", flags.out, "JSON path (default: stdout)");
    add_seed(gradcam, flags);
    add_segmentation_flags(gradcam, flags);

    // align
    std::string heatmap_in;
    auto* align = app.add_subcommand("align", "Attention alignment with the lesion and its border");
    align->add_option("--image", image, "Lesion image (binary PGM/PPM)")->required();
    align->add_option("--heatmap", heatmap_in, "Attention map as PGM (255 = 1.0)");
    align->add_option("--activations", acts, "Final-conv activations [K,h,w] (MNT1)");
    align->add_option("--gradients", grads, "Class-score gradients [K,h,w] (MNT1)");
    align->add_option("--class-index", class_index, "Class the gradients were taken for");
    align->add_option("--dilation-radius", flags.dilation_radius, "Border band dilation radius")
        ->check(CLI::NonNegativeNumber);
    align->add_option("--out", flags.out, "JSON path (default: stdout)");
    add_seed(align, flags);
    add_segmentation_flags(align, flags);

    // cav-train
    std::string positives, negatives, concept_name, cav_out;
    ll::CavConfig cav_cfg;
    auto* cav_train = app.add_subcommand("cav-train", "Train a concept activation vector");
    cav_train->add_option("--positives", positives, "Concept-positive features [n,F] (MNT1)")->required();
    cav_train->add_option("--negatives", negatives, "Concept-negative features [n,F] (MNT1)")->required();
    cav_train->add_option("--name", concept_name, "Concept name")->required();
    cav_train->add_option("--cav-out", cav_out, "Concept vector path; sidecar goes to <path>.json")->required();
    cav_train->add_option("--lr", cav_cfg.learning_rate, "SGD learning rate")->check(CLI::PositiveNumber);
    cav_train->add_option("--epochs", cav_cfg.epochs, "SGD epochs")->check(CLI::PositiveNumber);
    cav_train->add_option("--l2", cav_cfg.l2, "L2 penalty")->check(CLI::NonNegativeNumber);
    cav_train->add_option("--out", flags.out, "JSON path (default: stdout)");
    add_seed(cav_train, flags);

    // cav-score
    auto* cav_score = app.add_subcommand("cav-score", "Score concept influence on a class");
    cav_score->add_option("--features", feats, "Feature vectors [n,F] (MNT1)")->required();
    cav_score->add_option("--head", head, "Linear head [C,F+1], bias in last column (MNT1)")->required();
    cav_score->add_option("--class-index", class_index, "Class to score")->required();
    cav_score->add_option("--cav", cavs, "Concept vector file(s)")->required();
    cav_score->add_option("--sensitivity", flags.sensitivity, "Sensitivity on probability or logit")
        ->check(CLI::IsMember({"probability", "logit"}));
    cav_score->add_option("--out", flags.out, "JSON path (default: stdout)");

    // uncertainty
    auto* uncertainty = app.add_subcommand("uncertainty", "Decompose MC-Dropout uncertainty");
    uncertainty->add_option("--mc-samples", mc, "Softmax samples [T,C] (MNT1)")->required();
    uncertainty->add_option("--out", flags.out, "JSON path (default: stdout)");
    add_uncertainty_flags(uncertainty, flags);

    // mc-sample
    std::string input_path, samples_out;
    std::size_t passes = 10;
    double dropout = 0.3;
    auto* mc_sample = app.add_subcommand("mc-sample", "Draw MC-Dropout samples from the built-in reference network");
    mc_sample->add_option("--input", input_path, "Input feature vector [F] (MNT1)")->required();
    mc_sample->add_option("--passes", passes, "Stochastic forward passes")->check(CLI::Range(2, 100000));
    mc_sample->add_option("--dropout", dropout, "Hidden-layer dropout rate")->check(CLI::Range(0.0, 0.99));
    mc_sample->add_option("--out", samples_out, "Output sample matrix [T,C] (MNT1)")->required();
    add_seed(mc_sample, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (analyze->parsed()) {
            in.image = image;
            if (!acts.empty()) in.activations = acts;
            if (!grads.empty()) in.gradients = grads;
            in.class_index = class_index;
            if (!mc.empty()) in.mc_samples = mc;
            if (!feats.empty()) in.features = feats;
            if (!head.empty()) in.head = head;
            in.cavs.assign(cavs.begin(), cavs.end());
            if (!overlay_dir.empty()) in.overlay_dir = overlay_dir;
            const auto cfg = ll::run_stage("arguments", [&] { return make_config(flags); });
            const auto report = ll::run_analysis(in, cfg);
            ll::run_stage("output", [&] { emit(report, flags.out); });
        } else if (abcde->parsed()) {
            const auto cfg = ll::run_stage("arguments", [&] { return make_config(flags); });
            const auto img = ll::run_stage("image", [&] { return ll::load_image(image); });
            const auto mask = ll::run_stage("segmentation", [&] { return ll::segment_lesion(img, cfg.segmentation()); });
            const auto rep = ll::run_stage("abcde", [&] { return ll::compute_abcde(img, mask, cfg.abcde()); });
            ll::Json j;
            j["image_path"] = image;
            j["lesion"] = ll::to_json(mask);
            j["abcde"] = ll::to_json(rep);
            j["config"] = cfg.to_json();
            ll::run_stage("output", [&] {
                if (!mask_out.empty()) ll::write_image(ll::mask_to_pgm(mask), mask_out);
                emit(j, flags.out);
            });
        } else if (gradcam->parsed()) {
            const auto cfg = ll::run_stage("arguments", [&] { return make_config(flags); });
            std::optional<ll::RasterImage> img;
            if (!image.empty()) {
                img = ll::run_stage("image", [&] { return ll::load_image(image); });
                width = img->width;
                height = img->height;
            }
            auto dump = ll::run_stage("attention", [&] {
                return ll::make_conv_dump(ll::load_tensor(acts), ll::load_tensor(grads), *class_index);
            });
            if (width == 0 || height == 0) {
                width = dump.width();
                height = dump.height();
            }
            const auto raw = ll::run_stage("attention", [&] { return ll::gradcampp(dump); });
            const auto heat = ll::run_stage("attention", [&] {
                return ll::normalize_map(ll::upsample_bilinear(raw, width, height));
            });
            std::size_t peak = 0;
            for (std::size_t i = 1; i < heat.values.size(); ++i)
                if (heat.values.data[i] > heat.values.data[peak]) peak = i;
            ll::Json j;
            j["class_index"] = *class_index;
            j["channels"] = dump.channels();
            j["feature_height"] = dump.height();
            j["feature_width"] = dump.width();
            j["width"] = width;
            j["height"] = height;
            j["raw_max"] = ll::json_number(*std::max_element(raw.data.begin(), raw.data.end()));
            j["peak_row"] = peak / static_cast<std::size_t>(width);
            j["peak_col"] = peak % static_cast<std::size_t>(width);
            ll::run_stage("output", [&] {
                if (!heatmap_out.empty()) ll::write_image(ll::attention_to_pgm(heat), heatmap_out);
                if (!overlay_out.empty()) {
                    if (!img) ll::fail(ll::ErrorKind::Format, "--overlay-out needs --image");
                    const auto mask = ll::run_stage("segmentation", [&] { return ll::segment_lesion(*img, cfg.segmentation()); });
                    ll::write_image(ll::render_overlay(*img, heat, mask), overlay_out);
                }
                emit(j, flags.out);
            });
        } else if (align->parsed()) {
            const auto cfg = ll::run_stage("arguments", [&] {
                if (heatmap_in.empty() == acts.empty())
                    ll::fail(ll::ErrorKind::Format, "give exactly one of --heatmap or --activations/--gradients");
                if (!acts.empty() && (grads.empty() || !class_index))
                    ll::fail(ll::ErrorKind::Format, "--activations needs --gradients and --class-index");
                return make_config(flags);
            });
            const auto img = ll::run_stage("image", [&] { return ll::load_image(image); });
            const auto mask = ll::run_stage("segmentation", [&] { return ll::segment_lesion(img, cfg.segmentation()); });
            const auto heat = heatmap_in.empty()
                                  ? attention_from_dumps(acts, grads, *class_index, img.width, img.height)
                                  : ll::run_stage("attention", [&] { return ll::attention_from_pgm(ll::load_image(heatmap_in)); });
            ll::Json j;
            ll::run_stage("alignment", [&] {
                j["lesion"] = ll::json_number(ll::lesion_alignment(heat, mask));
                j["border"] = ll::json_number(ll::border_alignment(heat, mask, cfg.dilation_radius));
                j["dilation_radius"] = cfg.dilation_radius;
            });
            ll::run_stage("output", [&] { emit(j, flags.out); });
        } else if (cav_train->parsed()) {
            cav_cfg.seed = ll::derive_seed(resolve_seed(flags.seed), ll::kSgdStage);
            const auto cav = ll::run_stage("cav-train", [&] {
                const auto pos = ll::matrix_from_tensor(ll::load_tensor(positives));
                const auto neg = ll::matrix_from_tensor(ll::load_tensor(negatives));
                return ll::train_cav(pos, neg, concept_name, cav_cfg);
            });
            ll::run_stage("output", [&] {
                ll::save_concept_vector(cav, cav_out);
                emit(ll::cav_sidecar(cav), flags.out);
            });
            if (cav.status != ll::CavStatus::Ok)
                std::cerr << "warning: concept '" << cav.concept_name << "' is degenerate (train accuracy "
                          << cav.train_accuracy << ")\n";
        } else if (cav_score->parsed()) {
            const auto mode = flags.sensitivity == "logit" ? ll::SensitivityMode::Logit : ll::SensitivityMode::Probability;
            const auto j = ll::run_stage("concepts", [&] {
                const auto features = ll::matrix_from_tensor(ll::load_tensor(feats));
                const auto lin = ll::linear_head_from_tensor(ll::load_tensor(head));
                if (*class_index < 0) ll::fail(ll::ErrorKind::DimensionMismatch, "class index must be non-negative");
                const auto cls = static_cast<std::size_t>(*class_index);
                ll::Json out;
                out["class_index"] = cls;
                out["concepts"] = ll::Json::array();
                for (const auto& path : cavs) {
                    const auto cav = ll::load_concept_vector(path);
                    out["concepts"].push_back(ll::to_json(ll::tcav_score(features, lin, cls, cav, mode), cls, cav));
                }
                return out;
            });
            ll::run_stage("output", [&] { emit(j, flags.out); });
        } else if (uncertainty->parsed()) {
            const auto cfg = ll::run_stage("arguments", [&] { return make_config(flags); });
            const auto j = ll::run_stage("uncertainty", [&] {
                const auto m = ll::McSampleMatrix::from_tensor(ll::load_tensor(mc));
                auto block = ll::to_json(ll::decompose(m, cfg.reliability_threshold, cfg.epistemic_aggregation),
                                         cfg.reliability_threshold, cfg.labels);
                block["passes"] = m.passes();
                block["classes"] = m.classes();
                return block;
            });
            ll::run_stage("output", [&] { emit(j, flags.out); });
        } else if (mc_sample->parsed()) {
            const auto seed = ll::derive_seed(resolve_seed(flags.seed), ll::kDropoutStage);
            const auto m = ll::run_stage("mc-sample", [&] {
                const auto x = ll::load_tensor(input_path);
                const std::vector<double> input(x.data.begin(), x.data.end());
                return ll::reference_sampler(input, passes, seed, dropout);
            });
            ll::run_stage("output", [&] {
                std::vector<float> values;
                for (std::size_t t = 0; t < m.passes(); ++t)
                    for (double v : m.row(t)) values.push_back(static_cast<float>(v));
                ll::write_tensor(ll::Tensor({static_cast<std::uint32_t>(m.passes()),
                                             static_cast<std::uint32_t>(m.classes())},
                                            std::move(values)),
                                 samples_out);
            });
        }
    } catch (const ll::StageError& e) {
        std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
        return e.is_degenerate() ? kExitDegenerate : kExitInput;
    } catch (const ll::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_degenerate() ? kExitDegenerate : kExitInput;
    }
    return 0;
}
