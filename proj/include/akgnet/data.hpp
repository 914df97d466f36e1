#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "akgnet/attr_text.hpp"

namespace akgnet::data {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One training record. `gt_mask` may be undefined; it is carried for
/// evaluation only and never enters a loss.
struct ImageTextSample {
    std::string id;
    torch::Tensor image;        // 1xHxW float32 in [0,1]
    std::string raw_text;       // clinical sentence T
    attr::AttributeDescription attr_description;  // compact sentence A
    attr::AttributeLabels attr_labels;            // {C_m}
    torch::Tensor coarse_mask;  // 1xHxW float32 in {0,1}
    torch::Tensor gt_mask;      // optional 1xHxW float32 in {0,1}

    bool has_gt() const { return gt_mask.defined(); }
};

/// Unsupervised saliency scorer: unbounded logits, one per pixel.
class SaliencyBackend {
public:
    virtual ~SaliencyBackend() = default;
    virtual torch::Tensor score(const torch::Tensor& image) const = 0;
};

/// Training-free heuristic backend: smoothed intensity against a fixed
/// brightness threshold, restricted to a lung template built from the two
/// largest bright components. Pixels outside the template get a large
/// negative logit.
class BaselineSaliency : public SaliencyBackend {
public:
    struct Params {
        double gain = 25.0;
        double blob_threshold = 0.55;
        double lung_threshold = 0.32;
        double outside_logit = -6.0;
    };
    explicit BaselineSaliency() = default;
    explicit BaselineSaliency(Params p) : params_(p) {}
    torch::Tensor score(const torch::Tensor& image) const override;

private:
    Params params_;
};

/// Binary coarse mask: 1[sigmoid(backend.score(I)) > tau].
torch::Tensor coarse_mask(const torch::Tensor& image, const SaliencyBackend& backend,
                          double tau = 0.5);

struct GeneratorConfig {
    int height = 224;
    int width = 224;
    int max_blobs = 6;
    double noise_sigma = 0.03;
    // intensity ranges (pre-blur peak amplitudes)
    double background = 0.12;
    double lung_intensity = 0.42;
    double infect_min = 0.62;
    double infect_max = 0.92;
    // bright non-infection artifacts placed in unmentioned zones
    double distractor_min = 0.48;
    double distractor_max = 0.66;
    double distractor_rate = 0.7;  // expected distractors per image (0..2 placed)
    // half-range of a per-sample uniform offset added to the saliency
    // logits before thresholding; models an imperfect saliency oracle
    // whose errors are independent of the image content
    double coarse_jitter = 0.0;
    // blob-level reliability of the coarse oracle: probability that an
    // infection blob is missed, and that a distractor blob picked up by
    // the saliency stays in the coarse mask
    double infect_miss_rate = 0.0;
    double distractor_keep_rate = 1.0;

    static GeneratorConfig load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;
};

/// Deterministic synthetic image-text-mask triples with known ground truth.
/// Each sample: dark thorax, two bright lung fields, 1..6 elliptical
/// infected blobs in the zones named by the sampled attribute labels,
/// raw_text rendered through the attr_text grammar, coarse mask from
/// `backend` (BaselineSaliency by default).
std::vector<ImageTextSample> synth_generate(std::uint64_t seed, int n,
                                            const GeneratorConfig& config,
                                            const attr::AttributeParser& parser,
                                            const SaliencyBackend* backend = nullptr,
                                            double tau = 0.5);

/// Single sample with forced labels (testing hook).
ImageTextSample synth_one(std::uint64_t seed, const GeneratorConfig& config,
                          const attr::AttributeParser& parser,
                          std::optional<attr::AttributeLabels> forced_labels = std::nullopt,
                          const SaliencyBackend* backend = nullptr, double tau = 0.5);

/// Number of 8-connected components of a binary 1xHxW mask.
int count_components(const torch::Tensor& mask);

/// Re-derive attribute labels from a ground-truth mask by component
/// counting and per-side band occupancy (verification oracle).
attr::AttributeLabels labels_from_mask(const torch::Tensor& gt_mask,
                                       const attr::AttributeTaxonomy& taxonomy);

/// Dataset directory layout: images/<id>.png, masks/<id>.png (gt, when
/// present), texts.tsv (id <TAB> raw_text).
void write_dataset(const std::vector<ImageTextSample>& samples,
                   const std::filesystem::path& out_dir);

/// Ingest a QaTa-style dataset: grayscale PNGs resized to config
/// height/width, raw text from a two-column TSV, coarse masks from the
/// backend. gt masks attached only when `mask_dir` is given.
std::vector<ImageTextSample> ingest_qata(const std::filesystem::path& image_dir,
                                         const std::filesystem::path& text_tsv,
                                         const attr::AttributeParser& parser,
                                         const SaliencyBackend& backend, double tau,
                                         int height, int width,
                                         std::optional<std::filesystem::path> mask_dir = std::nullopt);

/// Joint image/mask augmentation: rotation in [-15, +15] degrees, and
/// flips. A horizontal flip swaps attributes 3 and 4; a vertical flip
/// remaps upper<->lower position categories. Text fields are re-rendered
/// from the transformed labels.
ImageTextSample augment_sample(const ImageTextSample& sample, std::mt19937& rng,
                               const attr::AttributeParser& parser);

// PNG helpers (8-bit grayscale)
void save_png(const std::filesystem::path& file, const torch::Tensor& image_1hw);
torch::Tensor load_png(const std::filesystem::path& file, int height = -1, int width = -1);

}  // namespace akgnet::data
