#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "akgnet/attr_text.hpp"

namespace akgnet::model {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyText : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int height = 224;
    int width = 224;
    int base_width = 16;   // first encoder width; widths double per block
    int channels = 64;     // c, embedding channels after the contracting path
    int embed_dim = 32;    // d, frozen attribute embedding dimension
    int text_len = 24;     // L, padded token length
    int head_hidden = 64;  // classifier hidden width
    bool use_aica = true;
    bool attr_input = true;  // feed attribute description A (else raw text T)
    std::uint64_t text_encoder_seed = 1234;

    int feat_h() const { return height / 16; }
    int feat_w() const { return width / 16; }
    int feat_hw() const { return feat_h() * feat_w(); }
};

/// Frozen lookup-table text encoder. Vocabulary is built from the taxonomy
/// value words plus the clause glue of the clinical grammar; embeddings are
/// seeded random and never trained. A BERT-backed adapter can satisfy the
/// same d x L contract.
class FrozenTextEncoder {
public:
    FrozenTextEncoder(const attr::AttributeTaxonomy& taxonomy, int embed_dim, int text_len,
                      std::uint64_t seed);

    /// d x L embedding; tokens beyond L are truncated, short inputs padded.
    torch::Tensor encode(const std::string& text) const;
    torch::Tensor encode_batch(const std::vector<std::string>& texts) const;  // B x d x L

    const torch::Tensor& table() const { return table_; }
    int vocab_size() const { return static_cast<int>(vocab_.size()); }

private:
    std::vector<std::string> vocab_;
    std::map<std::string, int> index_;
    int pad_id_ = 0;
    int unk_id_ = 0;
    int text_len_;
    torch::Tensor table_;  // V x d, requires_grad == false
};

/// Everything the forward pass produces, kept for loss assembly and tests.
struct PredictionBundle {
    torch::Tensor x_i;         // B x c x h x w
    torch::Tensor x_a;         // B x d x L
    torch::Tensor x_pro_a;     // B x c x h x w
    torch::Tensor attention;   // B x hw x hw, rows sum to 1 (undefined when AICA off)
    torch::Tensor x_ai;        // B x c x h x w
    torch::Tensor mask_logits; // B x 1 x H x W, pre-sigmoid
    torch::Tensor x_mi;        // B x c x h x w
    std::vector<torch::Tensor> attr_logits;  // M tensors, B x a_m
};

class AkgNetImpl : public torch::nn::Module {
public:
    AkgNetImpl(ModelConfig config, const attr::AttributeTaxonomy& taxonomy);

    torch::Tensor encode_image(const torch::Tensor& images);  // B x 1 x H x W -> B x c x h x w
    torch::Tensor encode_attributes(const std::vector<std::string>& texts) const;  // B x d x L
    torch::Tensor project_attributes(const torch::Tensor& x_a);  // B x c x h x w
    std::pair<torch::Tensor, torch::Tensor> aica_fuse(const torch::Tensor& x_i,
                                                      const torch::Tensor& x_pro_a);
    torch::Tensor decode_mask(const torch::Tensor& x_ai);  // B x 1 x H x W logits
    torch::Tensor masked_features(const torch::Tensor& x_i, const torch::Tensor& mask_logits,
                                  double alpha) const;
    std::vector<torch::Tensor> classify_attributes(const torch::Tensor& x_mi);

    PredictionBundle forward(const torch::Tensor& images, const std::vector<std::string>& texts,
                             double alpha);

    /// Parameters updated by the optimizer. Excludes the frozen text
    /// encoder by construction; excludes the AICA transforms when AICA is
    /// disabled.
    std::vector<torch::Tensor> trainable_parameters();

    const ModelConfig& config() const { return config_; }
    const FrozenTextEncoder& text_encoder() const { return text_encoder_; }
    const attr::AttributeTaxonomy& taxonomy() const { return taxonomy_; }

private:
    ModelConfig config_;
    attr::AttributeTaxonomy taxonomy_;
    FrozenTextEncoder text_encoder_;

    torch::nn::Sequential encoder_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
    torch::nn::Conv1d proj_{nullptr};
    torch::nn::Conv2d phi_{nullptr}, theta_{nullptr}, varphi_{nullptr};
    torch::Tensor gamma_;  // L x hw
    torch::Tensor beta_;   // scalar
    std::vector<torch::nn::Sequential> heads_;
};
TORCH_MODULE(AkgNet);

/// Self-describing checkpoint: model parameters, the taxonomy snapshot and
/// the full model configuration in one archive file.
void save_checkpoint(const std::filesystem::path& file, AkgNet& net);
AkgNet load_checkpoint(const std::filesystem::path& file);

}  // namespace akgnet::model
