#include "akgnet/model.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

namespace akgnet::model {

namespace F = torch::nn::functional;
using json = nlohmann::json;

// ---------------------------------------------------------------------
// frozen text encoder
// ---------------------------------------------------------------------

FrozenTextEncoder::FrozenTextEncoder(const attr::AttributeTaxonomy& taxonomy, int embed_dim,
                                     int text_len, std::uint64_t seed)
    : text_len_(text_len) {
    std::set<std::string> words;
    for (const auto& a : taxonomy.attributes)
        for (const auto& v : a.values)
            for (const auto& w : attr::tokenize(v)) words.insert(w);
    for (const char* w : {"pulmonary", "infection", "infected", "area", "areas", "lung",
                          "lungs", "and", "of", "the", ",", "."})
        words.insert(w);
    vocab_ = {"<pad>", "<unk>"};
    vocab_.insert(vocab_.end(), words.begin(), words.end());
    pad_id_ = 0;
    unk_id_ = 1;
    for (size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);

    auto gen = at::detail::createCPUGenerator(seed);
    table_ = torch::randn({static_cast<long>(vocab_.size()), embed_dim}, gen);
    table_.set_requires_grad(false);
}

torch::Tensor FrozenTextEncoder::encode(const std::string& text) const {
    const auto tokens = attr::tokenize(text);
    if (tokens.empty()) throw EmptyText("cannot encode empty text");
    std::vector<long> ids(text_len_, pad_id_);
    for (int i = 0; i < text_len_ && i < static_cast<int>(tokens.size()); ++i) {
        const auto it = index_.find(tokens[i]);
        ids[i] = it == index_.end() ? unk_id_ : it->second;
    }
    auto idx = torch::tensor(ids, torch::kLong);
    return table_.index_select(0, idx).t().contiguous();  // d x L
}

torch::Tensor FrozenTextEncoder::encode_batch(const std::vector<std::string>& texts) const {
    std::vector<torch::Tensor> embs;
    embs.reserve(texts.size());
    for (const auto& t : texts) embs.push_back(encode(t));
    return torch::stack(embs);
}

// ---------------------------------------------------------------------
// network
// ---------------------------------------------------------------------

namespace {

torch::nn::Sequential make_encoder(int base, int channels) {
    using namespace torch::nn;
    Sequential enc;
    int in = 1;
    const int widths[4] = {base, 2 * base, 4 * base, channels};
    for (int i = 0; i < 4; ++i) {
        const int out = widths[i];
        enc->push_back(Conv2d(Conv2dOptions(in, out, 3).padding(1)));
        enc->push_back(BatchNorm2d(out));
        enc->push_back(ReLU());
        enc->push_back(Conv2d(Conv2dOptions(out, out, 3).padding(1)));
        enc->push_back(BatchNorm2d(out));
        enc->push_back(ReLU());
        enc->push_back(MaxPool2d(MaxPool2dOptions(2)));
        in = out;
    }
    return enc;
}

torch::nn::Sequential make_decoder(int channels, int base) {
    using namespace torch::nn;
    Sequential dec;
    int in = channels;
    const int widths[4] = {2 * base, base, base, base};
    for (int i = 0; i < 4; ++i) {
        const int out = widths[i];
        dec->push_back(Upsample(UpsampleOptions().scale_factor(std::vector<double>{2, 2})
                                    .mode(torch::kNearest)));
        dec->push_back(Conv2d(Conv2dOptions(in, out, 3).padding(1)));
        dec->push_back(BatchNorm2d(out));
        dec->push_back(ReLU());
        in = out;
    }
    // the head uses a fixed output gain (keeps logits responsive under
    // small learning rates) and a negative bias prior so sparse foreground
    // classes do not spend the early steps fighting the majority class
    constexpr double kLogitGain = 8.0;
    auto head = Conv2d(Conv2dOptions(in, 1, 1));
    {
        torch::NoGradGuard ng;
        head->bias.fill_(-4.0 / kLogitGain);
    }
    dec->push_back(head);
    dec->push_back(Functional([](torch::Tensor x) { return x * kLogitGain; }));
    return dec;
}

}  // namespace

AkgNetImpl::AkgNetImpl(ModelConfig config, const attr::AttributeTaxonomy& taxonomy)
    : config_(config),
      taxonomy_(taxonomy),
      text_encoder_(taxonomy, config.embed_dim, config.text_len, config.text_encoder_seed) {
    taxonomy_.validate();
    if (config_.height % 16 != 0 || config_.width % 16 != 0)
        throw std::invalid_argument("image size must be divisible by 16");

    encoder_ = register_module("encoder", make_encoder(config_.base_width, config_.channels));
    decoder_ = register_module("decoder", make_decoder(config_.channels, config_.base_width));
    proj_ = register_module(
        "proj", torch::nn::Conv1d(torch::nn::Conv1dOptions(config_.embed_dim, config_.channels, 3)
                                      .padding(1)));
    phi_ = register_module("phi", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                      config_.channels, config_.channels, 1)));
    theta_ = register_module("theta", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                          config_.channels, config_.channels, 1)));
    varphi_ = register_module("varphi", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                            config_.channels, config_.channels, 1)));
    // beta starts at 0 so AICA begins as the identity; gamma starts small
    gamma_ = register_parameter("gamma",
                                torch::randn({config_.text_len, config_.feat_hw()}) * 0.02);
    beta_ = register_parameter("beta", torch::zeros({}));
    for (int m = 0; m < attr::kNumAttributes; ++m) {
        torch::nn::Sequential head(
            torch::nn::Linear(config_.channels, config_.head_hidden), torch::nn::ReLU(),
            torch::nn::Linear(config_.head_hidden, taxonomy_.num_values(m)));
        heads_.push_back(register_module("head_" + std::to_string(m + 1), head));
    }
    register_buffer("text_table", text_encoder_.table());
}

torch::Tensor AkgNetImpl::encode_image(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 1 || images.size(2) != config_.height ||
        images.size(3) != config_.width)
        throw ShapeMismatch("expected images of shape Bx1x" + std::to_string(config_.height) +
                            "x" + std::to_string(config_.width) + ", got " +
                            std::string(torch::str(images.sizes())));
    return encoder_->forward(images);
}

torch::Tensor AkgNetImpl::encode_attributes(const std::vector<std::string>& texts) const {
    return text_encoder_.encode_batch(texts);
}

torch::Tensor AkgNetImpl::project_attributes(const torch::Tensor& x_a) {
    if (x_a.dim() != 3 || x_a.size(1) != config_.embed_dim || x_a.size(2) != config_.text_len)
        throw ShapeMismatch("expected attribute embedding of shape Bx" +
                            std::to_string(config_.embed_dim) + "x" +
                            std::to_string(config_.text_len));
    const auto b = x_a.size(0);
    auto projected = proj_->forward(x_a);  // B x c x L
    auto mixed = projected.matmul(gamma_); // B x c x hw
    return mixed.reshape({b, config_.channels, config_.feat_h(), config_.feat_w()});
}

std::pair<torch::Tensor, torch::Tensor> AkgNetImpl::aica_fuse(const torch::Tensor& x_i,
                                                              const torch::Tensor& x_pro_a) {
    if (!x_i.sizes().equals(x_pro_a.sizes()))
        throw ShapeMismatch("x_I and x_proA shapes differ");
    const auto b = x_i.size(0);
    const auto hw = config_.feat_hw();
    auto q = phi_->forward(x_i).reshape({b, config_.channels, hw});        // c x hw
    auto k = theta_->forward(x_pro_a).reshape({b, config_.channels, hw});  // c x hw
    auto scores = q.transpose(1, 2).bmm(k);                                // hw x hw
    auto attention = torch::softmax(scores, /*dim=*/2);                    // rows sum to 1
    auto v = varphi_->forward(x_i).reshape({b, config_.channels, hw});
    // S^T mixing in c-by-hw layout: out_j = sum_k S[k,j] v_k
    auto fused = beta_ * v.bmm(attention).reshape(x_i.sizes()) + x_i;
    return {attention, fused};
}

torch::Tensor AkgNetImpl::decode_mask(const torch::Tensor& x_ai) {
    if (x_ai.dim() != 4 || x_ai.size(1) != config_.channels ||
        x_ai.size(2) != config_.feat_h() || x_ai.size(3) != config_.feat_w())
        throw ShapeMismatch("expected features of shape Bx" + std::to_string(config_.channels) +
                            "x" + std::to_string(config_.feat_h()) + "x" +
                            std::to_string(config_.feat_w()));
    return decoder_->forward(x_ai);
}

torch::Tensor AkgNetImpl::masked_features(const torch::Tensor& x_i,
                                          const torch::Tensor& mask_logits, double alpha) const {
    if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in (0,1)");
    // the indicator gate is a detached constant; no gradient flows through it
    auto gate = (torch::sigmoid(mask_logits.detach()) > alpha).to(torch::kFloat);
    auto down = F::interpolate(gate, F::InterpolateFuncOptions()
                                         .size(std::vector<int64_t>{config_.feat_h(),
                                                                    config_.feat_w()})
                                         .mode(torch::kNearest));
    return x_i * down;
}

std::vector<torch::Tensor> AkgNetImpl::classify_attributes(const torch::Tensor& x_mi) {
    auto pooled = F::adaptive_avg_pool2d(x_mi, F::AdaptiveAvgPool2dFuncOptions(1))
                      .flatten(1);  // B x c
    std::vector<torch::Tensor> logits;
    logits.reserve(heads_.size());
    for (auto& head : heads_) logits.push_back(head->forward(pooled));
    return logits;
}

PredictionBundle AkgNetImpl::forward(const torch::Tensor& images,
                                     const std::vector<std::string>& texts, double alpha) {
    PredictionBundle out;
    out.x_i = encode_image(images);
    if (config_.use_aica) {
        out.x_a = encode_attributes(texts);
        out.x_pro_a = project_attributes(out.x_a);
        std::tie(out.attention, out.x_ai) = aica_fuse(out.x_i, out.x_pro_a);
    } else {
        out.x_ai = out.x_i;
    }
    out.mask_logits = decode_mask(out.x_ai);
    out.x_mi = masked_features(out.x_i, out.mask_logits, alpha);
    out.attr_logits = classify_attributes(out.x_mi);
    return out;
}

std::vector<torch::Tensor> AkgNetImpl::trainable_parameters() {
    static const std::vector<std::string> aica_prefixes = {"gamma", "beta", "phi.", "theta.",
                                                           "varphi.", "proj."};
    std::vector<torch::Tensor> params;
    for (const auto& p : named_parameters()) {
        if (!config_.use_aica) {
            const auto& name = p.key();
            bool is_aica = name == "gamma" || name == "beta";
            for (const auto& prefix : aica_prefixes)
                if (name.rfind(prefix, 0) == 0) is_aica = true;
            if (is_aica) continue;
        }
        params.push_back(p.value());
    }
    return params;
}

// ---------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------

namespace {

json config_to_json(const ModelConfig& c, const attr::AttributeTaxonomy& tax) {
    json j;
    j["height"] = c.height;
    j["width"] = c.width;
    j["base_width"] = c.base_width;
    j["channels"] = c.channels;
    j["embed_dim"] = c.embed_dim;
    j["text_len"] = c.text_len;
    j["head_hidden"] = c.head_hidden;
    j["use_aica"] = c.use_aica;
    j["attr_input"] = c.attr_input;
    j["text_encoder_seed"] = c.text_encoder_seed;
    json attrs = json::array();
    for (const auto& a : tax.attributes)
        attrs.push_back({{"id", a.id}, {"description", a.description}, {"values", a.values}});
    j["taxonomy"] = attrs;
    return j;
}

std::pair<ModelConfig, attr::AttributeTaxonomy> config_from_json(const json& j) {
    ModelConfig c;
    c.height = j.at("height");
    c.width = j.at("width");
    c.base_width = j.at("base_width");
    c.channels = j.at("channels");
    c.embed_dim = j.at("embed_dim");
    c.text_len = j.at("text_len");
    c.head_hidden = j.at("head_hidden");
    c.use_aica = j.at("use_aica");
    c.attr_input = j.at("attr_input");
    c.text_encoder_seed = j.at("text_encoder_seed");
    attr::AttributeTaxonomy tax;
    for (const auto& a : j.at("taxonomy"))
        tax.attributes.push_back(
            {a.at("id"), a.at("description"), a.at("values").get<std::vector<std::string>>()});
    return {c, tax};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, AkgNet& net) {
    torch::serialize::OutputArchive archive;
    archive.write("akgnet_config",
                  config_to_json(net->config(), net->taxonomy()).dump());
    torch::serialize::OutputArchive params;
    net->save(params);
    archive.write("model", params);
    archive.save_to(file.string());
}

AkgNet load_checkpoint(const std::filesystem::path& file) {
    torch::serialize::InputArchive archive;
    archive.load_from(file.string());
    c10::IValue cfg_str;
    archive.read("akgnet_config", cfg_str);
    auto [config, taxonomy] = config_from_json(json::parse(cfg_str.toStringRef()));
    AkgNet net(config, taxonomy);
    torch::serialize::InputArchive params;
    archive.read("model", params);
    net->load(params);  // shape agreement enforced by the archive loader
    return net;
}

}  // namespace akgnet::model
