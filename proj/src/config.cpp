#include "akgnet/config.hpp"

#include <fstream>
#include <sstream>

namespace akgnet::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::invalid_argument("not a boolean: " + v);
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    // training
    if (key == "lr") train.lr = std::stod(value);
    else if (key == "batch_size") train.batch_size = std::stoi(value);
    else if (key == "epochs") train.epochs = std::stoi(value);
    else if (key == "warmup_epochs") train.warmup_epochs = std::stoi(value);
    else if (key == "seed") train.seed = std::stoull(value);
    else if (key == "eval_every") train.eval_every = std::stoi(value);
    else if (key == "grad_clip") train.grad_clip = std::stod(value);
    else if (key == "augment") train.augment = parse_bool(value);
    else if (key == "holdout_fraction") train.holdout_fraction = std::stod(value);
    // loss weights and thresholds
    else if (key == "lambda_c") train.weights.lambda_c = std::stod(value);
    else if (key == "lambda_a") train.weights.lambda_a = std::stod(value);
    else if (key == "lambda_st") train.weights.lambda_st = std::stod(value);
    else if (key == "alpha") train.weights.alpha = std::stod(value);
    else if (key == "delta") train.weights.delta = std::stod(value);
    else if (key == "tau") train.weights.tau = std::stod(value);
    // model
    else if (key == "height") { model.height = std::stoi(value); gen.height = model.height; }
    else if (key == "width") { model.width = std::stoi(value); gen.width = model.width; }
    else if (key == "base_width") model.base_width = std::stoi(value);
    else if (key == "channels") model.channels = std::stoi(value);
    else if (key == "embed_dim") model.embed_dim = std::stoi(value);
    else if (key == "text_len") model.text_len = std::stoi(value);
    else if (key == "head_hidden") model.head_hidden = std::stoi(value);
    else if (key == "use_aica") model.use_aica = parse_bool(value);
    else if (key == "attr_input") model.attr_input = parse_bool(value);
    else if (key == "text_encoder_seed") model.text_encoder_seed = std::stoull(value);
    // generator
    else if (key == "max_blobs") gen.max_blobs = std::stoi(value);
    else if (key == "noise_sigma") gen.noise_sigma = std::stod(value);
    else if (key == "background") gen.background = std::stod(value);
    else if (key == "lung_intensity") gen.lung_intensity = std::stod(value);
    else if (key == "infect_min") gen.infect_min = std::stod(value);
    else if (key == "infect_max") gen.infect_max = std::stod(value);
    else if (key == "distractor_min") gen.distractor_min = std::stod(value);
    else if (key == "distractor_max") gen.distractor_max = std::stod(value);
    else if (key == "distractor_rate") gen.distractor_rate = std::stod(value);
    else if (key == "coarse_jitter") gen.coarse_jitter = std::stod(value);
    else if (key == "infect_miss_rate") gen.infect_miss_rate = std::stod(value);
    else if (key == "distractor_keep_rate") gen.distractor_keep_rate = std::stod(value);
    else throw std::invalid_argument("unknown config key: " + key);
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read config file: " + file.string());
    RunConfig c;
    std::string line;
    while (std::getline(is, line)) {
        const auto l = trim(line);
        if (l.empty() || l[0] == '#') continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("bad config line (expected key = value): " + l);
        c.apply(trim(l.substr(0, eq)), trim(l.substr(eq + 1)));
    }
    return c;
}

std::string RunConfig::to_string() const {
    std::ostringstream os;
    os << "lr = " << train.lr << "\nbatch_size = " << train.batch_size
       << "\nepochs = " << train.epochs << "\nwarmup_epochs = " << train.warmup_epochs
       << "\nseed = " << train.seed << "\neval_every = " << train.eval_every
       << "\ngrad_clip = " << train.grad_clip << "\naugment = " << train.augment
       << "\nholdout_fraction = " << train.holdout_fraction
       << "\nlambda_c = " << train.weights.lambda_c << "\nlambda_a = " << train.weights.lambda_a
       << "\nlambda_st = " << train.weights.lambda_st << "\nalpha = " << train.weights.alpha
       << "\ndelta = " << train.weights.delta << "\ntau = " << train.weights.tau
       << "\nheight = " << model.height << "\nwidth = " << model.width
       << "\nbase_width = " << model.base_width << "\nchannels = " << model.channels
       << "\nembed_dim = " << model.embed_dim << "\ntext_len = " << model.text_len
       << "\nhead_hidden = " << model.head_hidden << "\nuse_aica = " << model.use_aica
       << "\nattr_input = " << model.attr_input
       << "\ntext_encoder_seed = " << model.text_encoder_seed
       << "\nmax_blobs = " << gen.max_blobs << "\nnoise_sigma = " << gen.noise_sigma
       << "\nbackground = " << gen.background << "\nlung_intensity = " << gen.lung_intensity
       << "\ninfect_min = " << gen.infect_min << "\ninfect_max = " << gen.infect_max
       << "\ndistractor_min = " << gen.distractor_min
       << "\ndistractor_max = " << gen.distractor_max
       << "\ndistractor_rate = " << gen.distractor_rate
       << "\ncoarse_jitter = " << gen.coarse_jitter
       << "\ninfect_miss_rate = " << gen.infect_miss_rate
       << "\ndistractor_keep_rate = " << gen.distractor_keep_rate << "\n";
    return os.str();
}

void RunConfig::save(const std::filesystem::path& file) const {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write config file: " + file.string());
    os << to_string();
}

}  // namespace akgnet::config
