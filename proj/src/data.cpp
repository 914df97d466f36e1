#include "akgnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace akgnet::data {

namespace {

// ---------------------------------------------------------------------
// deterministic RNG helpers (std distributions are not portable)
// ---------------------------------------------------------------------
double urand(std::mt19937& rng) {
    return static_cast<double>(rng()) / 4294967296.0;
}
double urand(std::mt19937& rng, double lo, double hi) {
    return lo + (hi - lo) * urand(rng);
}
int irand(std::mt19937& rng, int n) {
    return static_cast<int>(urand(rng) * n) % n;
}
double nrand(std::mt19937& rng) {
    const double u1 = std::max(urand(rng), 1e-12);
    const double u2 = urand(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// ---------------------------------------------------------------------
// geometry
// ---------------------------------------------------------------------
struct LungGeom {
    double cx, cy, rx, ry;
    double band_top(int band) const { return cy - ry + band * (2.0 * ry / 3.0); }
    double band_bottom(int band) const { return band_top(band + 1); }
};

LungGeom lung_geometry(int side, int h, int w) {
    // side 0 = left (image-left), side 1 = right
    return {(side == 0 ? 0.30 : 0.70) * w, 0.52 * h, 0.16 * w, 0.35 * h};
}

struct Blob {
    double cx, cy, rx, ry;
    double amp;
};

// band sets per position category name
std::set<int> band_set(const std::string& value) {
    if (value == "all") return {0, 1, 2};
    if (value == "upper") return {0};
    if (value == "middle") return {1};
    if (value == "lower") return {2};
    if (value == "upper middle") return {0, 1};
    if (value == "middle lower") return {1, 2};
    if (value == "no") return {};
    throw std::invalid_argument("unknown position value: " + value);
}

std::string band_set_name(const std::set<int>& bands) {
    static const std::map<std::set<int>, std::string> names = {
        {{0, 1, 2}, "all"},         {{0}, "upper"},
        {{1}, "middle"},            {{2}, "lower"},
        {{0, 1}, "upper middle"},   {{1, 2}, "middle lower"},
        {{}, "no"},
    };
    const auto it = names.find(bands);
    if (it == names.end()) throw std::runtime_error("band occupancy not representable");
    return it->second;
}

bool blobs_clear(const Blob& a, const Blob& b) {
    const double dx = a.cx - b.cx, dy = a.cy - b.cy;
    const double sx = a.rx + b.rx + 3.0, sy = a.ry + b.ry + 3.0;
    return (dx * dx) / (sx * sx) + (dy * dy) / (sy * sy) > 1.0;
}

// 3-tap separable blur, applied in place
void blur3(std::vector<float>& img, int h, int w) {
    std::vector<float> tmp(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            tmp[y * w + x] = 0.25f * img[y * w + xm] + 0.5f * img[y * w + x] +
                             0.25f * img[y * w + xp];
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            img[y * w + x] = 0.25f * tmp[ym * w + x] + 0.5f * tmp[y * w + x] +
                             0.25f * tmp[yp * w + x];
        }
}

// connected-component labelling (8-connectivity); returns label map and sizes
std::pair<std::vector<int>, std::vector<int>> label_components(const std::vector<uint8_t>& mask,
                                                               int h, int w) {
    std::vector<int> labels(mask.size(), -1);
    std::vector<int> sizes;
    for (int start = 0; start < h * w; ++start) {
        if (!mask[start] || labels[start] >= 0) continue;
        const int lab = static_cast<int>(sizes.size());
        sizes.push_back(0);
        std::deque<int> queue{start};
        labels[start] = lab;
        while (!queue.empty()) {
            const int p = queue.front();
            queue.pop_front();
            ++sizes[lab];
            const int y = p / w, x = p % w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int q = ny * w + nx;
                    if (mask[q] && labels[q] < 0) {
                        labels[q] = lab;
                        queue.push_back(q);
                    }
                }
        }
    }
    return {std::move(labels), std::move(sizes)};
}

std::vector<float> tensor_to_vec(const torch::Tensor& t) {
    auto c = t.reshape(-1).contiguous().to(torch::kFloat);
    return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
}

void check_image_shape(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 1)
        throw ShapeMismatch("expected image of shape 1xHxW, got " +
                            std::string(torch::str(image.sizes())));
}

std::string trim_str(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

// ---------------------------------------------------------------------
// coarse mask generation
// ---------------------------------------------------------------------

torch::Tensor BaselineSaliency::score(const torch::Tensor& image) const {
    check_image_shape(image);
    const int h = static_cast<int>(image.size(1));
    const int w = static_cast<int>(image.size(2));
    auto smooth = tensor_to_vec(image);
    blur3(smooth, h, w);

    // lung template: two largest bright components, slightly dilated
    std::vector<uint8_t> bright(smooth.size());
    for (size_t i = 0; i < smooth.size(); ++i)
        bright[i] = smooth[i] > params_.lung_threshold;
    auto [labels, sizes] = label_components(bright, h, w);
    std::vector<int> order(sizes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return sizes[a] > sizes[b]; });
    std::set<int> keep(order.begin(), order.begin() + std::min<size_t>(2, order.size()));

    std::vector<uint8_t> tmpl(smooth.size(), 0);
    for (size_t i = 0; i < tmpl.size(); ++i)
        tmpl[i] = labels[i] >= 0 && keep.count(labels[i]);
    for (int iter = 0; iter < 2; ++iter) {  // 3x3 dilation, 2 rounds
        std::vector<uint8_t> next = tmpl;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (tmpl[y * w + x]) continue;
                for (int dy = -1; dy <= 1 && !next[y * w + x]; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny >= 0 && ny < h && nx >= 0 && nx < w && tmpl[ny * w + nx]) {
                            next[y * w + x] = 1;
                            break;
                        }
                    }
            }
        tmpl = std::move(next);
    }

    auto out = torch::empty({1, h, w}, torch::kFloat);
    auto acc = out.accessor<float, 3>();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            acc[0][y][x] = tmpl[i]
                               ? static_cast<float>(params_.gain * (smooth[i] - params_.blob_threshold))
                               : static_cast<float>(params_.outside_logit);
        }
    return out;
}

torch::Tensor coarse_mask(const torch::Tensor& image, const SaliencyBackend& backend, double tau) {
    check_image_shape(image);
    if (tau <= 0.0 || tau >= 1.0)
        throw std::invalid_argument("tau must be in (0,1)");
    auto logits = backend.score(image);
    if (!logits.sizes().equals(image.sizes()))
        throw ShapeMismatch("saliency output shape " + std::string(torch::str(logits.sizes())) +
                            " does not match image shape " + std::string(torch::str(image.sizes())));
    return (torch::sigmoid(logits) > tau).to(torch::kFloat);
}

// ---------------------------------------------------------------------
// generator config
// ---------------------------------------------------------------------

GeneratorConfig GeneratorConfig::load(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read generator config: " + file.string());
    GeneratorConfig c;
    std::string line;
    std::map<std::string, double*> fields = {
        {"noise_sigma", &c.noise_sigma},       {"background", &c.background},
        {"lung_intensity", &c.lung_intensity}, {"infect_min", &c.infect_min},
        {"infect_max", &c.infect_max},         {"distractor_min", &c.distractor_min},
        {"distractor_max", &c.distractor_max}, {"distractor_rate", &c.distractor_rate},
        {"coarse_jitter", &c.coarse_jitter},
        {"infect_miss_rate", &c.infect_miss_rate},
        {"distractor_keep_rate", &c.distractor_keep_rate},
    };
    while (std::getline(is, line)) {
        auto l = trim_str(line);
        if (l.empty() || l[0] == '#') continue;
        const auto eq = l.find('=');
        if (eq == std::string::npos) throw ConfigError("bad generator config line: " + l);
        const std::string key = trim_str(l.substr(0, eq));
        const std::string val = trim_str(l.substr(eq + 1));
        if (key == "height") c.height = std::stoi(val);
        else if (key == "width") c.width = std::stoi(val);
        else if (key == "max_blobs") c.max_blobs = std::stoi(val);
        else if (fields.count(key)) *fields[key] = std::stod(val);
        else throw ConfigError("unknown generator config key: " + key);
    }
    return c;
}

void GeneratorConfig::save(const std::filesystem::path& file) const {
    std::ofstream os(file);
    os << "height = " << height << "\nwidth = " << width << "\nmax_blobs = " << max_blobs
       << "\nnoise_sigma = " << noise_sigma << "\nbackground = " << background
       << "\nlung_intensity = " << lung_intensity << "\ninfect_min = " << infect_min
       << "\ninfect_max = " << infect_max << "\ndistractor_min = " << distractor_min
       << "\ndistractor_max = " << distractor_max << "\ndistractor_rate = " << distractor_rate
       << "\ncoarse_jitter = " << coarse_jitter
       << "\ninfect_miss_rate = " << infect_miss_rate
       << "\ndistractor_keep_rate = " << distractor_keep_rate << "\n";
}

// ---------------------------------------------------------------------
// synthetic generation
// ---------------------------------------------------------------------

namespace {

// place one blob whose vertical extent covers exactly bands [b0..b1]
bool place_blob(std::mt19937& rng, const LungGeom& lung, int b0, int b1,
                const std::vector<Blob>& existing, double amp, Blob& out) {
    const double band_h = 2.0 * lung.ry / 3.0;
    const double y0 = lung.band_top(b0);
    const double y1 = lung.band_bottom(b1);
    const double span = y1 - y0;
    const double margin = std::max(1.5, 0.06 * span);
    for (int attempt = 0; attempt < 60; ++attempt) {
        Blob b;
        b.amp = amp;
        if (b0 == b1) {
            b.ry = span * urand(rng, 0.26, 0.40);
            b.cy = urand(rng, y0 + margin + b.ry, y1 - margin - b.ry);
        } else {
            b.ry = 0.5 * span * urand(rng, 0.82, 0.92);
            const double slack = 0.5 * span - b.ry - margin;
            b.cy = 0.5 * (y0 + y1) + urand(rng, -slack, slack);
            // must reach at least 20% into the end bands
            const double depth = 0.2 * band_h;
            if (b.cy - b.ry > y0 + band_h - depth) continue;
            if (b.cy + b.ry < y1 - band_h + depth) continue;
        }
        const double rel = (b.cy - lung.cy) / lung.ry;
        const double half_w = lung.rx * std::sqrt(std::max(0.0, 1.0 - rel * rel));
        b.rx = urand(rng, 0.22, 0.42) * lung.rx;
        if (half_w - b.rx < 3.0) continue;
        b.cx = lung.cx + urand(rng, -1.0, 1.0) * (half_w - b.rx - 2.0);
        bool ok = true;
        for (const auto& e : existing)
            if (!blobs_clear(b, e)) { ok = false; break; }
        if (ok) {
            out = b;
            return true;
        }
    }
    return false;
}

struct SamplePlan {
    attr::AttributeLabels labels;
    // per blob: side, first band, last band
    std::vector<std::array<int, 3>> blobs;
};

// expand a per-side position category into a blob list covering its bands
bool plan_side(std::mt19937& rng, int side, const std::set<int>& bands, int n_blobs,
               std::vector<std::array<int, 3>>& out) {
    if (bands.empty()) return n_blobs == 0;
    const int b0 = *bands.begin();
    const int b1 = *bands.rbegin();
    const int nb = static_cast<int>(bands.size());
    if (n_blobs < 1) return false;
    if (n_blobs == 1) {
        out.push_back({side, b0, b1});  // one spanning blob
        return true;
    }
    if (n_blobs >= nb) {
        // one blob per band, extras in random bands of the set
        std::vector<int> band_list(bands.begin(), bands.end());
        for (int b : band_list) out.push_back({side, b, b});
        for (int i = nb; i < n_blobs; ++i) {
            const int b = band_list[irand(rng, nb)];
            out.push_back({side, b, b});
        }
        return true;
    }
    // n_blobs < nb (only possible for nb=3, n=2): one spanning pair + one single
    if (nb == 3 && n_blobs == 2) {
        if (urand(rng) < 0.5) {
            out.push_back({side, 0, 1});
            out.push_back({side, 2, 2});
        } else {
            out.push_back({side, 0, 0});
            out.push_back({side, 1, 2});
        }
        return true;
    }
    return false;
}

SamplePlan sample_plan(std::mt19937& rng, const attr::AttributeTaxonomy& tax) {
    while (true) {
        SamplePlan plan;
        const int lateral = urand(rng) < 0.45 ? 0 : 1;  // unilateral / bilateral
        std::array<bool, 2> active = {true, true};
        if (lateral == 0) active[irand(rng, 2)] = false;

        std::array<std::set<int>, 2> bands;
        std::array<int, 2> counts = {0, 0};
        int total = 0;
        for (int side = 0; side < 2; ++side) {
            if (!active[side]) continue;
            const int cat = irand(rng, 6);  // any non-"no" position value
            bands[side] = band_set(tax.value_name(2 + side, cat));
            const int nb = static_cast<int>(bands[side].size());
            counts[side] = std::max(1, nb - (nb == 3 && urand(rng) < 0.4 ? irand(rng, 3) :
                                              (nb > 1 && urand(rng) < 0.45 ? nb - 1 : 0)));
            total += counts[side];
        }
        // occasionally add extra blobs inside already-covered bands
        for (int side = 0; side < 2 && total < 6; ++side) {
            if (!active[side]) continue;
            while (total < 6 && counts[side] < 2 * static_cast<int>(bands[side].size()) &&
                   urand(rng) < 0.3) {
                ++counts[side];
                ++total;
            }
        }
        if (total < 1 || total > 6) continue;

        bool ok = true;
        for (int side = 0; side < 2 && ok; ++side)
            if (active[side]) ok = plan_side(rng, side, bands[side], counts[side], plan.blobs);
        if (!ok) continue;

        plan.labels.categories[0] = lateral;
        plan.labels.categories[1] = total - 1;
        for (int side = 0; side < 2; ++side)
            plan.labels.categories[2 + side] = tax.value_index(2 + side, band_set_name(bands[side]));
        return plan;
    }
}

SamplePlan forced_plan(std::mt19937& rng, const attr::AttributeTaxonomy& tax,
                       const attr::AttributeLabels& labels, int max_blobs) {
    const int total = labels.categories[1] + 1;
    if (total > max_blobs)
        throw ConfigError("requested blob count " + std::to_string(total) + " exceeds " +
                          std::to_string(max_blobs));
    std::array<std::set<int>, 2> bands = {band_set(tax.value_name(2, labels.categories[2])),
                                          band_set(tax.value_name(3, labels.categories[3]))};
    const int n_sides = static_cast<int>(!bands[0].empty()) + static_cast<int>(!bands[1].empty());
    if (n_sides == 0 || total < n_sides)
        throw ConfigError("labels are not realizable as a blob layout");
    for (int attempt = 0; attempt < 200; ++attempt) {
        // random split of `total` over active sides
        std::array<int, 2> counts = {0, 0};
        if (n_sides == 1) {
            counts[bands[0].empty() ? 1 : 0] = total;
        } else {
            counts[0] = 1 + irand(rng, total - 1);
            counts[1] = total - counts[0];
        }
        SamplePlan plan;
        plan.labels = labels;
        bool ok = true;
        for (int side = 0; side < 2 && ok; ++side)
            if (!bands[side].empty()) ok = plan_side(rng, side, bands[side], counts[side], plan.blobs);
        if (ok) return plan;
    }
    throw ConfigError("labels are not realizable as a blob layout");
}

ImageTextSample render_sample(std::mt19937& rng, const SamplePlan& plan,
                              const GeneratorConfig& cfg, const attr::AttributeParser& parser,
                              std::vector<Blob>* out_blobs = nullptr,
                              size_t* out_n_infect = nullptr) {
    const int h = cfg.height, w = cfg.width;

    // place infection blobs
    std::vector<Blob> blobs;
    for (const auto& [side, b0, b1] : plan.blobs) {
        const auto lung = lung_geometry(side, h, w);
        Blob b;
        if (!place_blob(rng, lung, b0, b1, blobs, urand(rng, cfg.infect_min, cfg.infect_max), b))
            return {};  // caller retries with a fresh plan
        blobs.push_back(b);
    }
    const size_t n_infect = blobs.size();

    // distractor artifacts in bands the text does not mention
    std::array<std::set<int>, 2> active_bands = {
        band_set(parser.taxonomy().value_name(2, plan.labels.categories[2])),
        band_set(parser.taxonomy().value_name(3, plan.labels.categories[3]))};
    std::vector<std::pair<int, int>> free_slots;
    for (int side = 0; side < 2; ++side)
        for (int band = 0; band < 3; ++band)
            if (!active_bands[side].count(band)) free_slots.emplace_back(side, band);
    int n_distract = 0;
    if (urand(rng) < cfg.distractor_rate) ++n_distract;
    if (urand(rng) < 0.5 * cfg.distractor_rate) ++n_distract;
    for (int i = 0; i < n_distract && !free_slots.empty(); ++i) {
        const auto [side, band] = free_slots[irand(rng, static_cast<int>(free_slots.size()))];
        Blob b;
        if (place_blob(rng, lung_geometry(side, h, w), band, band, blobs,
                       urand(rng, cfg.distractor_min, cfg.distractor_max), b))
            blobs.push_back(b);
    }

    // render image and ground truth
    std::vector<float> img(static_cast<size_t>(h) * w, static_cast<float>(cfg.background));
    std::vector<uint8_t> gt(img.size(), 0);
    for (int side = 0; side < 2; ++side) {
        const auto lung = lung_geometry(side, h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double ex = (x - lung.cx) / lung.rx, ey = (y - lung.cy) / lung.ry;
                const double e = ex * ex + ey * ey;
                if (e < 1.0)
                    img[y * w + x] = static_cast<float>(cfg.lung_intensity * (1.0 - 0.2 * e));
            }
    }
    for (size_t i = 0; i < blobs.size(); ++i) {
        const Blob& b = blobs[i];
        const int y0 = std::max(0, static_cast<int>(b.cy - b.ry - 1));
        const int y1 = std::min(h - 1, static_cast<int>(b.cy + b.ry + 1));
        const int x0 = std::max(0, static_cast<int>(b.cx - b.rx - 1));
        const int x1 = std::min(w - 1, static_cast<int>(b.cx + b.rx + 1));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double ex = (x - b.cx) / b.rx, ey = (y - b.cy) / b.ry;
                const double e = ex * ex + ey * ey;
                if (e < 1.0) {
                    img[y * w + x] =
                        std::max(img[y * w + x], static_cast<float>(b.amp * (1.0 - 0.3 * e)));
                    if (i < n_infect) gt[y * w + x] = 1;
                }
            }
    }
    blur3(img, h, w);
    for (auto& v : img)
        v = std::clamp(v + static_cast<float>(cfg.noise_sigma * nrand(rng)), 0.0f, 1.0f);

    if (out_blobs) *out_blobs = blobs;
    if (out_n_infect) *out_n_infect = n_infect;

    ImageTextSample s;
    s.attr_labels = plan.labels;
    s.raw_text = parser.render_text(plan.labels);
    s.attr_description = parser.to_attribute_description(plan.labels);
    s.image = torch::from_blob(img.data(), {1, h, w}, torch::kFloat).clone();
    auto gt_t = torch::empty({1, h, w}, torch::kFloat);
    auto acc = gt_t.accessor<float, 3>();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) acc[0][y][x] = gt[y * w + x];
    s.gt_mask = gt_t;
    return s;
}

// Blob-level reliability of the coarse oracle: infection blobs are
// occasionally missed, look-alike artifacts are only sometimes picked up.
// Dropped blobs are erased from the coarse mask over their (blur-dilated)
// footprint. Inert at the default rates; consumes no randomness then.
void apply_blob_oracle(torch::Tensor& coarse, const std::vector<Blob>& blobs, size_t n_infect,
                       const GeneratorConfig& cfg, std::mt19937& rng) {
    if (cfg.infect_miss_rate <= 0.0 && cfg.distractor_keep_rate >= 1.0) return;
    const int h = static_cast<int>(coarse.size(1));
    const int w = static_cast<int>(coarse.size(2));
    auto acc = coarse.accessor<float, 3>();
    for (size_t i = 0; i < blobs.size(); ++i) {
        const double drop_p =
            i < n_infect ? cfg.infect_miss_rate : 1.0 - cfg.distractor_keep_rate;
        if (urand(rng) >= drop_p) continue;
        const Blob& b = blobs[i];
        const double rx = b.rx + 1.5, ry = b.ry + 1.5;
        const int y0 = std::max(0, static_cast<int>(b.cy - ry - 1));
        const int y1 = std::min(h - 1, static_cast<int>(b.cy + ry + 1));
        const int x0 = std::max(0, static_cast<int>(b.cx - rx - 1));
        const int x1 = std::min(w - 1, static_cast<int>(b.cx + rx + 1));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double ex = (x - b.cx) / rx, ey = (y - b.cy) / ry;
                if (ex * ex + ey * ey < 1.0) acc[0][y][x] = 0.0f;
            }
    }
}

torch::Tensor jittered_coarse(const torch::Tensor& image, const SaliencyBackend& sal,
                              double tau, double jitter, std::mt19937& rng) {
    if (jitter <= 0.0) return coarse_mask(image, sal, tau);
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("tau must be in (0,1)");
    auto logits = sal.score(image) + urand(rng, -jitter, jitter);
    return (torch::sigmoid(logits) > tau).to(torch::kFloat);
}

std::mt19937 sample_rng(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + (index + 1) * 0xBF58476D1CE4E5B9ull;
    z ^= z >> 31;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 29;
    return std::mt19937(static_cast<std::uint32_t>(z ^ (z >> 32)));
}

}  // namespace

ImageTextSample synth_one(std::uint64_t seed, const GeneratorConfig& cfg,
                          const attr::AttributeParser& parser,
                          std::optional<attr::AttributeLabels> forced_labels,
                          const SaliencyBackend* backend, double tau) {
    if (cfg.max_blobs > 6) throw ConfigError("max_blobs cannot exceed 6");
    BaselineSaliency baseline;
    const SaliencyBackend& sal = backend ? *backend : baseline;
    auto rng = sample_rng(seed, 0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const SamplePlan plan = forced_labels
                                    ? forced_plan(rng, parser.taxonomy(), *forced_labels, cfg.max_blobs)
                                    : sample_plan(rng, parser.taxonomy());
        std::vector<Blob> blobs;
        size_t n_infect = 0;
        ImageTextSample s = render_sample(rng, plan, cfg, parser, &blobs, &n_infect);
        if (!s.image.defined()) continue;  // crowded layout, retry
        // reject renderings whose ground truth disagrees with the labels
        if (labels_from_mask(s.gt_mask, parser.taxonomy()) != plan.labels) continue;
        s.id = "s" + std::to_string(seed);
        s.coarse_mask = jittered_coarse(s.image, sal, tau, cfg.coarse_jitter, rng);
        apply_blob_oracle(s.coarse_mask, blobs, n_infect, cfg, rng);
        return s;
    }
    throw ConfigError("could not realize a sample for the requested configuration");
}

std::vector<ImageTextSample> synth_generate(std::uint64_t seed, int n, const GeneratorConfig& cfg,
                                            const attr::AttributeParser& parser,
                                            const SaliencyBackend* backend, double tau) {
    if (n < 1) throw ConfigError("n must be >= 1");
    std::vector<ImageTextSample> out(n);
    BaselineSaliency baseline;
    const SaliencyBackend& sal = backend ? *backend : baseline;
    at::parallel_for(0, n, 1, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            auto rng = sample_rng(seed, static_cast<std::uint64_t>(i));
            for (int attempt = 0;; ++attempt) {
                if (attempt >= 100)
                    throw ConfigError("could not realize sample " + std::to_string(i));
                const SamplePlan plan = sample_plan(rng, parser.taxonomy());
                std::vector<Blob> blobs;
                size_t n_infect = 0;
                ImageTextSample s = render_sample(rng, plan, cfg, parser, &blobs, &n_infect);
                if (!s.image.defined()) continue;
                if (labels_from_mask(s.gt_mask, parser.taxonomy()) != plan.labels) continue;
                char buf[16];
                std::snprintf(buf, sizeof(buf), "s%05d", static_cast<int>(i));
                s.id = buf;
                s.coarse_mask = jittered_coarse(s.image, sal, tau, cfg.coarse_jitter, rng);
                apply_blob_oracle(s.coarse_mask, blobs, n_infect, cfg, rng);
                out[i] = std::move(s);
                break;
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------
// mask oracles
// ---------------------------------------------------------------------

int count_components(const torch::Tensor& mask) {
    check_image_shape(mask);
    const int h = static_cast<int>(mask.size(1));
    const int w = static_cast<int>(mask.size(2));
    const auto v = tensor_to_vec(mask);
    std::vector<uint8_t> bin(v.size());
    for (size_t i = 0; i < v.size(); ++i) bin[i] = v[i] > 0.5f;
    return static_cast<int>(label_components(bin, h, w).second.size());
}

attr::AttributeLabels labels_from_mask(const torch::Tensor& gt_mask,
                                       const attr::AttributeTaxonomy& taxonomy) {
    check_image_shape(gt_mask);
    const int h = static_cast<int>(gt_mask.size(1));
    const int w = static_cast<int>(gt_mask.size(2));
    const auto v = tensor_to_vec(gt_mask);
    std::vector<uint8_t> bin(v.size());
    for (size_t i = 0; i < v.size(); ++i) bin[i] = v[i] > 0.5f;
    auto [labels, sizes] = label_components(bin, h, w);
    const int n_comp = static_cast<int>(sizes.size());
    if (n_comp < 1 || n_comp > 6)
        throw std::runtime_error("component count " + std::to_string(n_comp) +
                                 " outside the taxonomy range");

    // per component and side, count pixels per band
    std::array<std::set<int>, 2> occupied;
    std::vector<std::array<int, 3>> comp_band_px(n_comp, {0, 0, 0});
    std::vector<int> comp_side(n_comp, -1);
    std::array<LungGeom, 2> lungs = {lung_geometry(0, h, w), lung_geometry(1, h, w)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int lab = labels[y * w + x];
            if (lab < 0) continue;
            comp_side[lab] = x < w / 2 ? 0 : 1;
            const LungGeom& lung = lungs[comp_side[lab]];
            const double band_h = 2.0 * lung.ry / 3.0;
            const int band = std::clamp(
                static_cast<int>((y - (lung.cy - lung.ry)) / band_h), 0, 2);
            ++comp_band_px[lab][band];
        }
    for (int c = 0; c < n_comp; ++c) {
        const int thresh = std::max(3, (comp_band_px[c][0] + comp_band_px[c][1] +
                                        comp_band_px[c][2]) / 20);
        for (int band = 0; band < 3; ++band)
            if (comp_band_px[c][band] >= thresh) occupied[comp_side[c]].insert(band);
    }

    attr::AttributeLabels out;
    const bool left = !occupied[0].empty(), right = !occupied[1].empty();
    out.categories[0] = left && right ? 1 : 0;
    out.categories[1] = n_comp - 1;
    out.categories[2] = taxonomy.value_index(2, band_set_name(occupied[0]));
    out.categories[3] = taxonomy.value_index(3, band_set_name(occupied[1]));
    return out;
}

// ---------------------------------------------------------------------
// PNG / dataset IO
// ---------------------------------------------------------------------

void save_png(const std::filesystem::path& file, const torch::Tensor& image_1hw) {
    check_image_shape(image_1hw);
    auto t = (image_1hw.squeeze(0).clamp(0, 1) * 255.0f + 0.5f)
                 .to(torch::kUInt8)
                 .contiguous();
    cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1,
              t.data_ptr<uint8_t>());
    if (!cv::imwrite(file.string(), m))
        throw std::runtime_error("cannot write PNG: " + file.string());
}

torch::Tensor load_png(const std::filesystem::path& file, int height, int width) {
    cv::Mat m = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw MissingFile("cannot read PNG: " + file.string());
    if (height > 0 && (m.rows != height || m.cols != width))
        cv::resize(m, m, cv::Size(width, height), 0, 0, cv::INTER_AREA);
    auto t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
    return t.to(torch::kFloat).unsqueeze(0) / 255.0f;
}

void write_dataset(const std::vector<ImageTextSample>& samples,
                   const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");
    bool any_gt = false;
    for (const auto& s : samples) any_gt |= s.has_gt();
    if (any_gt) fs::create_directories(out_dir / "masks");
    std::ofstream tsv(out_dir / "texts.tsv");
    for (const auto& s : samples) {
        save_png(out_dir / "images" / (s.id + ".png"), s.image);
        if (s.has_gt()) save_png(out_dir / "masks" / (s.id + ".png"), s.gt_mask);
        tsv << s.id << '\t' << s.raw_text << '\n';
    }
}

std::vector<ImageTextSample> ingest_qata(const std::filesystem::path& image_dir,
                                         const std::filesystem::path& text_tsv,
                                         const attr::AttributeParser& parser,
                                         const SaliencyBackend& backend, double tau,
                                         int height, int width,
                                         std::optional<std::filesystem::path> mask_dir) {
    namespace fs = std::filesystem;
    std::map<std::string, std::string> texts;
    if (fs::exists(text_tsv)) {
        std::ifstream is(text_tsv);
        std::string line;
        while (std::getline(is, line)) {
            if (trim_str(line).empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error("text TSV row is not two-column: " + line);
            texts[trim_str(line.substr(0, tab))] = trim_str(line.substr(tab + 1));
        }
    }

    std::vector<fs::path> files;
    if (fs::exists(image_dir))
        for (const auto& e : fs::directory_iterator(image_dir))
            if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<ImageTextSample> out;
    for (const auto& file : files) {
        const std::string id = file.stem().string();
        ImageTextSample s;
        s.id = id;
        s.image = load_png(file, height, width);
        const auto it = texts.find(id);
        if (it == texts.end()) throw MissingFile("sample " + id + ": no row in " + text_tsv.string());
        s.raw_text = it->second;
        try {
            s.attr_labels = parser.parse_description(s.raw_text);
        } catch (const attr::ParseError& e) {
            throw attr::ParseError("sample " + id + ": " + e.what());
        }
        s.attr_description = parser.to_attribute_description(s.attr_labels);
        s.coarse_mask = coarse_mask(s.image, backend, tau);
        if (mask_dir) {
            const auto mask_file = *mask_dir / (id + ".png");
            if (!fs::exists(mask_file))
                throw MissingFile("sample " + id + ": no mask " + mask_file.string());
            s.gt_mask = (load_png(mask_file, height, width) > 0.5).to(torch::kFloat);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------

namespace {

torch::Tensor rotate_tensor(const torch::Tensor& t, double angle_deg, bool nearest) {
    auto src = t.squeeze(0).contiguous();
    cv::Mat m(static_cast<int>(src.size(0)), static_cast<int>(src.size(1)), CV_32FC1,
              src.data_ptr<float>());
    cv::Mat rot = cv::getRotationMatrix2D(cv::Point2f(m.cols / 2.0f, m.rows / 2.0f),
                                          angle_deg, 1.0);
    cv::Mat dst;
    cv::warpAffine(m, dst, rot, m.size(), nearest ? cv::INTER_NEAREST : cv::INTER_LINEAR,
                   cv::BORDER_REPLICATE);
    return torch::from_blob(dst.data, {dst.rows, dst.cols}, torch::kFloat)
        .clone()
        .unsqueeze(0);
}

int flip_vertical_category(const attr::AttributeTaxonomy& tax, int attr, int cat) {
    static const std::map<std::string, std::string> remap = {
        {"upper", "lower"},        {"lower", "upper"},
        {"upper middle", "middle lower"}, {"middle lower", "upper middle"},
        {"all", "all"},            {"middle", "middle"},
        {"no", "no"}};
    return tax.value_index(attr, remap.at(tax.value_name(attr, cat)));
}

}  // namespace

ImageTextSample augment_sample(const ImageTextSample& sample, std::mt19937& rng,
                               const attr::AttributeParser& parser) {
    ImageTextSample s = sample;
    const double angle = urand(rng, -15.0, 15.0);
    s.image = rotate_tensor(s.image, angle, false);
    s.coarse_mask = rotate_tensor(s.coarse_mask, angle, true);
    if (s.has_gt()) s.gt_mask = rotate_tensor(s.gt_mask, angle, true);

    if (urand(rng) < 0.5) {  // horizontal flip, swap left/right attributes
        s.image = s.image.flip({2});
        s.coarse_mask = s.coarse_mask.flip({2});
        if (s.has_gt()) s.gt_mask = s.gt_mask.flip({2});
        std::swap(s.attr_labels.categories[2], s.attr_labels.categories[3]);
    }
    if (urand(rng) < 0.25) {  // vertical flip, remap upper/lower semantics
        s.image = s.image.flip({1});
        s.coarse_mask = s.coarse_mask.flip({1});
        if (s.has_gt()) s.gt_mask = s.gt_mask.flip({1});
        const auto& tax = parser.taxonomy();
        s.attr_labels.categories[2] = flip_vertical_category(tax, 2, s.attr_labels.categories[2]);
        s.attr_labels.categories[3] = flip_vertical_category(tax, 3, s.attr_labels.categories[3]);
    }
    s.raw_text = parser.render_text(s.attr_labels);
    s.attr_description = parser.to_attribute_description(s.attr_labels);
    return s;
}

}  // namespace akgnet::data
