#include "sanet/network.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace sanet {

// ------------------------------------------------------------- config ---

namespace {

constexpr std::array<std::pair<Ablation, const char*>, 8> kAblations{{
    {Ablation::B, "B"},     {Ablation::ME0, "ME0"}, {Ablation::ME, "ME"},   {Ablation::SA1, "SA1"},
    {Ablation::SA2, "SA2"}, {Ablation::PF1, "PF1"}, {Ablation::PF2, "PF2"}, {Ablation::FULL, "FULL"},
}};

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != value.size() || value.front() == '-')
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
    return std::size_t(v);
}

bool at_least(Ablation a, Ablation floor) { return static_cast<int>(a) >= static_cast<int>(floor); }

}  // namespace

std::string to_string(Ablation a) {
    for (auto [k, name] : kAblations)
        if (k == a) return name;
    return "?";
}

Ablation parse_ablation(const std::string& s) {
    for (auto [k, name] : kAblations)
        if (s == name) return k;
    throw ConfigError("unknown ablation '" + s + "' (expected B, ME0, ME, SA1, SA2, PF1, PF2 or FULL)");
}

std::string to_string(UpsampleMode m) { return m == UpsampleMode::nearest ? "nearest" : "bilinear"; }

UpsampleMode parse_upsample(const std::string& s) {
    if (s == "nearest") return UpsampleMode::nearest;
    if (s == "bilinear") return UpsampleMode::bilinear;
    throw ConfigError("unknown upsample mode '" + s + "'");
}

void ModelConfig::validate() const {
    if (slices < 1) throw ConfigError("slices must be >= 1");
    if (input_size < 32 || input_size % 32 != 0)
        throw ConfigError("input_size must be a positive multiple of 32, got " + std::to_string(input_size));
    if (base_channels < 1 || rfb_channels < 1 || decoder_channels < 1 || se_reduction < 1)
        throw ConfigError("channel widths and se_reduction must be >= 1");
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "slices=" << slices << "\n"
       << "base_channels=" << base_channels << "\n"
       << "rfb_channels=" << rfb_channels << "\n"
       << "decoder_channels=" << decoder_channels << "\n"
       << "input_size=" << input_size << "\n"
       << "se_reduction=" << se_reduction << "\n"
       << "ablation=" << to_string(ablation) << "\n"
       << "upsample=" << to_string(upsample) << "\n";
    return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "slices") slices = parse_count(key, value);
    else if (key == "base_channels") base_channels = parse_count(key, value);
    else if (key == "rfb_channels") rfb_channels = parse_count(key, value);
    else if (key == "decoder_channels") decoder_channels = parse_count(key, value);
    else if (key == "input_size") input_size = parse_count(key, value);
    else if (key == "se_reduction") se_reduction = parse_count(key, value);
    else if (key == "ablation") ablation = parse_ablation(value);
    else if (key == "upsample") upsample = parse_upsample(value);
    else return false;
    return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
        if (!cfg.set(line.substr(0, eq), line.substr(eq + 1)))
            throw ConfigError("unknown model config key: " + line.substr(0, eq));
    }
    cfg.validate();
    return cfg;
}

// ------------------------------------------------------------ encoders ---

Encoder2dParams Encoder2dParams::create(ParamBuilder b, std::size_t in_channels, std::size_t base) {
    Encoder2dParams p;
    const Conv2dGeometry down{2, 1, 1};
    p.stem1 = Conv2dLayer::create(b.child("stem1"), in_channels, base, 3, down, false);
    p.stem1_norm = AffineLayer::create(b.child("stem1.norm"), base);
    p.stem2 = Conv2dLayer::create(b.child("stem2"), base, base, 3, down, false);
    p.stem2_norm = AffineLayer::create(b.child("stem2.norm"), base);
    std::size_t c = base;
    for (std::size_t i = 0; i < 3; ++i) {
        ParamBuilder s = b.child("stage" + std::to_string(i + 2));
        auto& st = p.stages[i];
        st.conv1 = Conv2dLayer::create(s.child("conv1"), c, 2 * c, 3, down, false);
        st.norm1 = AffineLayer::create(s.child("norm1"), 2 * c);
        st.conv2 = Conv2dLayer::create(s.child("conv2"), 2 * c, 2 * c, 3, {1, 1, 1}, false);
        st.norm2 = AffineLayer::create(s.child("norm2"), 2 * c);
        st.shortcut = Conv2dLayer::create(s.child("shortcut"), c, 2 * c, 1, {2, 0, 1}, false);
        st.norm_shortcut = AffineLayer::create(s.child("shortcut.norm"), 2 * c);
        c *= 2;
    }
    return p;
}

std::array<std::size_t, 4> temporal_extents(std::size_t slices) {
    std::array<std::size_t, 4> t{slices, 0, 0, 0};
    for (std::size_t i = 1; i < 4; ++i) {
        const std::size_t kt = std::min<std::size_t>(2, t[i - 1]);
        t[i] = (t[i - 1] - kt) / kt + 1;
    }
    return t;
}

Encoder3dParams Encoder3dParams::create(ParamBuilder b, std::size_t slices, std::size_t base) {
    Encoder3dParams p;
    const Conv3dGeometry stem{1, 2, 0, 1};
    p.stem1 = Conv3dLayer::create(b.child("stem1"), 3, base, 1, 3, stem);
    p.stem1_norm = AffineLayer::create(b.child("stem1.norm"), base);
    p.stem2 = Conv3dLayer::create(b.child("stem2"), base, base, 1, 3, stem);
    p.stem2_norm = AffineLayer::create(b.child("stem2.norm"), base);
    const auto t = temporal_extents(slices);
    std::size_t c = base;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t kt = std::min<std::size_t>(2, t[i]);
        ParamBuilder s = b.child("stage" + std::to_string(i + 2));
        auto& st = p.stages[i];
        st.conv1 = Conv3dLayer::create(s.child("conv1"), c, 2 * c, kt, 3, {kt, 2, 0, 1});
        st.norm1 = AffineLayer::create(s.child("norm1"), 2 * c);
        st.conv2 = Conv3dLayer::create(s.child("conv2"), 2 * c, 2 * c, 1, 3, {1, 1, 0, 1});
        st.norm2 = AffineLayer::create(s.child("norm2"), 2 * c);
        st.shortcut = Conv3dLayer::create(s.child("shortcut"), c, 2 * c, kt, 1, {kt, 2, 0, 0});
        st.norm_shortcut = AffineLayer::create(s.child("shortcut.norm"), 2 * c);
        c *= 2;
    }
    return p;
}

namespace {

void require_input_size(const char* op, const Tensor& x, std::size_t h_axis, const ModelConfig& cfg) {
    const auto& d = x.shape().dims();
    if (d.size() <= h_axis + 1 || d[h_axis] != cfg.input_size || d[h_axis + 1] != cfg.input_size)
        throw DimensionError(std::string(op) + ": expected spatial size " + std::to_string(cfg.input_size) +
                             "x" + std::to_string(cfg.input_size) + ", got " + x.shape().str());
    if (cfg.input_size % 32 != 0)
        throw ConfigError(std::string(op) + ": input size must be divisible by 32");
}

}  // namespace

FeaturePyramid encode_2d(const Tensor& x, const Encoder2dParams& p, const ModelConfig& cfg, Branch branch) {
    require_input_size("encode_2d", x, 1, cfg);
    FeaturePyramid out;
    Tensor h = relu(p.stem1_norm(p.stem1(x)));
    h = relu(p.stem2_norm(p.stem2(h)));
    out.levels[0] = {h, 1, branch};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& st = p.stages[i];
        Tensor y = relu(st.norm1(st.conv1(h)));
        y = st.norm2(st.conv2(y));
        h = relu(add(y, st.norm_shortcut(st.shortcut(h))));
        out.levels[i + 1] = {h, int(i) + 2, branch};
    }
    return out;
}

FeaturePyramid encode_aif(const Tensor& img, const Encoder2dParams& p, const ModelConfig& cfg) {
    if (img.shape().rank() != 3 || img.dim(0) != 3)
        throw DimensionError("encode_aif: expected 3 x H x W image, got " + img.shape().str());
    return encode_2d(img, p, cfg, Branch::aif2d);
}

FeaturePyramid encode_fs(const Tensor& stack, const Encoder3dParams& p, const ModelConfig& cfg) {
    if (stack.shape().rank() != 4 || stack.dim(1) != 3)
        throw DimensionError("encode_fs: expected T x 3 x H x W stack, got " + stack.shape().str());
    if (stack.dim(0) != cfg.slices)
        throw DimensionError("encode_fs: expected " + std::to_string(cfg.slices) + " slices, got " +
                             std::to_string(stack.dim(0)));
    require_input_size("encode_fs", stack, 2, cfg);

    FeaturePyramid out;
    Tensor h = swap_leading_axes(stack);  // 3 x T x H x W
    h = relu(p.stem1_norm(p.stem1(h)));
    h = relu(p.stem2_norm(p.stem2(h)));
    out.levels[0] = {temporal_mean(h), 1, Branch::fs3d};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& st = p.stages[i];
        Tensor y = relu(st.norm1(st.conv1(h)));
        y = st.norm2(st.conv2(y));
        h = relu(add(y, st.norm_shortcut(st.shortcut(h))));
        out.levels[i + 1] = {temporal_mean(h), int(i) + 2, Branch::fs3d};
    }
    return out;
}

// --------------------------------------------------------------- heads ---

namespace {

void require_pair(const char* op, const FeatureMap& a, const FeatureMap& b) {
    if (a.tensor.shape() != b.tensor.shape())
        throw DimensionError(std::string(op) + ": branch maps differ, " + a.tensor.shape().str() + " vs " +
                             b.tensor.shape().str());
}

std::size_t doublings_to(std::size_t from, std::size_t to, const char* op) {
    std::size_t n = 0;
    while (from < to) {
        from *= 2;
        ++n;
    }
    if (from != to)
        throw DimensionError(std::string(op) + ": feature size does not reach the input size by doubling");
    return n;
}

}  // namespace

PredictionHeadParams PredictionHeadParams::create(ParamBuilder b, std::size_t branch_channels) {
    return {Conv2dLayer::same(b.child("conv"), 2 * branch_channels, 1, 1)};
}

Tensor prediction_head(const FeatureMap& f2d, const FeatureMap& f3d, const PredictionHeadParams& p,
                       const ModelConfig& cfg) {
    require_pair("prediction_head", f2d, f3d);
    const std::size_t n = doublings_to(f2d.height(), cfg.input_size, "prediction_head");
    Tensor y = sigmoid(p.conv(concat_channels({f2d.tensor, f3d.tensor})));
    for (std::size_t i = 0; i < n; ++i) y = upsample2x(y, cfg.upsample);
    return y;
}

DeconvDecoderParams DeconvDecoderParams::create(ParamBuilder b, std::size_t in_channels, std::size_t width,
                                                std::size_t stages) {
    DeconvDecoderParams p;
    std::size_t c = in_channels;
    for (std::size_t i = 0; i < stages; ++i) {
        ParamBuilder s = b.child("stage" + std::to_string(i + 1));
        p.stages.push_back({DeconvLayer::create(s.child("deconv"), c, width),
                            Conv2dLayer::same(s.child("conv"), width, width, 3)});
        c = width;
    }
    p.out = Conv2dLayer::same(b.child("out"), c, 1, 1);
    return p;
}

Tensor deconv_decode(const Tensor& x, const DeconvDecoderParams& p) {
    Tensor h = x;
    for (const auto& st : p.stages) h = relu(st.conv(st.up(h)));
    return sigmoid(p.out(h));
}

Tensor pf_forward(const FeatureMap& f2d, const FeatureMap& f3d, const DeconvDecoderParams& p,
                  const ModelConfig& cfg) {
    require_pair("pf_forward", f2d, f3d);
    if (f2d.height() << p.stages.size() != cfg.input_size)
        throw DimensionError("pf_forward: level-2 inputs of " + f2d.tensor.shape().str() +
                             " do not decode to the input size");
    return deconv_decode(concat_channels({f2d.tensor, f3d.tensor}), p);
}

Tensor progressive_head(const FeatureMap& f2d, const FeatureMap& f3d, const DeconvDecoderParams& p,
                        const ModelConfig& cfg) {
    require_pair("progressive_head", f2d, f3d);
    if (doublings_to(f2d.height(), cfg.input_size, "progressive_head") != p.stages.size())
        throw DimensionError("progressive_head: stage count does not match the feature stride");
    return deconv_decode(concat_channels({f2d.tensor, f3d.tensor}), p);
}

// --------------------------------------------------------------- model ---

SaNet::SaNet(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    ParamBuilder root(store_, rng);
    const Ablation a = cfg_.ablation;
    const std::size_t base = cfg_.base_channels, cr = cfg_.rfb_channels;

    aif_encoder_ = Encoder2dParams::create(root.child("enc_aif"), 3, base);
    if (a == Ablation::B)
        fs_encoder_2d_ = Encoder2dParams::create(root.child("enc_fs2d"), 3 * cfg_.slices, base);
    else
        fs_encoder_ = Encoder3dParams::create(root.child("enc_fs"), cfg_.slices, base);

    if (at_least(a, Ablation::ME)) {
        const bool multi_level = at_least(a, Ablation::SA1);
        for (int level = 2; level <= (multi_level ? 4 : 2); ++level) {
            const std::size_t in = base << (level - 1);
            const auto tag = std::to_string(level);
            rfb_aif_[level - 2] = RfbParams::create(root.child("rfb_aif" + tag), in, cr);
            rfb_fs_[level - 2] = RfbParams::create(root.child("rfb_fs" + tag), in, cr);
        }
    }
    if (at_least(a, Ablation::SA1)) {
        const bool coa = at_least(a, Ablation::SA2);
        stage1_ = SaStageParams::create(root.child("sa1"), cr, cfg_.se_reduction, coa, cfg_.upsample);
        stage2_ = SaStageParams::create(root.child("sa2"), cr, cfg_.se_reduction, coa, cfg_.upsample);
    }

    if (!at_least(a, Ablation::PF1)) {
        head_ = PredictionHeadParams::create(root.child("head"), a == Ablation::B || a == Ablation::ME0 ? 2 * base : cr);
    } else {
        const std::size_t w = cfg_.decoder_channels;
        if (at_least(a, Ablation::PF2)) {
            head1_ = DeconvDecoderParams::create(root.child("head1"), 2 * cr, w, 4);  // level 3, stride 16
            head2_ = DeconvDecoderParams::create(root.child("head2"), 2 * cr, w, 3);  // level 2, stride 8
        }
        if (a == Ablation::FULL)
            aif_attention_ = AifAttentionParams::create(root.child("aa"), cr, cfg_.se_reduction);
        decoder_ = DeconvDecoderParams::create(root.child("decoder"), 2 * cr, w, 3);
    }
}

std::size_t SaNet::head_count() const { return cfg_.ablation >= Ablation::PF2 ? 3 : 1; }

Prediction SaNet::forward(const Tensor& aif, const Tensor& stack) const {
    const Ablation a = cfg_.ablation;
    const FeaturePyramid p2d = encode_aif(aif, aif_encoder_, cfg_);

    FeaturePyramid p3d;
    if (fs_encoder_2d_) {
        if (stack.shape().rank() != 4 || stack.dim(0) != cfg_.slices)
            throw DimensionError("forward: focal stack must be T x 3 x H x W with T = " +
                                 std::to_string(cfg_.slices));
        const Tensor channels = reshape(stack, Shape{3 * cfg_.slices, stack.dim(2), stack.dim(3)});
        p3d = encode_2d(channels, *fs_encoder_2d_, cfg_, Branch::fs3d);
    } else {
        p3d = encode_fs(stack, *fs_encoder_, cfg_);
    }

    if (a == Ablation::B || a == Ablation::ME0)
        return {{prediction_head(p2d.level(2), p3d.level(2), *head_, cfg_)}};

    if (a == Ablation::ME) {
        return {{prediction_head(rfb_block(p2d.level(2), *rfb_aif_[0]), rfb_block(p3d.level(2), *rfb_fs_[0]),
                                 *head_, cfg_)}};
    }

    std::array<FeatureMap, 3> r2d, r3d;
    for (int i = 0; i < 3; ++i) {
        r2d[i] = rfb_block(p2d.level(i + 2), *rfb_aif_[i]);
        r3d[i] = rfb_block(p3d.level(i + 2), *rfb_fs_[i]);
    }
    const SaStageOutput s1 = sa_stage({r2d[1], r2d[2]}, {r3d[1], r3d[2]}, *stage1_);
    const SaStageOutput s2 = sa_stage({r2d[0], s1.aif}, {r3d[0], s1.fs}, *stage2_);

    if (!decoder_) return {{prediction_head(s2.aif, s2.fs, *head_, cfg_)}};

    Prediction out;
    if (head1_) {
        out.maps.push_back(progressive_head(s1.aif, s1.fs, *head1_, cfg_));
        out.maps.push_back(progressive_head(s2.aif, s2.fs, *head2_, cfg_));
    }
    if (aif_attention_) {
        auto [f2d, f3d] = aif_induced_attention(s2.aif, s2.fs, *aif_attention_);
        out.maps.push_back(pf_forward(f2d, f3d, *decoder_, cfg_));
    } else {
        out.maps.push_back(pf_forward(s2.aif, s2.fs, *decoder_, cfg_));
    }
    return out;
}

// ---------------------------------------------------------- checkpoint ---

namespace {

constexpr char kMagic[8] = {'S', 'A', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw std::runtime_error("checkpoint " + path + ": truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, std::uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& is, const std::string& path) {
    const auto n = get<std::uint32_t>(is, path);
    if (n > (1u << 24)) throw std::runtime_error("checkpoint " + path + ": implausible string length");
    std::string s(n, '\0');
    if (!is.read(s.data(), n)) throw std::runtime_error("checkpoint " + path + ": truncated file");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const SaNet& model) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kVersion);
    put_string(os, model.config().to_text());
    const auto& store = model.parameters();
    put<std::uint32_t>(os, std::uint32_t(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Tensor& t = store.tensors()[i];
        put_string(os, store.names()[i]);
        put<std::uint32_t>(os, std::uint32_t(t.shape().rank()));
        for (auto d : t.shape().dims()) put<std::uint64_t>(os, d);
        for (double v : t.data()) put<double>(os, v);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

SaNet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const auto version = get<std::uint32_t>(is, path);
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version " + std::to_string(version));

    SaNet model(ModelConfig::from_text(get_string(is, path)), 0);
    auto& store = model.parameters();
    const auto count = get<std::uint32_t>(is, path);
    if (count != store.size())
        throw std::runtime_error("checkpoint " + path + ": holds " + std::to_string(count) +
                                 " parameters, model expects " + std::to_string(store.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = get_string(is, path);
        if (!store.contains(name)) throw std::runtime_error("checkpoint " + path + ": unknown parameter " + name);
        Tensor t = store.at(name);
        const auto rank = get<std::uint32_t>(is, path);
        std::vector<std::size_t> dims;
        for (std::uint32_t r = 0; r < rank; ++r) dims.push_back(std::size_t(get<std::uint64_t>(is, path)));
        if (Shape(dims) != t.shape())
            throw std::runtime_error("checkpoint " + path + ": parameter " + name + " has shape " +
                                     Shape(dims).str() + ", model expects " + t.shape().str());
        for (double& v : t.data()) v = get<double>(is, path);
    }
    return model;
}

}  // namespace sanet
