#include "semcom/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace semcom {

using nlohmann::json;

namespace {

void checkKeys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void get(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) obj.at(key).get_to(out);
}

ChannelKind parseKind(const std::string& s, const std::string& where) {
    if (s == "noiseless") return ChannelKind::Noiseless;
    if (s == "awgn") return ChannelKind::AWGN;
    if (s == "rayleigh") return ChannelKind::Rayleigh;
    throw ConfigError("config: bad channel kind '" + s + "' in " + where);
}

Coherence parseCoherence(const std::string& s, const std::string& where) {
    if (s == "per_symbol") return Coherence::PerSymbol;
    if (s == "per_block") return Coherence::PerBlock;
    throw ConfigError("config: bad coherence '" + s + "' in " + where);
}

DatasetSpec parseDataset(const json& j) {
    DatasetSpec d;
    checkKeys(j, "dataset",
              {"kind", "frames", "seed", "width", "height", "objects", "min_disparity", "max_disparity", "root",
               "split"});
    std::string kind = "synthetic";
    get(j, "kind", kind);
    if (kind == "synthetic") {
        d.kind = DatasetSpec::Kind::Synthetic;
        get(j, "frames", d.frames);
        get(j, "seed", d.seed);
        get(j, "width", d.synth.width);
        get(j, "height", d.synth.height);
        get(j, "objects", d.synth.objects);
        get(j, "min_disparity", d.synth.min_disparity);
        get(j, "max_disparity", d.synth.max_disparity);
        if (d.frames < 1) throw ConfigError("config: dataset.frames must be >= 1");
    } else if (kind == "kitti") {
        d.kind = DatasetSpec::Kind::Kitti;
        std::string root;
        get(j, "root", root);
        d.root = root;
        get(j, "split", d.split);
        if (root.empty()) throw ConfigError("config: dataset.root required for kitti");
    } else {
        throw ConfigError("config: dataset.kind must be 'synthetic' or 'kitti'");
    }
    return d;
}

CodecConfig parseCodec(const json& j) {
    CodecConfig c;
    checkKeys(j, "codec",
              {"n", "n1", "n2", "m", "f", "enc_depth", "dec_depth", "fusion_width", "leaky_slope", "flow_levels",
               "flow_width"});
    get(j, "n", c.n);
    get(j, "n1", c.n1);
    get(j, "n2", c.n2);
    get(j, "m", c.m);
    get(j, "f", c.f);
    get(j, "enc_depth", c.enc_depth);
    get(j, "dec_depth", c.dec_depth);
    get(j, "fusion_width", c.fusion_width);
    get(j, "leaky_slope", c.leaky_slope);
    get(j, "flow_levels", c.flow_levels);
    get(j, "flow_width", c.flow_width);
    c.validate();
    return c;
}

ChannelCodecConfig parseChannelCodec(const json& j) {
    ChannelCodecConfig c;
    checkKeys(j, "channel_codec", {"rate_channels", "width", "enc_depth", "dec_depth", "use_norm"});
    get(j, "rate_channels", c.rate_channels);
    get(j, "width", c.width);
    get(j, "enc_depth", c.enc_depth);
    get(j, "dec_depth", c.dec_depth);
    get(j, "use_norm", c.use_norm);
    return c;
}

std::vector<ChannelRun> parseChannels(const json& j) {
    if (!j.is_array()) throw ConfigError("config: channels must be an array");
    std::vector<ChannelRun> runs;
    for (const auto& e : j) {
        checkKeys(e, "channels[]", {"kind", "snr_db", "coherence"});
        ChannelRun r;
        std::string kind;
        if (!e.contains("kind")) throw ConfigError("config: channels[].kind required");
        e.at("kind").get_to(kind);
        r.kind = parseKind(kind, "channels[]");
        if (e.contains("snr_db")) e.at("snr_db").get_to(r.snr_grid);
        if (e.contains("coherence")) r.coherence = parseCoherence(e.at("coherence").get<std::string>(), "channels[]");
        if (r.kind != ChannelKind::Noiseless && r.snr_grid.empty())
            throw ConfigError("config: channels[].snr_db must be nonempty for noisy kinds");
        runs.push_back(std::move(r));
    }
    return runs;
}

TrainSpec parseTrain(const json& j) {
    TrainSpec t;
    checkKeys(j, "train",
              {"epochs_per_phase", "epsilon", "lambda", "per_pixel", "hybrid_fraction", "snr_lo_db", "snr_hi_db",
               "channel_kind", "coherence"});
    get(j, "epochs_per_phase", t.epochs_per_phase);
    get(j, "epsilon", t.epsilon);
    get(j, "lambda", t.lambda);
    get(j, "per_pixel", t.per_pixel);
    get(j, "hybrid_fraction", t.hybrid_fraction);
    get(j, "snr_lo_db", t.snr_lo_db);
    get(j, "snr_hi_db", t.snr_hi_db);
    if (j.contains("channel_kind")) t.channel_kind = parseKind(j.at("channel_kind").get<std::string>(), "train");
    if (j.contains("coherence")) t.coherence = parseCoherence(j.at("coherence").get<std::string>(), "train");
    if (t.channel_kind == ChannelKind::Noiseless) throw ConfigError("config: train.channel_kind must be noisy");
    return t;
}

}  // namespace

void ExperimentConfig::validate() const {
    codec.validate();
    if (quant.bits < 1 || quant.bits > 16) throw ConfigError("config: quant.bits must be in [1,16]");
    if (confidence_floor < 0.0f || confidence_floor > 1.0f) throw ConfigError("config: confidence_floor in [0,1]");
    StageSchedule s = stageSchedule(1);
    s.validate();
}

StageSchedule ExperimentConfig::stageSchedule(int stage_id) const {
    StageSchedule s = StageSchedule::defaults(stage_id, train.epochs_per_phase);
    s.epsilon = train.epsilon;
    s.lambda = train.lambda;
    s.per_pixel = train.per_pixel;
    s.hybrid_fraction = train.hybrid_fraction;
    s.snr_lo_db = train.snr_lo_db;
    s.snr_hi_db = train.snr_hi_db;
    s.flow_mode = flow_mode;
    s.confidence_floor = confidence_floor;
    return s;
}

ExperimentConfig parseConfigText(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    checkKeys(j, "top level",
              {"schema_version", "seed", "out_dir", "dataset", "codec", "channel_codec", "channels", "quant",
               "quantize_payload", "train", "flow_mode", "confidence_floor"});
    if (!j.contains("schema_version")) throw ConfigError("config: schema_version required");
    ExperimentConfig c;
    j.at("schema_version").get_to(c.schema_version);
    if (c.schema_version != 1) throw ConfigError("config: unsupported schema_version");
    get(j, "seed", c.seed);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("dataset")) c.dataset = parseDataset(j.at("dataset"));
    if (j.contains("codec")) c.codec = parseCodec(j.at("codec"));
    if (j.contains("channel_codec")) c.channel_codec = parseChannelCodec(j.at("channel_codec"));
    if (j.contains("channels")) c.channels = parseChannels(j.at("channels"));
    if (j.contains("quant")) {
        checkKeys(j.at("quant"), "quant", {"bits"});
        get(j.at("quant"), "bits", c.quant.bits);
    }
    get(j, "quantize_payload", c.quantize_payload);
    if (j.contains("train")) c.train = parseTrain(j.at("train"));
    if (j.contains("flow_mode")) {
        const std::string fm = j.at("flow_mode").get<std::string>();
        if (fm == "pyramid")
            c.flow_mode = FlowMode::Pyramid;
        else if (fm == "zero")
            c.flow_mode = FlowMode::ZeroStub;
        else
            throw ConfigError("config: flow_mode must be 'pyramid' or 'zero'");
    }
    get(j, "confidence_floor", c.confidence_floor);
    c.validate();
    return c;
}

ExperimentConfig loadConfig(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parseConfigText(ss.str());
}

std::string canonicalConfig(const ExperimentConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir.generic_string();
    json d;
    if (cfg.dataset.kind == DatasetSpec::Kind::Synthetic) {
        d["kind"] = "synthetic";
        d["frames"] = cfg.dataset.frames;
        d["seed"] = cfg.dataset.seed;
        d["width"] = cfg.dataset.synth.width;
        d["height"] = cfg.dataset.synth.height;
        d["objects"] = cfg.dataset.synth.objects;
        d["min_disparity"] = cfg.dataset.synth.min_disparity;
        d["max_disparity"] = cfg.dataset.synth.max_disparity;
    } else {
        d["kind"] = "kitti";
        d["root"] = cfg.dataset.root.generic_string();
        d["split"] = cfg.dataset.split;
    }
    j["dataset"] = d;
    j["codec"] = {{"n", cfg.codec.n},
                  {"n1", cfg.codec.n1},
                  {"n2", cfg.codec.n2},
                  {"m", cfg.codec.m},
                  {"f", cfg.codec.f},
                  {"enc_depth", cfg.codec.enc_depth},
                  {"dec_depth", cfg.codec.dec_depth},
                  {"fusion_width", cfg.codec.fusion_width},
                  {"leaky_slope", cfg.codec.leaky_slope},
                  {"flow_levels", cfg.codec.flow_levels},
                  {"flow_width", cfg.codec.flow_width}};
    j["channel_codec"] = {{"rate_channels", cfg.channel_codec.rate_channels},
                          {"width", cfg.channel_codec.width},
                          {"enc_depth", cfg.channel_codec.enc_depth},
                          {"dec_depth", cfg.channel_codec.dec_depth},
                          {"use_norm", cfg.channel_codec.use_norm}};
    json chans = json::array();
    for (const auto& r : cfg.channels)
        chans.push_back({{"kind", channelKindName(r.kind)},
                         {"snr_db", r.snr_grid},
                         {"coherence", r.coherence == Coherence::PerSymbol ? "per_symbol" : "per_block"}});
    j["channels"] = chans;
    j["quant"] = {{"bits", cfg.quant.bits}};
    j["quantize_payload"] = cfg.quantize_payload;
    j["train"] = {{"epochs_per_phase", cfg.train.epochs_per_phase},
                  {"epsilon", cfg.train.epsilon},
                  {"lambda", cfg.train.lambda},
                  {"per_pixel", cfg.train.per_pixel},
                  {"hybrid_fraction", cfg.train.hybrid_fraction},
                  {"snr_lo_db", cfg.train.snr_lo_db},
                  {"snr_hi_db", cfg.train.snr_hi_db},
                  {"channel_kind", channelKindName(cfg.train.channel_kind)},
                  {"coherence", cfg.train.coherence == Coherence::PerSymbol ? "per_symbol" : "per_block"}};
    j["flow_mode"] = cfg.flow_mode == FlowMode::Pyramid ? "pyramid" : "zero";
    j["confidence_floor"] = cfg.confidence_floor;
    return j.dump();  // nlohmann objects iterate in sorted key order
}

uint64_t configHash(const ExperimentConfig& cfg) {
    const std::string s = canonicalConfig(cfg);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<StereoPair> loadDataset(const DatasetSpec& spec,
                                    const std::optional<std::filesystem::path>& data_root_override) {
    if (spec.kind == DatasetSpec::Kind::Synthetic) {
        std::vector<StereoPair> pairs;
        pairs.reserve(static_cast<size_t>(spec.frames));
        Rng rng(spec.seed);
        for (int i = 0; i < spec.frames; ++i) {
            StereoPair p = synthStereo(rng.fork(static_cast<uint64_t>(i)).nextU64(), spec.synth);
            char id[16];
            std::snprintf(id, sizeof(id), "%06d", i);
            p.frame_id = id;
            pairs.push_back(std::move(p));
        }
        return pairs;
    }
    const std::filesystem::path root = data_root_override.value_or(spec.root);
    return loadKittiStereo(root, spec.split);
}

const char* channelKindName(ChannelKind k) {
    switch (k) {
        case ChannelKind::Noiseless: return "noiseless";
        case ChannelKind::AWGN: return "awgn";
        case ChannelKind::Rayleigh: return "rayleigh";
    }
    return "?";
}

}  // namespace semcom
