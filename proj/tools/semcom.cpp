#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "semcom/config.hpp"
#include "semcom/metrics.hpp"
#include "semcom/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semcom;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> data_root;
};

void addCommon(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "Experiment config (JSON)")->required();
    cmd->add_option("--seed", f.seed, "Override config seed");
    cmd->add_option("--out", f.out, "Override output directory");
    cmd->add_option("--data-root", f.data_root, "Override KITTI data root (also env SEMCOM_DATA_ROOT)");
}

ExperimentConfig loadCfg(const CommonFlags& f) {
    ExperimentConfig cfg = loadConfig(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.out_dir = *f.out;
    return cfg;
}

std::optional<fs::path> dataRoot(const CommonFlags& f) {
    if (f.data_root) return fs::path(*f.data_root);
    if (const char* env = std::getenv("SEMCOM_DATA_ROOT")) return fs::path(env);
    return std::nullopt;
}

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

fs::path stageCkpt(const ExperimentConfig& cfg, int stage) {
    return cfg.out_dir / ("stage" + std::to_string(stage) + ".ckpt");
}

struct Models {
    std::unique_ptr<SemanticCodec> codec;
    std::unique_ptr<ChannelCodec> chan;
};

Models freshModels(const ExperimentConfig& cfg) {
    Models m;
    m.codec = std::make_unique<SemanticCodec>(cfg.codec);
    m.chan = std::make_unique<ChannelCodec>(cfg.channel_codec);
    Rng root(cfg.seed);
    Rng codec_rng = root.fork(0);
    Rng chan_rng = root.fork(1);
    m.codec->initWeights(codec_rng);
    m.chan->initWeights(chan_rng);
    return m;
}

// Highest-stage checkpoint present, or -1.
int latestStage(const ExperimentConfig& cfg) {
    for (int s = 5; s >= 1; --s)
        if (fs::exists(stageCkpt(cfg, s))) return s;
    return -1;
}

void writeManifest(const ExperimentConfig& cfg, const std::string& command, const std::vector<std::string>& files,
                   double wall_seconds) {
    json j;
    j["config_hash"] = hex64(configHash(cfg));
    j["command"] = command;
    j["files"] = files;
    j["wall_seconds"] = wall_seconds;
    std::ofstream out(cfg.out_dir / ("manifest_" + command + ".json"));
    out << j.dump(2) << "\n";
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmtOpt(const std::optional<double>& v, const char* sentinel = "inf") {
    return v ? fmt(*v) : sentinel;
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

int cmdPrepare(const CommonFlags& flags) {
    ExperimentConfig cfg = loadCfg(flags);
    auto pairs = loadDataset(cfg.dataset, dataRoot(flags));
    fs::create_directories(cfg.out_dir);

    std::map<std::string, int> counts{{"easy", 0}, {"moderate", 0}, {"hard", 0}, {"ignored", 0}};
    json frames = json::array();
    for (const auto& p : pairs) {
        frames.push_back(p.frame_id);
        if (p.gt_left)
            for (const auto& b : p.gt_left->boxes) {
                std::string r = regimeName(classifyDifficulty(b));
                for (auto& c : r) c = static_cast<char>(std::tolower(c));
                ++counts[r];
            }
    }
    json j;
    j["config_hash"] = hex64(configHash(cfg));
    j["frame_count"] = pairs.size();
    j["frames"] = frames;
    j["difficulty_counts"] = counts;
    const fs::path out = cfg.out_dir / "dataset_manifest.json";
    std::ofstream f(out);
    f << j.dump(2) << "\n";

    std::cout << "frames: " << pairs.size() << "\n";
    for (const auto& [k, v] : counts) std::cout << k << ": " << v << "\n";
    std::cout << "manifest: " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

std::vector<int> parseStages(const std::string& spec) {
    std::vector<int> stages;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto dash = tok.find('-');
        if (dash != std::string::npos) {
            const int a = std::stoi(tok.substr(0, dash)), b = std::stoi(tok.substr(dash + 1));
            for (int s = a; s <= b; ++s) stages.push_back(s);
        } else if (!tok.empty()) {
            stages.push_back(std::stoi(tok));
        }
    }
    for (int s : stages)
        if (s < 1 || s > 5) throw ConfigError("train: stages must be in 1..5");
    if (stages.empty()) throw ConfigError("train: empty stage list");
    for (size_t i = 1; i < stages.size(); ++i)
        if (stages[i] != stages[i - 1] + 1) throw ConfigError("train: stages must be consecutive ascending");
    return stages;
}

int cmdTrain(const CommonFlags& flags, const std::string& stages_spec) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = loadCfg(flags);
    const std::vector<int> stages = parseStages(stages_spec);
    auto pairs = loadDataset(cfg.dataset, dataRoot(flags));
    fs::create_directories(cfg.out_dir);

    Models m = freshModels(cfg);
    TrainState state(*m.codec, Rng(cfg.seed).fork(2).nextU64(), m.chan.get());

    const int first = stages.front();
    if (first > 1) {
        const fs::path prev = stageCkpt(cfg, first - 1);
        if (!fs::exists(prev))
            throw StateError("train: stage " + std::to_string(first) + " needs checkpoint " + prev.string());
        loadCheckpoint(prev, state);
    }

    ChannelConfig train_chan;
    train_chan.kind = cfg.train.channel_kind;
    train_chan.coherence = cfg.train.coherence;

    std::vector<std::string> files;
    for (int s : stages) {
        StageSchedule sched = cfg.stageSchedule(s);
        runStage(sched, state, pairs, train_chan);
        const fs::path ckpt = stageCkpt(cfg, s);
        saveCheckpoint(ckpt, state);
        // Wall time lives in the manifest; the CSV stays byte-reproducible.
        const fs::path csv = cfg.out_dir / ("loss_stage" + std::to_string(s) + ".csv");
        std::ofstream lf(csv);
        lf << "stage,epoch,loss\n";
        for (const auto& r : state.history)
            if (r.stage == s) lf << r.stage << "," << r.epoch << "," << fmt(r.loss) << "\n";
        files.push_back(ckpt.string());
        files.push_back(csv.string());
        std::cout << "stage " << s << " done, final loss "
                  << fmt(state.history.empty() ? 0.0 : state.history.back().loss) << "\n";
    }
    writeManifest(cfg, "train", files, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return 0;
}

// ---------------------------------------------------------------------------
// transmit
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string frame_id, channel, snr, metric, region, value;
};

void writeMetricCsv(const fs::path& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path);
    out << "frame_id,channel,snr_db,metric,region,value\n";
    for (const auto& r : rows)
        out << r.frame_id << "," << r.channel << "," << r.snr << "," << r.metric << "," << r.region << "," << r.value
            << "\n";
}

void appendFrameMetrics(std::vector<MetricRow>& rows, const std::string& frame, const std::string& chan,
                        const std::string& snr, const ImagePlane& src, const ImagePlane& got, const Tensor& mask) {
    rows.push_back({frame, chan, snr, "psnr", "global", fmtOpt(psnr(src, got))});
    rows.push_back({frame, chan, snr, "psnr", "key", fmtOpt(psnrMasked(src, got, mask), "na")});
    rows.push_back({frame, chan, snr, "ssim", "global", fmt(ssim(src, got))});
    rows.push_back({frame, chan, snr, "ssim", "key", fmt(ssimMasked(src, got, mask))});
}

int cmdTransmit(const CommonFlags& flags, const std::string& channel_filter, const std::vector<double>& snr_override) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = loadCfg(flags);
    auto pairs = loadDataset(cfg.dataset, dataRoot(flags));
    fs::create_directories(cfg.out_dir);

    const int stage = latestStage(cfg);
    if (stage < 0) throw StateError("transmit: no checkpoint under " + cfg.out_dir.string() + "; run train first");
    Models m = freshModels(cfg);
    TrainState state(*m.codec, 0, m.chan.get());
    loadCheckpoint(stageCkpt(cfg, stage), state);

    std::vector<ChannelRun> runs = cfg.channels;
    if (runs.empty()) runs.push_back({ChannelKind::Noiseless, {}, Coherence::PerSymbol});
    if (!channel_filter.empty()) {
        std::vector<ChannelRun> kept;
        for (const auto& r : runs)
            if (channel_filter == channelKindName(r.kind)) kept.push_back(r);
        if (kept.empty()) throw ConfigError("transmit: no configured channel of kind '" + channel_filter + "'");
        runs = kept;
    }

    std::vector<MetricRow> rows;
    std::vector<std::string> files;
    OracleDetector det;
    for (size_t ri = 0; ri < runs.size(); ++ri) {
        const ChannelRun& run = runs[ri];
        std::vector<double> grid = run.kind == ChannelKind::Noiseless ? std::vector<double>{0.0} : run.snr_grid;
        if (run.kind != ChannelKind::Noiseless && !snr_override.empty()) grid = snr_override;
        for (size_t gi = 0; gi < grid.size(); ++gi) {
            const std::string kind = channelKindName(run.kind);
            const std::string snr_label = run.kind == ChannelKind::Noiseless ? "inf" : fmt(grid[gi]);
            const fs::path img_dir = cfg.out_dir / "images" / (kind + "_" + snr_label);
            fs::create_directories(img_dir);
            for (size_t fi = 0; fi < pairs.size(); ++fi) {
                TransmitOptions opts;
                opts.channel.kind = run.kind;
                opts.channel.coherence = run.coherence;
                opts.channel.snr_db = grid[gi];
                opts.channel.seed = Rng(cfg.seed).fork(100 + ri).fork(gi).fork(fi).nextU64();
                opts.quant = cfg.quant;
                opts.quantize_payload = cfg.quantize_payload;
                opts.flow_mode = cfg.flow_mode;
                opts.confidence_floor = cfg.confidence_floor;
                TransmitResult res = transmitPair(*m.codec, m.chan.get(), pairs[fi], det, opts);

                const fs::path pl = img_dir / (pairs[fi].frame_id + "_l.png");
                const fs::path pr = img_dir / (pairs[fi].frame_id + "_r.png");
                savePng(pl, res.image_l);
                savePng(pr, res.image_r);
                files.push_back(pl.string());
                files.push_back(pr.string());

                appendFrameMetrics(rows, pairs[fi].frame_id + "_l", kind, snr_label, pairs[fi].left, res.image_l,
                                   res.mask_l);
                appendFrameMetrics(rows, pairs[fi].frame_id + "_r", kind, snr_label, pairs[fi].right, res.image_r,
                                   res.mask_r);
                rows.push_back({pairs[fi].frame_id, kind, snr_label, "compression_ratio", "frame",
                                fmt(effectiveCompressionRatio(res.payload))});
            }
        }
    }
    const fs::path csv = cfg.out_dir / "metrics_transmit.csv";
    writeMetricCsv(csv, rows);
    files.push_back(csv.string());
    writeManifest(cfg, "transmit", files,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "rows: " << rows.size() << "\nmetrics: " << csv.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

std::vector<MetricRow> readMetricCsv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw StateError("evaluate: missing " + path.string() + "; run transmit first");
    std::vector<MetricRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        MetricRow r;
        std::getline(ss, r.frame_id, ',');
        std::getline(ss, r.channel, ',');
        std::getline(ss, r.snr, ',');
        std::getline(ss, r.metric, ',');
        std::getline(ss, r.region, ',');
        std::getline(ss, r.value, ',');
        rows.push_back(std::move(r));
    }
    return rows;
}

int cmdEvaluate(const CommonFlags& flags, const std::string& detections_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = loadCfg(flags);
    fs::create_directories(cfg.out_dir);
    auto rows = readMetricCsv(cfg.out_dir / "metrics_transmit.csv");

    // key: channel|snr|metric|region -> (sum, finite count, skipped count)
    struct Agg {
        double sum = 0.0;
        int count = 0, skipped = 0;
    };
    std::map<std::string, Agg> agg;
    for (const auto& r : rows) {
        if (r.metric == "compression_ratio") continue;
        Agg& a = agg[r.channel + "|" + r.snr + "|" + r.metric + "|" + r.region];
        if (r.value == "inf" || r.value == "na") {
            ++a.skipped;
        } else {
            a.sum += std::stod(r.value);
            ++a.count;
        }
    }

    json aggregate = json::object();
    aggregate["config_hash"] = hex64(configHash(cfg));
    json means = json::array();
    for (const auto& [key, a] : agg) {
        std::stringstream ss(key);
        std::string channel, snr, metric, region;
        std::getline(ss, channel, '|');
        std::getline(ss, snr, '|');
        std::getline(ss, metric, '|');
        std::getline(ss, region, '|');
        json e{{"channel", channel}, {"snr_db", snr}, {"metric", metric}, {"region", region},
               {"count", a.count},   {"excluded", a.skipped}};
        e["mean"] = a.count > 0 ? json(a.sum / a.count) : json(nullptr);
        means.push_back(std::move(e));
    }
    aggregate["means"] = means;

    // 2D AP from external detection files when given, otherwise the oracle.
    auto pairs = loadDataset(cfg.dataset, dataRoot(flags));
    std::vector<FrameDetections> frames_l, frames_r;
    int missing = 0;
    for (const auto& p : pairs) {
        if (!p.gt_left) continue;
        FrameDetections fl, fr;
        fl.ground_truth = *p.gt_left;
        fr.ground_truth = p.gt_right ? *p.gt_right : *p.gt_left;
        if (detections_dir.empty()) {
            fl.detections = fl.ground_truth;
            fr.detections = fr.ground_truth;
            for (auto& b : fl.detections.boxes) b.confidence = 1.0f;
            for (auto& b : fr.detections.boxes) b.confidence = 1.0f;
        } else {
            const fs::path file = fs::path(detections_dir) / (p.frame_id + ".txt");
            if (!fs::exists(file)) {
                std::cerr << "missing detections: " << file.string() << "\n";
                ++missing;
                continue;
            }
            fl.detections = parseKittiLabels(file, p.left.w(), p.left.h());
            fr.detections = fl.detections;
        }
        frames_l.push_back(std::move(fl));
        frames_r.push_back(std::move(fr));
    }
    if (!detections_dir.empty() && frames_l.empty()) throw StateError("evaluate: all detection files missing");
    json ap = json::object();
    for (DifficultyRegime reg : {DifficultyRegime::Easy, DifficultyRegime::Moderate, DifficultyRegime::Hard}) {
        APResult al = ap2d(frames_l, 0.5, reg);
        APResult ar = ap2d(frames_r, 0.5, reg);
        std::string name = regimeName(reg);
        for (auto& c : name) c = static_cast<char>(std::tolower(c));
        ap[name] = {{"left", al.ap ? json(*al.ap) : json(nullptr)},
                    {"right", ar.ap ? json(*ar.ap) : json(nullptr)},
                    {"gt_count", al.gt_count}};
    }
    aggregate["ap_2d_iou50"] = ap;

    const fs::path agg_path = cfg.out_dir / "metrics_aggregate.json";
    std::ofstream jf(agg_path);
    jf << aggregate.dump(2) << "\n";

    // One metric-vs-SNR plot per metric/region per noisy channel kind.
    std::vector<std::string> files{agg_path.string()};
    std::map<std::string, std::map<std::string, std::vector<std::pair<double, double>>>> plots;
    for (const auto& e : means) {
        if (e["snr_db"] == "inf" || e["mean"].is_null()) continue;
        const std::string key = e["metric"].get<std::string>() + "_" + e["region"].get<std::string>();
        plots[key][e["channel"].get<std::string>()].push_back(
            {std::stod(e["snr_db"].get<std::string>()), e["mean"].get<double>()});
    }
    for (auto& [key, by_chan] : plots) {
        std::vector<PlotSeries> series;
        for (auto& [chan, pts] : by_chan) {
            std::sort(pts.begin(), pts.end());
            PlotSeries s;
            s.label = chan;
            for (auto& [x, y] : pts) {
                s.x.push_back(x);
                s.y.push_back(y);
            }
            series.push_back(std::move(s));
        }
        const fs::path plot_path = cfg.out_dir / ("plot_" + key + ".png");
        plotLines(plot_path, series, key);
        files.push_back(plot_path.string());
    }
    writeManifest(cfg, "evaluate", files,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "aggregate: " << agg_path.string() << "\n";
    return missing > 0 && frames_l.empty() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int cmdAblate(const CommonFlags& flags) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = loadCfg(flags);
    auto pairs = loadDataset(cfg.dataset, dataRoot(flags));
    fs::create_directories(cfg.out_dir);
    const int stage = latestStage(cfg);
    if (stage < 0) throw StateError("ablate: no checkpoint under " + cfg.out_dir.string() + "; run train first");
    Models m = freshModels(cfg);
    TrainState state(*m.codec, 0, m.chan.get());
    loadCheckpoint(stageCkpt(cfg, stage), state);

    std::vector<MetricRow> rows;
    OracleDetector det;
    for (const auto& pair : pairs) {
        EncodeResult enc = encodePair(*m.codec, pair, det, cfg.confidence_floor);
        auto zero_like = [](const nn::NodeP& x) {
            return nn::constant(Tensor(x->value.w(), x->value.h(), x->value.c()));
        };
        const std::pair<std::string, std::array<nn::NodeP, 4>> variants[] = {
            {"full", {enc.k_l, enc.k_r, enc.g_l, enc.g_r}},
            {"key_only", {enc.k_l, enc.k_r, zero_like(enc.g_l), zero_like(enc.g_r)}},
            {"global_only", {zero_like(enc.k_l), zero_like(enc.k_r), enc.g_l, enc.g_r}},
        };
        for (const auto& [name, io] : variants) {
            DecodeResult dec = decodePair(*m.codec, io[0], io[1], io[2], io[3], enc, cfg.flow_mode);
            const Tensor mask_l = cropTo(enc.mask_l, enc.orig_w, enc.orig_h);
            const Tensor mask_r = cropTo(enc.mask_r, enc.orig_w, enc.orig_h);
            appendFrameMetrics(rows, pair.frame_id + "_l", name, "inf", pair.left, dec.image_l, mask_l);
            appendFrameMetrics(rows, pair.frame_id + "_r", name, "inf", pair.right, dec.image_r, mask_r);
        }
    }
    const fs::path csv = cfg.out_dir / "metrics_ablate.csv";
    writeMetricCsv(csv, rows);
    writeManifest(cfg, "ablate", {csv.string()},
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "ablation metrics: " << csv.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task-oriented semantic communication for stereo image pairs"};
    app.require_subcommand(1);

    CommonFlags prep_f, train_f, tx_f, eval_f, abl_f;
    std::string stages = "1-5", channel_filter, detections_dir;
    std::vector<double> snr_override;

    auto* prepare = app.add_subcommand("prepare", "Validate/ingest the dataset and write a split manifest");
    addCommon(prepare, prep_f);

    auto* train = app.add_subcommand("train", "Run the five-step staged training");
    addCommon(train, train_f);
    train->add_option("--stages", stages, "Stage list, e.g. 1-5 or 2,3");

    auto* transmit = app.add_subcommand("transmit", "Encode, send over configured channels, decode, export");
    addCommon(transmit, tx_f);
    transmit->add_option("--channel", channel_filter, "Restrict to one channel kind");
    transmit->add_option("--snr", snr_override, "Override the SNR grid (dB)");

    auto* evaluate = app.add_subcommand("evaluate", "Aggregate transmit metrics, compute AP, emit plots");
    addCommon(evaluate, eval_f);
    evaluate->add_option("--detections", detections_dir, "External KITTI-format detections directory");

    auto* ablate = app.add_subcommand("ablate", "Noiseless stream ablation (key-only / global-only)");
    addCommon(ablate, abl_f);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return cmdPrepare(prep_f);
        if (train->parsed()) return cmdTrain(train_f, stages);
        if (transmit->parsed()) return cmdTransmit(tx_f, channel_filter, snr_override);
        if (evaluate->parsed()) return cmdEvaluate(eval_f, detections_dir);
        if (ablate->parsed()) return cmdAblate(abl_f);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const StateError& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
