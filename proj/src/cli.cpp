#include "sanet/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "sanet/adam.hpp"
#include "sanet/autograd.hpp"
#include "sanet/dataset_io.hpp"
#include "sanet/loss.hpp"

namespace sanet {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T v{};
    if (value.empty() || value.front() == '-' || !(is >> v) || !is.eof())
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return v;
}

std::vector<Sample> load_samples(const RunConfig& cfg, const ModelConfig& model) {
    if (cfg.synthetic > 0) return generate_synthetic(cfg.seed, cfg.synthetic, model);
    if (cfg.data_root.empty()) throw ConfigError("no dataset: set data_root or --synthetic N");
    return load_dataset(open_manifest(cfg.data_root, cfg.split), model);
}

SaNet open_model(const RunConfig& cfg) {
    if (!fs::exists(cfg.checkpoint)) throw std::runtime_error("checkpoint not found: " + cfg.checkpoint);
    return load_checkpoint(cfg.checkpoint);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << text;
}

void write_reports(const MetricReport& r, const fs::path& dir) {
    fs::create_directories(dir / "curves");
    write_report((dir / "report.csv").string(), r);
    write_curves((dir / "curves.csv").string(), r.curves);
    for (const auto& im : r.images) write_curves((dir / "curves" / (im.id + ".csv")).string(), im.curves);
}

std::vector<std::string> image_ids(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DatasetError("missing directory: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm"))
            ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

fs::path image_path(const fs::path& dir, const std::string& id) {
    for (const char* ext : {".png", ".pgm", ".ppm"}) {
        fs::path p = dir / (id + ext);
        if (fs::exists(p)) return p;
    }
    return dir / (id + ".png");
}

}  // namespace

double RunConfig::learning_rate() const {
    if (lr) return *lr;
    return protocol == "paper" ? 1e-5 : 1e-3;
}

bool RunConfig::set(const std::string& key, const std::string& value) {
    if (model.set(key, value)) return true;
    if (key == "data_root") data_root = value;
    else if (key == "split") split = value;
    else if (key == "synthetic") synthetic = parse_number<std::size_t>(key, value);
    else if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "protocol") {
        if (value != "toy" && value != "paper") throw ConfigError("protocol must be 'toy' or 'paper'");
        protocol = value;
    } else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "steps") steps = parse_number<std::size_t>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "lr_decay") lr_decay = parse_number<double>(key, value);
    else if (key == "plateau_window") plateau_window = parse_number<std::size_t>(key, value);
    else if (key == "plateau_tolerance") plateau_tolerance = parse_number<double>(key, value);
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "output_dir") output_dir = value;
    else if (key == "pred_dir") pred_dir = value;
    else if (key == "gt_dir") gt_dir = value;
    else return false;
    return true;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        if (!set(key, trim(line.substr(eq + 1))))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
}

std::string format_loss_csv(const std::vector<LossRow>& log) {
    std::string out = "step,loss,bce,iou,em\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.10f,%.10f,%.10f,%.10f\n", r.step, r.loss, r.bce, r.iou, r.em);
        out += buf;
    }
    return out;
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream& diag) {
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    cfg.model.validate();
    const std::vector<Sample> data = load_samples(cfg, cfg.model);
    SaNet net(cfg.model, cfg.seed + 1);
    const auto& params = net.parameters().tensors();

    AdamState opt;
    opt.lr = cfg.learning_rate();
    TrainResult result;
    result.parameter_count = net.parameters().scalar_count();
    diag << "training " << to_string(cfg.model.ablation) << " (" << result.parameter_count << " parameters) on "
         << data.size() << " samples, lr " << opt.lr << "\n";

    double previous_window = -1.0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        net.parameters().zero_grad();
        Tape tape;
        LossRow row{step, 0, 0, 0, 0, opt.lr};
        Tensor total;
        {
            TapeScope scope(tape);
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                const Sample& s = data[(step * cfg.batch_size + b) % data.size()];
                LossBreakdown lb = hybrid_loss(net.forward(s.aif, s.focal_stack), s.gt);
                row.bce += lb.bce;
                row.iou += lb.iou;
                row.em += lb.em;
                total = total.defined() ? add(total, lb.total) : lb.total;
            }
            total = scale(total, 1.0 / double(cfg.batch_size));
        }
        const double k = 1.0 / double(cfg.batch_size);
        row.loss = total.item();
        row.bce *= k;
        row.iou *= k;
        row.em *= k;
        if (!std::isfinite(row.loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
        backward(total, tape);
        adam_step(params, opt);
        result.log.push_back(row);

        const std::size_t w = cfg.plateau_window;
        if (w > 0 && (step + 1) % w == 0) {
            double current = 0.0;
            for (std::size_t i = result.log.size() - w; i < result.log.size(); ++i) current += result.log[i].loss;
            current /= double(w);
            if (previous_window > 0.0 && previous_window - current < cfg.plateau_tolerance * previous_window) {
                opt.lr *= cfg.lr_decay;
                diag << "step " << step + 1 << ": plateau, lr -> " << opt.lr << "\n";
            }
            previous_window = current;
            diag << "step " << step + 1 << ": mean loss " << current << "\n";
        }
    }

    fs::create_directories(cfg.output_dir);
    if (const auto parent = fs::path(cfg.checkpoint).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_checkpoint(cfg.checkpoint, net);
    write_file(fs::path(cfg.output_dir) / "loss.csv", format_loss_csv(result.log));
    return result;
}

MetricReport cmd_eval(const RunConfig& cfg, std::ostream& diag) {
    const SaNet net = open_model(cfg);
    const std::vector<Sample> data = load_samples(cfg, net.config());
    std::vector<ImageScores> scores;
    for (const Sample& s : data) {
        const Prediction pred = net.forward(s.aif, s.focal_stack);
        scores.push_back(evaluate_image(s.id, SaliencyMap::from_tensor(pred.final_map()),
                                        GroundTruthMask::from_tensor(s.gt)));
    }
    MetricReport r = aggregate_report(std::move(scores));
    write_reports(r, cfg.output_dir);
    diag << "evaluated " << r.images.size() << " samples: MAE " << r.mae << ", F_adp " << r.f_adaptive << "\n";
    return r;
}

std::size_t cmd_predict(const RunConfig& cfg, std::ostream& diag) {
    const SaNet net = open_model(cfg);
    const std::vector<Sample> data = load_samples(cfg, net.config());
    fs::create_directories(cfg.output_dir);
    for (const Sample& s : data)
        write_saliency_map(net.forward(s.aif, s.focal_stack).final_map(), fs::path(cfg.output_dir) / (s.id + ".png"));
    diag << "wrote " << data.size() << " maps to " << cfg.output_dir << "\n";
    return data.size();
}

MetricReport cmd_metrics(const RunConfig& cfg, std::ostream& diag) {
    if (cfg.pred_dir.empty() || cfg.gt_dir.empty()) throw ConfigError("metrics needs pred_dir and gt_dir");
    const auto pred_ids = image_ids(cfg.pred_dir);
    const auto gt_ids = image_ids(cfg.gt_dir);
    std::vector<std::string> missing;
    std::set_symmetric_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(),
                                  std::back_inserter(missing));
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw DatasetError("prediction and ground-truth ids differ; unmatched: " + list);
    }
    if (pred_ids.empty()) throw DatasetError("no images in " + cfg.pred_dir);

    std::vector<ImageScores> scores;
    for (const auto& id : pred_ids) {
        const Tensor g = read_mask(image_path(cfg.gt_dir, id));
        Tensor p = read_saliency_map(image_path(cfg.pred_dir, id));
        if (p.shape() != g.shape()) p = resize_bilinear(p, g.dim(1), g.dim(2));
        scores.push_back(evaluate_image(id, SaliencyMap::from_tensor(p), GroundTruthMask::from_tensor(g)));
    }
    MetricReport r = aggregate_report(std::move(scores));
    write_reports(r, cfg.output_dir);
    diag << "scored " << r.images.size() << " maps: MAE " << r.mae << ", F_adp " << r.f_adaptive << "\n";
    return r;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Light-field salient object detection with synergistic attention"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file; flags override it");

    struct Flag {
        const char* name;
        const char* key;
        const char* help;
        std::string value;
    };
    std::vector<Flag> flags{
        {"--data", "data_root", "dataset root directory", {}},
        {"--split", "split", "manifest split (train|test)", {}},
        {"--synthetic", "synthetic", "use N generated scenes instead of a dataset", {}},
        {"--ablation", "ablation", "B, ME0, ME, SA1, SA2, PF1, PF2 or FULL", {}},
        {"--seed", "seed", "random seed", {}},
        {"--lr", "lr", "learning rate", {}},
        {"--steps", "steps", "training steps", {}},
        {"--batch-size", "batch_size", "samples per step", {}},
        {"--protocol", "protocol", "toy (default) or paper", {}},
        {"--checkpoint", "checkpoint", "checkpoint path", {}},
        {"--out", "output_dir", "output directory", {}},
        {"--pred-dir", "pred_dir", "prediction maps to score", {}},
        {"--gt-dir", "gt_dir", "ground-truth masks", {}},
        {"--slices", "slices", "focal slices T", {}},
        {"--input-size", "input_size", "square input size", {}},
        {"--base-channels", "base_channels", "encoder base width", {}},
        {"--rfb-channels", "rfb_channels", "attention width", {}},
        {"--decoder-channels", "decoder_channels", "decoder width", {}},
        {"--upsample", "upsample", "bilinear or nearest", {}},
    };
    std::vector<CLI::Option*> opts;
    for (auto& f : flags) opts.push_back(app.add_option(f.name, f.value, f.help));

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint and loss log");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (final map) and write reports");
    auto* predict = app.add_subcommand("predict", "write 8-bit saliency maps");
    auto* metrics = app.add_subcommand("metrics", "score existing maps against masks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (std::size_t i = 0; i < flags.size(); ++i)
            if (opts[i]->count() > 0) cfg.set(flags[i].key, flags[i].value);

        if (train->parsed()) cmd_train(cfg, std::cerr);
        else if (eval->parsed()) cmd_eval(cfg, std::cerr);
        else if (predict->parsed()) cmd_predict(cfg, std::cerr);
        else if (metrics->parsed()) cmd_metrics(cfg, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace sanet
