// Command implementations behind the `sanet` executable.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sanet/metrics.hpp"
#include "sanet/network.hpp"

namespace sanet {

/// Every setting is also a config-file key (key=value, # comments).
struct RunConfig {
    ModelConfig model;
    std::string data_root;
    std::string split = "train";
    std::size_t synthetic = 0;  // > 0: use that many generated scenes instead of data_root
    std::optional<double> lr;   // default depends on protocol
    std::string protocol = "toy";
    std::size_t batch_size = 2;
    std::size_t steps = 500;
    std::uint64_t seed = 0;
    double lr_decay = 0.9;
    std::size_t plateau_window = 50;
    double plateau_tolerance = 1e-4;
    std::string checkpoint = "sanet.ckpt";
    std::string output_dir = "out";
    std::string pred_dir;
    std::string gt_dir;

    /// 1e-3 for the toy protocol, 1e-5 for `paper`, unless set explicitly.
    double learning_rate() const;
    /// Returns false for an unknown key; throws ConfigError on a bad value.
    bool set(const std::string& key, const std::string& value);
    /// Applies a key=value file on top of the current values.
    void load_file(const std::string& path);
};

struct LossRow {
    std::size_t step = 0;
    double loss = 0.0, bce = 0.0, iou = 0.0, em = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<LossRow> log;
    std::size_t parameter_count = 0;
};

/// Writes the checkpoint and output_dir/loss.csv.
TrainResult cmd_train(const RunConfig& cfg, std::ostream& diag);
/// Writes output_dir/report.csv, output_dir/curves.csv and output_dir/curves/<id>.csv.
MetricReport cmd_eval(const RunConfig& cfg, std::ostream& diag);
/// Writes output_dir/<id>.png; returns the number of maps written.
std::size_t cmd_predict(const RunConfig& cfg, std::ostream& diag);
/// Scores pred_dir/<id>.png against gt_dir/<id>.png; same outputs as cmd_eval.
MetricReport cmd_metrics(const RunConfig& cfg, std::ostream& diag);

std::string format_loss_csv(const std::vector<LossRow>& log);

/// Full command line entry; returns the process exit status.
int run_cli(int argc, char** argv);

}  // namespace sanet
