#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cdepth/boundary.hpp"
#include "cdepth/losses.hpp"
#include "cdepth/metrics.hpp"
#include "cdepth/models.hpp"
#include "cdepth/regularizer.hpp"
#include "cdepth/replay.hpp"
#include "cdepth/worlds.hpp"

namespace cdepth {

enum class Method { fine_tune, reg_only, replay_only, proposed };

const char* method_name(Method m);
Method method_from_string(const std::string& s);

struct RunConfig {
    SampleMode mode = SampleMode::stereo;
    Method method = Method::proposed;
    std::uint64_t seed = 1;

    float lr = 1e-4f;
    float alpha_loss = 0.1f;
    float gamma = 1e-2f;
    LossWeights weights;  // beta_p 0.15, beta_ss 0.85, beta_s 0.1

    int width = 64, height = 48;
    std::size_t buffer_capacity = 2048;
    int eval_every = 200;
    int checkpoint_every = 100;
    int pretrain_epochs = 2;
    int frames_per_domain = 600;
    int domains_per_distribution = 6;
    int eval_frames_per_domain = 10;
    int online_distribution = 1;
    // When set, replay steps also incur the importance penalty, gated by
    // the replayed loss's distance under the current (online) statistics.
    // Off by default: the boundary signal is defined for the online stream,
    // so a replayed step is a plain task-loss update.
    bool replay_reg = false;

    std::string out_dir = "runs/out";

    bool replay_enabled() const {
        return method == Method::replay_only || method == Method::proposed;
    }
    float effective_gamma() const {
        return (method == Method::reg_only || method == Method::proposed) ? gamma : 0.0f;
    }

    /// Flat key=value file; unknown keys are an error listing them.
    static RunConfig from_file(const std::string& path);
    void write_manifest(const std::string& path) const;
};

struct OnlineResult {
    std::vector<ProtocolRow> rows;
    long steps = 0;
};

class Trainer {
public:
    explicit Trainer(RunConfig cfg);

    /// Multi-epoch shuffled training over the pretraining domains; writes
    /// pretrain.ckpt and pretrain_log.csv under the output directory.
    void pretrain();

    /// Single in-order pass over the online stream. stop_after > 0 stops
    /// early after that many steps and leaves a resumable state file.
    OnlineResult run_online(const std::string& checkpoint_path, long stop_after = -1);
    OnlineResult resume_online(long stop_after = -1);

    /// Evaluates the current parameters over every domain's held-out set.
    ProtocolRow evaluate(long step, const std::string& event, int current_online_domain,
                        const std::vector<int>& seen_before);

    const Benchmark& benchmark() const { return bench_; }
    const RunConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const LossStats& loss_stats() const { return stats_; }
    ReplayBuffer* buffer() { return buffer_.get(); }

    /// Task-loss graph for one sample (no regularization); exposed for
    /// instrumentation in tests.
    TensorPtr task_loss(Tape& tape, const LabeledSample& sample);
    TensorPtr task_loss_frames(Tape& tape, SampleMode mode, const TensorPtr& frame_a,
                               const TensorPtr& frame_b);

    /// Resumable training state (parameters, optimizer, detector,
    /// snapshot, buffer, partial logs) under stem.ckpt / stem.bin.
    void save_state(const std::string& stem);
    void load_state(const std::string& stem);

    /// Writes every buffered pair as PPM images plus an index.csv.
    void dump_buffer(const std::string& dir) const;

private:
    void build_models();
    void online_loop(long stop_after, bool resumed);
    void record_row(const ProtocolRow& row);
    void flush_outputs();
    std::vector<int> seen_before_for(int upcoming_block) const;

    RunConfig cfg_;
    Benchmark bench_;
    DisparityNet disp_;
    PoseNet pose_;
    ParamSet params_;
    AdamState adam_;
    ImportanceSnapshot snap_;
    LossStats stats_;
    std::unique_ptr<ReplayBuffer> buffer_;
    long step_ = 0;

    std::vector<std::string> trace_rows_;
    std::vector<std::string> report_rows_;
    std::vector<std::string> domain_rows_;
    std::vector<ProtocolRow> protocol_rows_;
};

/// Aggregates completed runs (grouped by method via run_meta.txt) into the
/// four-column protocol table and fine-tune-normalized evolution curves.
void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

std::string format_float(double v);

}  // namespace cdepth
