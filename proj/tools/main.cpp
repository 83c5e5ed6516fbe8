#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdepth/trainer.hpp"

namespace {

struct CommonOpts {
    std::string config;
    std::string seed, method, mode, out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "key=value run configuration file");
    cmd->add_option("--seed", o.seed, "master seed (overrides config)");
    cmd->add_option("--method", o.method, "ft|reg|rep|prop (overrides config)");
    cmd->add_option("--mode", o.mode, "stereo|sfm (overrides config)");
    cmd->add_option("--out", o.out, "output directory (overrides config)");
}

cdepth::RunConfig resolve(const CommonOpts& o) {
    cdepth::RunConfig cfg =
        o.config.empty() ? cdepth::RunConfig{} : cdepth::RunConfig::from_file(o.config);
    if (!o.seed.empty()) cfg.seed = std::stoull(o.seed);
    if (!o.method.empty()) cfg.method = cdepth::method_from_string(o.method);
    if (!o.mode.empty()) {
        if (o.mode == "stereo") cfg.mode = cdepth::SampleMode::stereo;
        else if (o.mode == "sfm") cfg.mode = cdepth::SampleMode::sfm;
        else throw std::invalid_argument("mode must be stereo|sfm");
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual self-supervised depth: pretraining, online adaptation, evaluation"};
    app.require_subcommand(1);

    CommonOpts pre_o, on_o, ev_o, dump_o;
    std::string checkpoint, report_out = "runs/report";
    long stop_after = -1;
    bool resume = false;
    std::string state_stem, dump_dir;
    std::vector<std::string> run_dirs;

    auto* pre = app.add_subcommand("pretrain", "train on the pretraining domains");
    add_common(pre, pre_o);

    auto* onl = app.add_subcommand("online", "run the online adaptation stream");
    add_common(onl, on_o);
    onl->add_option("--checkpoint", checkpoint, "pretraining checkpoint to start from");
    onl->add_option("--stop-after", stop_after, "stop after N online steps")->group("");
    onl->add_flag("--resume", resume, "continue from the saved state in --out")->group("");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on every held-out set");
    add_common(ev, ev_o);
    ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();

    auto* rep = app.add_subcommand("report", "aggregate finished runs into the summary table");
    rep->add_option("--out", report_out, "report output directory");
    rep->add_option("runs", run_dirs, "run output directories")->required();

    auto* dmp = app.add_subcommand("dump-buffer", "export a saved replay buffer as images");
    add_common(dmp, dump_o);
    dmp->add_option("--state", state_stem, "state file stem (without .bin)")->required();
    dmp->add_option("--dir", dump_dir, "destination directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) {
            cdepth::Trainer t(resolve(pre_o));
            t.pretrain();
        } else if (onl->parsed()) {
            cdepth::RunConfig cfg = resolve(on_o);
            cdepth::Trainer t(cfg);
            if (resume) {
                t.resume_online(stop_after);
            } else {
                if (checkpoint.empty()) checkpoint = cfg.out_dir + "/pretrain.ckpt";
                t.run_online(checkpoint, stop_after);
            }
        } else if (ev->parsed()) {
            cdepth::RunConfig cfg = resolve(ev_o);
            cdepth::Trainer t(cfg);
            cdepth::load_checkpoint(checkpoint, t.params());
            std::vector<int> seen;
            for (const auto& blk : t.benchmark().pretrain.blocks)
                if (blk.spec.distribution_id == cfg.online_distribution)
                    seen.push_back(blk.spec.domain_id);
            auto row = t.evaluate(0, "eval", -1, seen);
            for (const auto& [dom, m] : row.per_domain)
                std::printf("domain %d: rmse=%s abs_rel=%s delta1=%s\n", dom,
                            cdepth::format_float(m.rmse).c_str(),
                            cdepth::format_float(m.abs_rel).c_str(),
                            cdepth::format_float(m.delta_1).c_str());
            if (row.current_dist)
                std::printf("current-distribution rmse=%s abs_rel=%s\n",
                            cdepth::format_float(row.current_dist->rmse).c_str(),
                            cdepth::format_float(row.current_dist->abs_rel).c_str());
            if (row.cross_dist)
                std::printf("cross-distribution rmse=%s abs_rel=%s\n",
                            cdepth::format_float(row.cross_dist->rmse).c_str(),
                            cdepth::format_float(row.cross_dist->abs_rel).c_str());
        } else if (rep->parsed()) {
            cdepth::write_report(run_dirs, report_out);
        } else if (dmp->parsed()) {
            cdepth::Trainer t(resolve(dump_o));
            t.load_state(state_stem);
            t.dump_buffer(dump_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
