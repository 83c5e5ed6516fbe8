#include "cdepth/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace cdepth {

namespace {

// depth scale used to turn SfM disparities into warpable depths; the
// evaluation side removes it again through median alignment
constexpr float kSfmDepthScale = 10.0f;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + salt * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::string join_rows(const std::vector<std::string>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r;
        out += '\n';
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << content;
}

void append_metric_cols(std::string& row, const std::optional<MetricSet>& m) {
    if (!m) {
        row += ",,,,,,,";
        return;
    }
    row += "," + format_float(m->rmse) + "," + format_float(m->abs_rel) + "," +
           format_float(m->sq_rel) + "," + format_float(m->log_rmse) + "," +
           format_float(m->delta_1) + "," + format_float(m->delta_2) + "," +
           format_float(m->delta_3);
}

constexpr char kTraceHeader[] = "step,source,loss,mu,var,D,boundary";
constexpr char kReportHeader[] =
    "step,event,online_domain"
    ",current_rmse,current_abs_rel,current_sq_rel,current_log_rmse,current_delta_1,current_delta_2,current_delta_3"
    ",cross_rmse,cross_abs_rel,cross_sq_rel,cross_log_rmse,cross_delta_1,cross_delta_2,cross_delta_3"
    ",adapt_rmse,adapt_abs_rel,adapt_sq_rel,adapt_log_rmse,adapt_delta_1,adapt_delta_2,adapt_delta_3"
    ",crossdom_rmse,crossdom_abs_rel,crossdom_sq_rel,crossdom_log_rmse,crossdom_delta_1,crossdom_delta_2,crossdom_delta_3";
constexpr char kDomainHeader[] =
    "step,domain,distribution,rmse,abs_rel,sq_rel,log_rmse,delta_1,delta_2,delta_3";

}  // namespace

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

const char* method_name(Method m) {
    switch (m) {
        case Method::fine_tune: return "ft";
        case Method::reg_only: return "reg";
        case Method::replay_only: return "rep";
        case Method::proposed: return "prop";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "ft" || s == "fine_tune") return Method::fine_tune;
    if (s == "reg" || s == "reg_only") return Method::reg_only;
    if (s == "rep" || s == "replay_only") return Method::replay_only;
    if (s == "prop" || s == "proposed") return Method::proposed;
    throw std::invalid_argument("unknown method '" + s + "' (expected ft|reg|rep|prop)");
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    RunConfig cfg;
    std::vector<std::string> unknown;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " is not key=value");
        auto strip = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        try {
            if (key == "mode")
                cfg.mode = val == "stereo" ? SampleMode::stereo
                           : val == "sfm" ? SampleMode::sfm
                                          : throw std::invalid_argument("mode must be stereo|sfm");
            else if (key == "method") cfg.method = method_from_string(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "lr") cfg.lr = std::stof(val);
            else if (key == "alpha_loss") cfg.alpha_loss = std::stof(val);
            else if (key == "gamma") cfg.gamma = std::stof(val);
            else if (key == "beta_p") cfg.weights.beta_p = std::stof(val);
            else if (key == "beta_ss") cfg.weights.beta_ss = std::stof(val);
            else if (key == "beta_s") cfg.weights.beta_s = std::stof(val);
            else if (key == "width") cfg.width = std::stoi(val);
            else if (key == "height") cfg.height = std::stoi(val);
            else if (key == "buffer_capacity") cfg.buffer_capacity = std::stoul(val);
            else if (key == "eval_every") cfg.eval_every = std::stoi(val);
            else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
            else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoi(val);
            else if (key == "frames_per_domain") cfg.frames_per_domain = std::stoi(val);
            else if (key == "domains_per_distribution") cfg.domains_per_distribution = std::stoi(val);
            else if (key == "eval_frames_per_domain") cfg.eval_frames_per_domain = std::stoi(val);
            else if (key == "online_distribution") cfg.online_distribution = std::stoi(val);
            else if (key == "replay_reg") cfg.replay_reg = val == "1" || val == "true";
            else if (key == "out_dir") cfg.out_dir = val;
            else unknown.push_back(key);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("config: bad value for key '" + key + "': " + e.what());
        }
    }
    if (!unknown.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw std::runtime_error(msg);
    }
    return cfg;
}

void RunConfig::write_manifest(const std::string& path) const {
    RunConfig def;
    std::ostringstream os;
    os << "mode=" << (mode == SampleMode::stereo ? "stereo" : "sfm") << "\n";
    os << "method=" << method_name(method) << "\n";
    os << "seed=" << seed << "\n";
    auto emit = [&](const char* key, double v, double dv) {
        os << key << "=" << format_float(v);
        if (v != dv) os << "  # non-default (reference value " << format_float(dv) << ")";
        os << "\n";
    };
    emit("lr", lr, def.lr);
    emit("alpha_loss", alpha_loss, def.alpha_loss);
    emit("gamma", gamma, def.gamma);
    emit("beta_p", weights.beta_p, def.weights.beta_p);
    emit("beta_ss", weights.beta_ss, def.weights.beta_ss);
    emit("beta_s", weights.beta_s, def.weights.beta_s);
    os << "width=" << width << "\nheight=" << height << "\n";
    os << "buffer_capacity=" << buffer_capacity << "\n";
    os << "eval_every=" << eval_every << "\n";
    os << "checkpoint_every=" << checkpoint_every << "\n";
    os << "pretrain_epochs=" << pretrain_epochs << "\n";
    os << "frames_per_domain=" << frames_per_domain << "\n";
    os << "domains_per_distribution=" << domains_per_distribution << "\n";
    os << "eval_frames_per_domain=" << eval_frames_per_domain << "\n";
    os << "online_distribution=" << online_distribution << "\n";
    os << "replay_reg=" << (replay_reg ? 1 : 0) << "\n";
    os << "effective_gamma=" << format_float(effective_gamma()) << "\n";
    os << "replay_enabled=" << (replay_enabled() ? 1 : 0) << "\n";
    write_file(path, os.str());
}

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
    BenchmarkOptions opts;
    opts.mode = cfg_.mode;
    opts.width = cfg_.width;
    opts.height = cfg_.height;
    opts.domains_per_distribution = cfg_.domains_per_distribution;
    opts.frames_per_domain = cfg_.frames_per_domain;
    opts.eval_frames_per_domain = cfg_.eval_frames_per_domain;
    opts.online_distribution = cfg_.online_distribution;
    bench_ = make_benchmark(cfg_.seed, opts);
    build_models();
    stats_.alpha = cfg_.alpha_loss;
    buffer_ = std::make_unique<ReplayBuffer>(cfg_.buffer_capacity, mix_seed(cfg_.seed, 3),
                                             mix_seed(cfg_.seed, 4));
    fs::create_directories(cfg_.out_dir);
}

void Trainer::build_models() {
    disp_ = build_disparity_net(cfg_.height, cfg_.width, mix_seed(cfg_.seed, 1));
    params_ = disp_.params();
    if (cfg_.mode == SampleMode::sfm) {
        pose_ = build_pose_net(cfg_.height, cfg_.width, mix_seed(cfg_.seed, 11));
        for (auto& item : pose_.params().items) params_.add(item.first, item.second);
    }
    adam_.lr = cfg_.lr;
    adam_init(adam_, params_);
    snap_ = snapshot(params_);
}

TensorPtr Trainer::task_loss_frames(Tape& tape, SampleMode mode, const TensorPtr& frame_a,
                                    const TensorPtr& frame_b) {
    if (mode == SampleMode::stereo) {
        auto d = predict_disparity(tape, disp_, frame_a);
        auto warp = warp_stereo(tape, frame_a, d);
        return combined_loss(tape, warp.reconstructed, frame_b, d, frame_a, warp.valid_mask,
                             cfg_.weights)
            .total;
    }
    // SfM: reconstruct the target from the reference and vice versa,
    // averaged
    auto direction = [&](const TensorPtr& target, const TensorPtr& reference) {
        auto d = predict_disparity(tape, disp_, target);
        auto depth = disparity_to_depth(tape, d, kSfmDepthScale, 1.0f);
        auto cam = predict_pose(tape, pose_, target, reference);
        auto warp = warp_sfm(tape, reference, depth, cam.cam_vec);
        return combined_loss(tape, warp.reconstructed, target, d, target, warp.valid_mask,
                             cfg_.weights)
            .total;
    };
    auto fwd = direction(frame_a, frame_b);
    auto bwd = direction(frame_b, frame_a);
    return mul_scalar(tape, add(tape, fwd, bwd), 0.5f);
}

TensorPtr Trainer::task_loss(Tape& tape, const LabeledSample& sample) {
    return task_loss_frames(tape, sample.mode, sample.frame_a, sample.frame_b);
}

void Trainer::pretrain() {
    std::vector<std::pair<int, int>> frames;  // (block index, frame index)
    for (std::size_t b = 0; b < bench_.pretrain.blocks.size(); ++b) {
        const auto& blk = bench_.pretrain.blocks[b];
        int lo = cfg_.mode == SampleMode::sfm ? std::max(blk.first_frame, 1) : blk.first_frame;
        for (int f = lo; f < blk.first_frame + blk.frame_count; ++f)
            frames.emplace_back(static_cast<int>(b), f);
    }
    std::mt19937_64 stream_rng(mix_seed(cfg_.seed, 2));

    std::vector<std::string> log_rows;
    log_rows.emplace_back("step,loss");
    long step = 0;
    Tape tape;
    for (int epoch = 0; epoch < cfg_.pretrain_epochs; ++epoch) {
        std::shuffle(frames.begin(), frames.end(), stream_rng);
        for (auto [b, f] : frames) {
            auto sample = render_sample(cfg_.mode, bench_.pretrain.blocks[b].spec, f);
            tape.clear();
            auto loss = task_loss(tape, sample);
            tape.backward(loss);
            adam_step(params_, adam_);
            log_rows.push_back(std::to_string(step) + "," + format_float(loss->data[0]));
            ++step;
        }
    }
    snap_ = snapshot(params_);
    save_checkpoint(cfg_.out_dir + "/pretrain.ckpt", params_, &adam_);
    write_file(cfg_.out_dir + "/pretrain_log.csv", join_rows(log_rows));
    cfg_.write_manifest(cfg_.out_dir + "/config_manifest.txt");
}

std::vector<int> Trainer::seen_before_for(int upcoming_block) const {
    std::vector<int> seen;
    for (const auto& blk : bench_.pretrain.blocks)
        if (blk.spec.distribution_id == cfg_.online_distribution)
            seen.push_back(blk.spec.domain_id);
    for (int b = 0; b < upcoming_block && b < static_cast<int>(bench_.online.blocks.size()); ++b)
        seen.push_back(bench_.online.blocks[b].spec.domain_id);
    return seen;
}

ProtocolRow Trainer::evaluate(long step, const std::string& event, int current_online_domain,
                              const std::vector<int>& seen_before) {
    std::vector<std::pair<int, MetricSet>> per_domain;
    std::vector<std::pair<int, int>> domain_dist;
    for (const auto& es : bench_.eval_sets) {
        std::vector<MetricSet> frame_metrics;
        for (int f : es.frame_indices) {
            auto sample = render_sample(cfg_.mode, es.spec, f);
            Tape scratch;
            auto d = predict_disparity(scratch, disp_, sample.frame_a);
            auto pred_depth =
                cfg_.mode == SampleMode::stereo
                    ? disparity_to_depth(scratch, d, sample.focal, sample.baseline)
                    : disparity_to_depth(scratch, d, kSfmDepthScale, 1.0f);
            Align align = cfg_.mode == SampleMode::stereo ? Align::none : Align::median;
            frame_metrics.push_back(
                compute_metrics(*pred_depth, *sample.gt_depth, *sample.gt_valid, align));
        }
        per_domain.emplace_back(es.spec.domain_id, mean_metrics(frame_metrics));
        domain_dist.emplace_back(es.spec.domain_id, es.spec.distribution_id);
    }
    return aggregate_protocol(step, event, per_domain, domain_dist, cfg_.online_distribution,
                              current_online_domain, seen_before);
}

namespace {

struct PlanCursor {
    int block = 0;
    int offset = 0;
};

PlanCursor cursor_at(const StreamPlan& plan, long step, SampleMode mode) {
    PlanCursor c;
    long remaining = step;
    for (std::size_t b = 0; b < plan.blocks.size(); ++b) {
        int lo = mode == SampleMode::sfm ? std::max(plan.blocks[b].first_frame, 1)
                                         : plan.blocks[b].first_frame;
        int count = plan.blocks[b].first_frame + plan.blocks[b].frame_count - lo;
        if (remaining < count) {
            c.block = static_cast<int>(b);
            c.offset = lo + static_cast<int>(remaining);
            return c;
        }
        remaining -= count;
    }
    c.block = static_cast<int>(plan.blocks.size());
    return c;
}

long plan_steps(const StreamPlan& plan, SampleMode mode) {
    long n = 0;
    for (const auto& blk : plan.blocks) {
        int lo = mode == SampleMode::sfm ? std::max(blk.first_frame, 1) : blk.first_frame;
        n += blk.first_frame + blk.frame_count - lo;
    }
    return n;
}

}  // namespace

void Trainer::online_loop(long stop_after, bool resumed) {
    const long total = plan_steps(bench_.online, cfg_.mode);
    const float gamma_eff = cfg_.effective_gamma();

    if (!resumed) {
        trace_rows_.clear();
        report_rows_.clear();
        domain_rows_.clear();
        protocol_rows_.clear();
        trace_rows_.emplace_back(kTraceHeader);
        report_rows_.emplace_back(kReportHeader);
        domain_rows_.emplace_back(kDomainHeader);
        step_ = 0;
        stats_ = LossStats{};
        stats_.alpha = cfg_.alpha_loss;
        snap_ = snapshot(params_);
        // post-pretraining baseline; no online domain trained yet
        auto row0 = evaluate(0, "initial", -1, seen_before_for(0));
        record_row(row0);
    }

    Tape tape;
    while (step_ < total) {
        if (stop_after >= 0 && step_ >= stop_after) {
            save_state(cfg_.out_dir + "/state_latest");
            flush_outputs();
            return;
        }
        PlanCursor cur = cursor_at(bench_.online, step_, cfg_.mode);
        const auto& blk = bench_.online.blocks[cur.block];

        StepSource source = cfg_.replay_enabled() ? buffer_->choose_source() : StepSource::online;
        tape.clear();
        TensorPtr loss;
        float d_val = 0.0f;
        LabeledSample online_sample;
        if (source == StepSource::online) {
            online_sample = render_sample(cfg_.mode, blk.spec, cur.offset);
            loss = task_loss(tape, online_sample);
            float lval = loss->data[0];
            d_val = mahalanobis(stats_, lval);
            trace_rows_.push_back(std::to_string(step_) + ",online," + format_float(lval) + "," +
                                  format_float(stats_.mu) + "," + format_float(stats_.var) + "," +
                                  format_float(d_val) + "," + (is_boundary(d_val) ? "1" : "0"));
            update(stats_, lval);
        } else {
            const ReplaySample& rs = buffer_->draw();
            loss = task_loss_frames(tape, rs.mode, rs.frame_a, rs.frame_b);
            float lval = loss->data[0];
            d_val = cfg_.replay_reg ? mahalanobis(stats_, lval) : 0.0f;
            trace_rows_.push_back(std::to_string(step_) + ",replay," + format_float(lval) + "," +
                                  format_float(stats_.mu) + "," + format_float(stats_.var) + "," +
                                  format_float(d_val) + "," + (is_boundary(d_val) ? "1" : "0"));
            // replay steps do not update the detector and are never
            // re-admitted
        }

        TensorPtr objective = loss;
        if (gamma_eff > 0.0f && d_val > 0.0f) {
            auto reg = reg_loss(tape, params_, snap_);
            objective = total_loss(tape, loss, d_val, reg, gamma_eff);
        }
        tape.backward(objective);
        // the penalty anchors to the parameter values of the previous
        // optimizer step, so the snapshot is taken just before the step
        snap_ = snapshot(params_);
        adam_step(params_, adam_);

        if (source == StepSource::online && cfg_.replay_enabled() && stats_.warmed_up() &&
            is_boundary(d_val)) {
            ReplaySample rs;
            rs.mode = online_sample.mode;
            rs.frame_a = online_sample.frame_a;
            rs.frame_b = online_sample.frame_b;
            rs.source_domain = online_sample.domain_id;
            rs.admitted_step = step_;
            rs.admitted_d = d_val;
            buffer_->maybe_store(std::move(rs), d_val);
        }

        ++step_;

        bool transition = false;
        if (step_ < total) {
            PlanCursor next = cursor_at(bench_.online, step_, cfg_.mode);
            transition = next.block != cur.block;
        } else {
            transition = true;
        }
        bool cadence = cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0;
        if (transition || cadence) {
            auto row = evaluate(step_, transition ? "transition" : "cadence",
                                blk.spec.domain_id, seen_before_for(cur.block));
            record_row(row);
        }
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && step_ < total)
            save_state(cfg_.out_dir + "/state_latest");
    }

    save_checkpoint(cfg_.out_dir + "/final.ckpt", params_, &adam_);
    flush_outputs();
}

void Trainer::record_row(const ProtocolRow& row) {
    protocol_rows_.push_back(row);
    std::string r = std::to_string(row.step) + "," + row.event + "," +
                    std::to_string(row.online_domain);
    append_metric_cols(r, row.current_dist);
    append_metric_cols(r, row.cross_dist);
    append_metric_cols(r, row.online_adapt);
    append_metric_cols(r, row.cross_domain);
    report_rows_.push_back(r);
    for (const auto& [dom, m] : row.per_domain) {
        int dist = dom / cfg_.domains_per_distribution;
        std::string dr = std::to_string(row.step) + "," + std::to_string(dom) + "," +
                         std::to_string(dist);
        append_metric_cols(dr, m);
        domain_rows_.push_back(dr);
    }
}

void Trainer::flush_outputs() {
    write_file(cfg_.out_dir + "/detector_trace.csv", join_rows(trace_rows_));
    write_file(cfg_.out_dir + "/report.csv", join_rows(report_rows_));
    write_file(cfg_.out_dir + "/domain_metrics.csv", join_rows(domain_rows_));
    std::ostringstream meta;
    meta << "method=" << method_name(cfg_.method) << "\nseed=" << cfg_.seed << "\nmode="
         << (cfg_.mode == SampleMode::stereo ? "stereo" : "sfm") << "\nsteps=" << step_ << "\n";
    write_file(cfg_.out_dir + "/run_meta.txt", meta.str());
    cfg_.write_manifest(cfg_.out_dir + "/config_manifest.txt");
}

OnlineResult Trainer::run_online(const std::string& checkpoint_path, long stop_after) {
    if (!fs::exists(checkpoint_path))
        throw std::runtime_error("online: checkpoint not found: " + checkpoint_path);
    load_checkpoint(checkpoint_path, params_, &adam_);
    adam_.lr = cfg_.lr;
    online_loop(stop_after, false);
    return {protocol_rows_, step_};
}

OnlineResult Trainer::resume_online(long stop_after) {
    load_state(cfg_.out_dir + "/state_latest");
    online_loop(stop_after, true);
    return {protocol_rows_, step_};
}

namespace {

void write_str(std::ostream& os, const std::string& s) {
    std::uint64_t n = s.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(s.data(), static_cast<std::streamsize>(n));
}

std::string read_str(std::istream& is) {
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void write_tensor(std::ostream& os, const TensorPtr& t) {
    std::uint32_t rank = static_cast<std::uint32_t>(t->shape.size());
    os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int d : t->shape) {
        std::uint32_t u = static_cast<std::uint32_t>(d);
        os.write(reinterpret_cast<const char*>(&u), sizeof(u));
    }
    os.write(reinterpret_cast<const char*>(t->data.data()),
             static_cast<std::streamsize>(t->data.size() * sizeof(float)));
}

TensorPtr read_tensor(std::istream& is) {
    std::uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    std::vector<int> shape(rank);
    for (auto& d : shape) {
        std::uint32_t u = 0;
        is.read(reinterpret_cast<char*>(&u), sizeof(u));
        d = static_cast<int>(u);
    }
    auto t = make_tensor(shape);
    is.read(reinterpret_cast<char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    return t;
}

void write_float_vecs(std::ostream& os, const std::vector<std::vector<float>>& vv) {
    std::uint64_t n = vv.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& v : vv) {
        std::uint64_t m = v.size();
        os.write(reinterpret_cast<const char*>(&m), sizeof(m));
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(m * sizeof(float)));
    }
}

std::vector<std::vector<float>> read_float_vecs(std::istream& is) {
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::vector<std::vector<float>> vv(n);
    for (auto& v : vv) {
        std::uint64_t m = 0;
        is.read(reinterpret_cast<char*>(&m), sizeof(m));
        v.resize(m);
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(m * sizeof(float)));
    }
    return vv;
}

constexpr char kStateMagic[8] = {'C', 'D', 'E', 'P', 'S', 'T', 'A', 'T'};

}  // namespace

void Trainer::save_state(const std::string& stem) {
    save_checkpoint(stem + ".ckpt", params_, &adam_);
    std::ofstream os(stem + ".bin", std::ios::binary);
    if (!os) throw std::runtime_error("save_state: cannot open " + stem + ".bin");
    os.write(kStateMagic, sizeof(kStateMagic));
    std::uint64_t step = static_cast<std::uint64_t>(step_);
    os.write(reinterpret_cast<const char*>(&step), sizeof(step));
    os.write(reinterpret_cast<const char*>(&stats_.mu), sizeof(stats_.mu));
    os.write(reinterpret_cast<const char*>(&stats_.var), sizeof(stats_.var));
    os.write(reinterpret_cast<const char*>(&stats_.alpha), sizeof(stats_.alpha));
    std::int64_t count = stats_.count;
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    write_float_vecs(os, snap_.theta_prev);
    write_float_vecs(os, snap_.omega);

    const auto& items = buffer_->items();
    std::uint64_t n = items.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& rs : items) {
        std::uint8_t mode = rs.mode == SampleMode::stereo ? 0 : 1;
        os.write(reinterpret_cast<const char*>(&mode), sizeof(mode));
        std::int32_t dom = rs.source_domain;
        os.write(reinterpret_cast<const char*>(&dom), sizeof(dom));
        std::int64_t astep = rs.admitted_step;
        os.write(reinterpret_cast<const char*>(&astep), sizeof(astep));
        os.write(reinterpret_cast<const char*>(&rs.admitted_d), sizeof(rs.admitted_d));
        write_tensor(os, rs.frame_a);
        write_tensor(os, rs.frame_b);
    }
    write_str(os, buffer_->rng_state());
    write_str(os, join_rows(trace_rows_));
    write_str(os, join_rows(report_rows_));
    write_str(os, join_rows(domain_rows_));
    if (!os) throw std::runtime_error("save_state: write failed for " + stem);
}

void Trainer::load_state(const std::string& stem) {
    load_checkpoint(stem + ".ckpt", params_, &adam_);
    std::ifstream is(stem + ".bin", std::ios::binary);
    if (!is) throw std::runtime_error("load_state: cannot open " + stem + ".bin");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (std::memcmp(magic, kStateMagic, sizeof(kStateMagic)) != 0)
        throw std::runtime_error("load_state: bad magic in " + stem + ".bin");
    std::uint64_t step = 0;
    is.read(reinterpret_cast<char*>(&step), sizeof(step));
    step_ = static_cast<long>(step);
    is.read(reinterpret_cast<char*>(&stats_.mu), sizeof(stats_.mu));
    is.read(reinterpret_cast<char*>(&stats_.var), sizeof(stats_.var));
    is.read(reinterpret_cast<char*>(&stats_.alpha), sizeof(stats_.alpha));
    std::int64_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof(count));
    stats_.count = count;
    snap_.theta_prev = read_float_vecs(is);
    snap_.omega = read_float_vecs(is);

    buffer_ = std::make_unique<ReplayBuffer>(cfg_.buffer_capacity, 0, 0);
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        ReplaySample rs;
        std::uint8_t mode = 0;
        is.read(reinterpret_cast<char*>(&mode), sizeof(mode));
        rs.mode = mode == 0 ? SampleMode::stereo : SampleMode::sfm;
        std::int32_t dom = 0;
        is.read(reinterpret_cast<char*>(&dom), sizeof(dom));
        rs.source_domain = dom;
        std::int64_t astep = 0;
        is.read(reinterpret_cast<char*>(&astep), sizeof(astep));
        rs.admitted_step = astep;
        is.read(reinterpret_cast<char*>(&rs.admitted_d), sizeof(rs.admitted_d));
        rs.frame_a = read_tensor(is);
        rs.frame_b = read_tensor(is);
        // bypass the admission threshold: these items already passed it
        buffer_->restore(std::move(rs));
    }
    buffer_->set_rng_state(read_str(is));

    auto split_rows = [](const std::string& blob) {
        std::vector<std::string> rows;
        std::istringstream ss(blob);
        std::string line;
        while (std::getline(ss, line)) rows.push_back(line);
        return rows;
    };
    trace_rows_ = split_rows(read_str(is));
    report_rows_ = split_rows(read_str(is));
    domain_rows_ = split_rows(read_str(is));
    if (!is) throw std::runtime_error("load_state: truncated " + stem + ".bin");
}

void Trainer::dump_buffer(const std::string& dir) const {
    fs::create_directories(dir);
    std::vector<std::string> index;
    index.emplace_back("item,mode,source_domain,admitted_step,admitted_d,frame_a,frame_b");
    const auto& items = buffer_->items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& rs = items[i];
        std::string fa = "item_" + std::to_string(i) + "_a.ppm";
        std::string fb = "item_" + std::to_string(i) + "_b.ppm";
        write_ppm(dir + "/" + fa, *rs.frame_a);
        write_ppm(dir + "/" + fb, *rs.frame_b);
        index.push_back(std::to_string(i) + "," +
                        (rs.mode == SampleMode::stereo ? "stereo" : "sfm") + "," +
                        std::to_string(rs.source_domain) + "," +
                        std::to_string(rs.admitted_step) + "," + format_float(rs.admitted_d) +
                        "," + fa + "," + fb);
    }
    write_file(dir + "/index.csv", join_rows(index));
}

void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    struct Run {
        Method method;
        std::uint64_t seed;
        std::vector<std::vector<std::string>> report;  // parsed CSV cells
    };
    std::vector<Run> runs;
    for (const auto& dir : run_dirs) {
        Run r;
        {
            std::ifstream meta(dir + "/run_meta.txt");
            if (!meta) throw std::runtime_error("report: missing run_meta.txt in " + dir);
            std::string line;
            r.method = Method::fine_tune;
            r.seed = 0;
            while (std::getline(meta, line)) {
                if (line.rfind("method=", 0) == 0) r.method = method_from_string(line.substr(7));
                if (line.rfind("seed=", 0) == 0) r.seed = std::stoull(line.substr(5));
            }
        }
        std::ifstream rep(dir + "/report.csv");
        if (!rep) throw std::runtime_error("report: missing report.csv in " + dir);
        std::string line;
        bool header = true;
        while (std::getline(rep, line)) {
            if (header) {
                header = false;
                continue;
            }
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            cells.resize(31);
            r.report.push_back(std::move(cells));
        }
        runs.push_back(std::move(r));
    }

    fs::create_directories(out_dir);

    // Final four-way table, Table-7-style row order.
    const Method order[] = {Method::fine_tune, Method::reg_only, Method::replay_only,
                            Method::proposed};
    // column offsets of rmse / abs_rel inside a report row per category
    struct Cat { const char* name; int rmse_col; int abs_rel_col; };
    const Cat cats[] = {{"current", 3, 4}, {"cross", 10, 11}, {"adapt", 17, 18}, {"crossdom", 24, 25}};

    std::vector<std::string> table;
    table.emplace_back(
        "method,metric,current_dist,cross_dist,online_adapt,cross_domain");
    for (Method m : order) {
        std::vector<const Run*> group;
        for (const auto& r : runs)
            if (r.method == m) group.push_back(&r);
        if (group.empty()) continue;
        for (const char* metric : {"rmse", "abs_rel"}) {
            std::string row = std::string(method_name(m)) + "," + metric;
            for (const auto& cat : cats) {
                int col = std::string(metric) == "rmse" ? cat.rmse_col : cat.abs_rel_col;
                std::vector<double> vals;
                for (const Run* r : group) {
                    if (r->report.empty()) continue;
                    const auto& last = r->report.back();
                    if (!last[col].empty()) vals.push_back(std::stod(last[col]));
                }
                if (vals.empty()) {
                    row += ",";
                    continue;
                }
                double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
                if (vals.size() > 1) {
                    double sq = 0.0;
                    for (double v : vals) sq += (v - mean) * (v - mean);
                    double sd = std::sqrt(sq / (vals.size() - 1));
                    row += "," + format_float(mean) + " +- " + format_float(sd);
                } else {
                    row += "," + format_float(mean);
                }
            }
            table.push_back(row);
        }
    }
    write_file(out_dir + "/summary_table.csv", join_rows(table));

    // Normalized evolution curves against the fine-tune baseline, first
    // seed of each group.
    const Run* baseline = nullptr;
    for (const auto& r : runs)
        if (r.method == Method::fine_tune) {
            baseline = &r;
            break;
        }
    if (!baseline) {
        write_file(out_dir + "/curves_warning.txt",
                   "no fine-tune baseline run given; normalized curves omitted\n");
        return;
    }
    auto series = [&](const Run& r) {
        std::vector<std::array<double, 3>> pts;  // step, current rmse, cross rmse
        for (const auto& row : r.report) {
            if (row[3].empty() || row[10].empty()) continue;
            pts.push_back({std::stod(row[0]), std::stod(row[3]), std::stod(row[10])});
        }
        return pts;
    };
    auto base_pts = series(*baseline);
    double max_cur = 0.0, max_cross = 0.0;
    for (const auto& p : base_pts) {
        max_cur = std::max(max_cur, p[1]);
        max_cross = std::max(max_cross, p[2]);
    }
    if (max_cur == 0.0 || max_cross == 0.0)
        throw std::runtime_error("report: fine-tune baseline RMSE maximum is zero");

    std::vector<std::string> curves;
    curves.emplace_back("method,seed,step,current_rmse_norm,cross_rmse_norm");
    for (const auto& r : runs) {
        for (const auto& p : series(r)) {
            curves.push_back(std::string(method_name(r.method)) + "," + std::to_string(r.seed) +
                             "," + format_float(p[0]) + "," + format_float(p[1] / max_cur) + "," +
                             format_float(p[2] / max_cross));
        }
    }
    write_file(out_dir + "/curves_norm.csv", join_rows(curves));
}

}  // namespace cdepth
