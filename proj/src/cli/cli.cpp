#include "knights/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "knights/errors.hpp"
#include "knights/flow/tvl1.hpp"
#include "knights/io/codecs.hpp"
#include "knights/io/config.hpp"
#include "knights/io/manifest.hpp"
#include "knights/io/reports.hpp"
#include "knights/mhpa/attention.hpp"
#include "knights/pretrain/harness.hpp"
#include "knights/tclr/gradcheck.hpp"
#include "knights/tclr/losses.hpp"
#include "knights/tta/aggregate.hpp"
#include "knights/tta/sampling.hpp"

namespace knights::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

// Raised when a verification command finishes but its check fails.
class CheckFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    io::write_file(path, io::Bytes(text.begin(), text.end()));
}

// Writes `doc` to `path` when given, else to `out`.
void emit_json(const Json& doc, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << doc.dump(2) << "\n";
    } else {
        write_text(path, doc.dump(2) + "\n");
    }
}

struct ManifestSink {
    std::string path;  // --manifest
    io::RunManifest manifest;

    // Manifest goes to --manifest, else next to the primary output, else to `err`.
    void finish(const std::string& primary_output, std::ostream& err) const {
        const Json j = manifest.to_json();
        std::string target = path;
        if (target.empty() && !primary_output.empty()) target = primary_output + ".manifest.json";
        if (target.empty()) {
            err << j.dump() << "\n";
        } else {
            write_text(target, j.dump(2) + "\n");
        }
    }
};

// ---- config file injection ----------------------------------------------

std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    for (const auto& a : args) {
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
}

// Appends `--key value...` for every config entry whose flag is absent from
// the command line, so explicit flags win over the file.
std::vector<std::string> apply_config(std::vector<std::string> args) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (!path) return args;
    const io::KeyValueConfig cfg = io::KeyValueConfig::load(*path);
    std::vector<std::string> extra;
    for (const auto& [key, value] : cfg.entries()) {
        const std::string flag = "--" + flag_name(key);
        if (has_flag(args, flag)) continue;
        extra.push_back(flag);
        std::istringstream words(value);
        std::string w;
        while (words >> w) extra.push_back(w);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = 0;
    if (const char* env = std::getenv("KNIGHTS_THREADS")) {
        try {
            n = static_cast<std::size_t>(std::stoul(env));
        } catch (const std::exception&) {
            throw ParameterError("KNIGHTS_THREADS must be a non-negative integer, got '" + std::string(env) + "'");
        }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return std::max<std::size_t>(1, std::min(n, jobs));
}

Json flow_params_json(const flow::Tvl1Params& p) {
    Json j;
    j["lambda"] = p.lambda;
    j["theta"] = p.theta;
    j["tau"] = p.tau_step;
    j["scales"] = p.n_scales;
    j["zoom"] = p.zoom;
    j["warps"] = p.n_warps;
    j["iters"] = p.max_iters;
    j["epsilon"] = p.epsilon;
    j["median_filter"] = p.median_filter;
    j["intensity_scale"] = p.intensity_scale;
    return j;
}

void add_solver_flags(CLI::App* cmd, flow::Tvl1Params& p) {
    cmd->add_option("--lambda", p.lambda, "Data term weight (8-bit intensity units)")->capture_default_str();
    cmd->add_option("--theta", p.theta, "Coupling between u and the auxiliary field")->capture_default_str();
    cmd->add_option("--tau", p.tau_step, "Dual step size, <= 0.125/theta")->capture_default_str();
    cmd->add_option("--scales", p.n_scales, "Pyramid levels")->capture_default_str();
    cmd->add_option("--zoom", p.zoom, "Downscale factor between levels")->capture_default_str();
    cmd->add_option("--warps", p.n_warps, "Warps per level")->capture_default_str();
    cmd->add_option("--iters", p.max_iters, "Max inner iterations per warp")->capture_default_str();
    cmd->add_option("--epsilon", p.epsilon, "Stop when mean |du| falls below this")->capture_default_str();
    cmd->add_option("--median-filter", p.median_filter, "3x3 median on the flow after each warp")
        ->capture_default_str();
    cmd->add_option("--intensity-scale", p.intensity_scale, "Multiplier applied to [0,1] intensities")
        ->capture_default_str();
}

// ---- flow ---------------------------------------------------------------

struct FlowOptions {
    std::string i0, i1, out, dir, out_dir, manifest;
    flow::Tvl1Params params;
};

struct FlowSummary {
    double energy_before;
    double energy_after;
    double mean_magnitude;
};

FlowSummary flow_pair(const fs::path& a, const fs::path& b, const fs::path& out, const flow::Tvl1Params& params) {
    const flow::GrayImage i0 = io::read_pgm(a);
    const flow::GrayImage i1 = io::read_pgm(b);
    const flow::FlowField u = flow::compute_flow(i0, i1, params);
    io::write_flo(out, u);
    const double lam = flow::effective_lambda(params);
    return {flow::energy(i0, i1, flow::FlowField(i0.width(), i0.height()), lam), flow::energy(i0, i1, u, lam),
            flow::mean_magnitude(u)};
}

Json summary_json(const FlowSummary& s) {
    return {{"energy_before", s.energy_before}, {"energy_after", s.energy_after}, {"mean_magnitude", s.mean_magnitude}};
}

void run_flow(const FlowOptions& o, std::ostream& out, std::ostream& err) {
    o.params.validate();
    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "flow";
    sink.manifest.params = flow_params_json(o.params);

    if (!o.dir.empty()) {
        if (o.out_dir.empty()) throw ParameterError("flow: --dir needs --out-dir");
        if (!fs::is_directory(o.dir)) throw IoError("flow: '" + o.dir + "' is not a directory");
        std::vector<fs::path> frames;
        for (const auto& entry : fs::directory_iterator(o.dir)) {
            const auto ext = entry.path().extension().string();
            if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) frames.push_back(entry.path());
        }
        std::sort(frames.begin(), frames.end());
        if (frames.size() < 2) throw IoError("flow: '" + o.dir + "' holds fewer than two frames");
        fs::create_directories(o.out_dir);

        const std::size_t jobs = frames.size() - 1;
        std::vector<std::optional<FlowSummary>> results(jobs);
        std::vector<std::string> errors(jobs);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k = next++; k < jobs; k = next++) {
                try {
                    results[k] = flow_pair(frames[k], frames[k + 1],
                                           fs::path(o.out_dir) / (frames[k].stem().string() + ".flo"), o.params);
                } catch (const std::exception& e) {
                    errors[k] = e.what();
                }
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < worker_count(jobs); ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        Json report = Json::array();
        for (std::size_t k = 0; k < jobs; ++k) {
            if (!errors[k].empty()) throw IoError(errors[k]);
            const fs::path flo = fs::path(o.out_dir) / (frames[k].stem().string() + ".flo");
            Json entry = summary_json(*results[k]);
            entry["i0"] = frames[k].string();
            entry["i1"] = frames[k + 1].string();
            entry["out"] = flo.string();
            report.push_back(std::move(entry));
            sink.manifest.inputs.push_back(frames[k]);
            sink.manifest.outputs.push_back(flo);
        }
        sink.manifest.inputs.push_back(frames.back());
        out << report.dump(2) << "\n";
        sink.finish((fs::path(o.out_dir) / "flow").string(), err);
        return;
    }

    if (o.i0.empty() || o.i1.empty() || o.out.empty()) throw ParameterError("flow: needs --i0, --i1 and --out");
    const FlowSummary s = flow_pair(o.i0, o.i1, o.out, o.params);
    out << "energy before: " << io::format_double(s.energy_before) << "\n"
        << "energy after:  " << io::format_double(s.energy_after) << "\n";
    sink.manifest.inputs = {o.i0, o.i1};
    sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
}

// ---- energy -------------------------------------------------------------

struct EnergyOptions {
    std::string i0, i1, flow, out, manifest;
    double lambda = 0.15;
    double intensity_scale = 255.0;
};

void run_energy(const EnergyOptions& o, std::ostream& out, std::ostream& err) {
    const flow::GrayImage i0 = io::read_pgm(o.i0);
    const flow::GrayImage i1 = io::read_pgm(o.i1);
    const flow::FlowField u = o.flow.empty() ? flow::FlowField(i0.width(), i0.height()) : io::read_flo(o.flow);
    const double lam = o.lambda * o.intensity_scale;
    if (!(lam > 0.0)) throw ParameterError("energy: lambda and intensity scale must be > 0");
    Json doc{{"energy", flow::energy(i0, i1, u, lam)}, {"lambda", o.lambda}, {"intensity_scale", o.intensity_scale}};
    emit_json(doc, o.out, out);

    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "energy";
    sink.manifest.params = {{"lambda", o.lambda}, {"intensity_scale", o.intensity_scale}};
    sink.manifest.inputs = {o.i0, o.i1};
    if (!o.flow.empty()) sink.manifest.inputs.push_back(o.flow);
    if (!o.out.empty()) sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
}

// ---- tclr-loss ----------------------------------------------------------

struct LossOptions {
    std::string embeddings, twins, locals, locals_twin, global_slices, local_anchors, out, manifest;
    std::string loss = "combined";
    double tau = 0.1;
    std::vector<double> weights{1.0, 1.0, 1.0};
};

void run_tclr_loss(const LossOptions& o, std::ostream& out, std::ostream& err) {
    const tclr::Similarity h(o.tau);
    if (o.weights.size() != 3) throw ParameterError("tclr-loss: --weights takes exactly three values");
    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "tclr-loss";
    sink.manifest.params = {{"loss", o.loss}, {"tau", o.tau}, {"weights", o.weights}};

    auto clip_set = [&] {
        for (const auto* p : {&o.locals, &o.locals_twin, &o.global_slices, &o.local_anchors}) {
            if (p->empty()) {
                throw ParameterError("tclr-loss: temporal losses need --locals, --locals-twin, --global-slices "
                                     "and --local-anchors");
            }
            sink.manifest.inputs.push_back(*p);
        }
        return tclr::TemporalClipSet(io::read_emb1(o.locals), io::read_emb1(o.locals_twin),
                                     io::read_emb1(o.global_slices), io::read_emb1(o.local_anchors));
    };
    auto batch = [&] {
        if (o.embeddings.empty() || o.twins.empty()) {
            throw ParameterError("tclr-loss: instance loss needs --embeddings and --twins");
        }
        sink.manifest.inputs.push_back(o.embeddings);
        sink.manifest.inputs.push_back(o.twins);
        return tclr::EmbeddingBatch(io::read_emb1(o.embeddings), io::read_emb1(o.twins));
    };

    tclr::LossOutput result;
    if (o.loss == "ic") {
        result = tclr::instance_contrastive_loss(batch(), h);
    } else if (o.loss == "ll") {
        result = tclr::local_local_loss(clip_set(), h);
    } else if (o.loss == "gl") {
        result = tclr::global_local_loss(clip_set(), h);
    } else if (o.loss == "combined") {
        const tclr::EmbeddingBatch b = batch();
        std::vector<tclr::TemporalClipSet> sets;
        if (!o.locals.empty()) sets.push_back(clip_set());
        result = tclr::combined_tclr_loss(b, sets, h, {o.weights[0], o.weights[1], o.weights[2]});
    } else {
        throw ParameterError("tclr-loss: --loss must be ic, ll, gl or combined");
    }
    emit_json(io::loss_report(result), o.out, out);
    if (!o.out.empty()) sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
}

// ---- tclr-gradcheck -----------------------------------------------------

struct GradcheckOptions {
    std::size_t trials = 50;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double loss_tolerance = 1e-5;
    double encoder_tolerance = 1e-4;
    std::string out, manifest;
};

void run_gradcheck(const GradcheckOptions& o, std::ostream& out, std::ostream& err) {
    if (o.trials == 0) throw ParameterError("tclr-gradcheck: --trials must be >= 1");
    if (!(o.step > 0.0)) throw ParameterError("tclr-gradcheck: --step must be > 0");
    const tclr::GradCheckReport r = tclr::run_gradient_check(o.trials, o.seed, o.step);
    const bool pass = r.instance < o.loss_tolerance && r.local_local < o.loss_tolerance &&
                      r.global_local < o.loss_tolerance && r.encoder < o.encoder_tolerance;
    Json doc{{"trials", r.trials},
             {"max_rel_error",
              {{"instance", r.instance},
               {"local_local", r.local_local},
               {"global_local", r.global_local},
               {"encoder", r.encoder}}},
             {"pass", pass}};
    emit_json(doc, o.out, out);

    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "tclr-gradcheck";
    sink.manifest.params = {{"trials", o.trials}, {"seed", o.seed}, {"step", o.step}};
    if (!o.out.empty()) sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
    if (!pass) throw CheckFailed("tclr-gradcheck: relative error above tolerance");
}

// ---- pretrain -----------------------------------------------------------

struct PretrainOptions {
    pretrain::DatasetConfig data;
    pretrain::EncoderConfig encoder;
    pretrain::TrainConfig train;
    std::vector<double> weights{1.0, 1.0, 1.0};
    std::string trace, out, manifest;
};

void run_pretrain(PretrainOptions o, std::ostream& out, std::ostream& err) {
    if (o.weights.size() != 3) throw ParameterError("pretrain: --weights takes exactly three values");
    o.train.weights = {o.weights[0], o.weights[1], o.weights[2]};
    o.train.validate();

    const auto data = pretrain::generate_dataset(o.data);
    auto enc = pretrain::TinyEncoder::random(o.data.feature_dim, o.encoder.hidden_dim, o.encoder.embedding_dim,
                                             o.encoder.seed);
    const double before = pretrain::temporal_distinctness(enc, data);
    const auto trace = pretrain::train(data, enc, o.train);
    const double after = pretrain::temporal_distinctness(enc, data);

    if (!o.trace.empty()) write_text(o.trace, io::trace_csv(trace));
    Json doc;
    doc["steps"] = trace.size();
    doc["initial_loss"] = trace.front().loss;
    doc["final_loss"] = trace.back().loss;
    doc["loss_ratio"] = trace.back().loss / trace.front().loss;
    doc["distinctness_before"] = before;
    doc["distinctness_after"] = after;
    emit_json(doc, o.out, out);

    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "pretrain";
    sink.manifest.params = {{"instances", o.data.n_instances},  {"segments", o.data.n_segments},
                            {"features", o.data.feature_dim},   {"drift", o.data.drift},
                            {"noise", o.data.noise},            {"data_seed", o.data.seed},
                            {"hidden", o.encoder.hidden_dim},   {"embedding", o.encoder.embedding_dim},
                            {"init_seed", o.encoder.seed},      {"steps", o.train.steps},
                            {"batch", o.train.batch},           {"tau", o.train.tau},
                            {"lr", o.train.learning_rate},      {"weights", o.weights},
                            {"seed", o.train.seed}};
    if (!o.trace.empty()) sink.manifest.outputs.push_back(o.trace);
    if (!o.out.empty()) sink.manifest.outputs.push_back(o.out);
    sink.finish(o.out.empty() ? o.trace : o.out, err);
}

// ---- mhpa-run -----------------------------------------------------------

struct MhpaOptions {
    std::string schedule, tokens, out, manifest;
    std::uint64_t seed = 1;
};

void run_mhpa(const MhpaOptions& o, std::ostream& out, std::ostream& err) {
    const io::ScheduleConfig cfg = io::schedule_from_config(io::KeyValueConfig::load(o.schedule));
    mhpa::TokenTensor x{cfg.grid, cfg.class_token, {}};
    const std::size_t rows = cfg.grid.volume() + (cfg.class_token ? 1 : 0);
    if (o.tokens.empty()) {
        std::mt19937_64 rng(o.seed);
        std::normal_distribution<double> g(0.0, 1.0);
        x.data = Matrix(rows, cfg.stages.front().dim_in);
        for (double& v : x.data.data()) v = g(rng);
    } else {
        x.data = io::read_emb1(o.tokens);
    }
    std::vector<mhpa::StageWeights> weights;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
        weights.push_back(mhpa::StageWeights::random(cfg.stages[s], o.seed + 1 + s));
    }
    const auto result = mhpa::run_schedule(x, cfg.stages, weights);
    Json doc;
    doc["input"] = {{"grid", mhpa::to_string(cfg.grid)}, {"seq_len", x.seq_len()}, {"dim", x.dim()}};
    doc["trace"] = io::schedule_trace_report(result.trace);
    doc["output_grid"] = mhpa::to_string(result.output.grid);
    doc["output_norm"] = l2_norm(result.output.data.data());
    doc["input_norm"] = l2_norm(x.data.data());
    emit_json(doc, o.out, out);

    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "mhpa-run";
    sink.manifest.params = {{"seed", o.seed}};
    sink.manifest.inputs = {o.schedule};
    if (!o.tokens.empty()) sink.manifest.inputs.push_back(o.tokens);
    if (!o.out.empty()) sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
}

// ---- sample-clips -------------------------------------------------------

struct SampleOptions {
    std::size_t video_len = 0;
    tta::ClipSpec clip;
    tta::CropGrid crops;
    std::size_t height = 0;
    std::size_t width = 0;
    std::string out, manifest;
};

void run_sample(const SampleOptions& o, std::ostream& out, std::ostream& err) {
    o.clip.validate();
    o.crops.validate();
    if (o.video_len == 0) throw ParameterError("sample-clips: --video-len must be >= 1");
    Json doc;
    doc["video_len"] = o.video_len;
    doc["frames"] = o.clip.frames;
    doc["skip"] = o.clip.skip;
    Json clips = Json::array();
    for (std::size_t start : tta::temporal_crop_starts(o.video_len, o.clip, o.crops.temporal_crops)) {
        clips.push_back({{"start", start}, {"indices", tta::sample_clip_indices(o.video_len, o.clip, start)}});
    }
    doc["temporal_crops"] = clips;
    if (o.height > 0 && o.width > 0) {
        Json boxes = Json::array();
        for (const auto& b : tta::spatial_crop_boxes(o.height, o.width, o.clip.resolution, o.crops.spatial_crops)) {
            boxes.push_back({{"x", b.x}, {"y", b.y}, {"width", b.width}, {"height", b.height}});
        }
        doc["spatial_crops"] = boxes;
    }
    emit_json(doc, o.out, out);

    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "sample-clips";
    sink.manifest.params = {{"video_len", o.video_len},         {"frames", o.clip.frames},
                            {"skip", o.clip.skip},              {"resolution", o.clip.resolution},
                            {"temporal_crops", o.crops.temporal_crops}, {"spatial_crops", o.crops.spatial_crops},
                            {"height", o.height},               {"width", o.width}};
    if (!o.out.empty()) sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
}

// ---- aggregate ----------------------------------------------------------

struct AggregateOptions {
    std::vector<std::string> preds;
    std::vector<double> weights;
    std::string ensemble, out, manifest;
};

// Per-video crop means of one model's predictions, in first-seen video order.
std::vector<std::pair<std::string, std::vector<double>>> per_video_means(const fs::path& path,
                                                                          std::size_t& classes) {
    std::vector<std::string> ids;
    Matrix probs;
    if (path.extension() == ".emb1") {
        probs = io::read_emb1(path);
        ids.assign(probs.rows(), path.stem().string());
    } else {
        io::CsvPredictions csv = io::read_csv_preds(path);
        probs = std::move(csv.probs);
        ids = csv.video_ids.empty() ? std::vector<std::string>(probs.rows(), path.stem().string()) : csv.video_ids;
    }
    if (probs.rows() == 0) throw FormatError(path.string() + ": no prediction rows", 0);
    classes = probs.cols();

    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> rows_of;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (!rows_of.contains(ids[r])) order.push_back(ids[r]);
        rows_of[ids[r]].push_back(r);
    }
    std::vector<std::pair<std::string, std::vector<double>>> out;
    for (const auto& id : order) {
        const auto& rows = rows_of[id];
        Matrix m(rows.size(), probs.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            std::copy_n(probs.row(rows[k]).begin(), probs.cols(), m.row(k).begin());
        }
        try {
            out.emplace_back(id, tta::aggregate_crops(tta::PredictionMatrix(std::move(m))));
        } catch (const DomainError& e) {
            throw ParameterError(path.string() + ", video '" + id + "': " + e.what());
        }
    }
    return out;
}

void run_aggregate(const AggregateOptions& o, std::ostream& out, std::ostream& err) {
    if (o.preds.empty()) throw ParameterError("aggregate: needs at least one --preds file");
    std::optional<tta::EnsembleSpec> spec;
    if (!o.ensemble.empty()) {
        if (!o.weights.empty()) throw ParameterError("aggregate: use either --weights or --ensemble");
        spec = io::ensemble_from_config(io::KeyValueConfig::load(o.ensemble));
    } else if (!o.weights.empty()) {
        std::vector<tta::EnsembleMember> members;
        for (std::size_t m = 0; m < o.weights.size(); ++m) {
            members.push_back({fs::path(o.preds[std::min(m, o.preds.size() - 1)]).stem().string(), o.weights[m]});
        }
        spec = tta::EnsembleSpec(std::move(members));
    } else {
        spec = tta::EnsembleSpec::uniform(o.preds.size());
    }
    if (spec->size() != o.preds.size()) {
        throw ParameterError("aggregate: " + std::to_string(spec->size()) + " weights for " +
                             std::to_string(o.preds.size()) + " prediction files");
    }

    std::vector<std::vector<std::pair<std::string, std::vector<double>>>> models;
    std::size_t classes = 0;
    for (std::size_t m = 0; m < o.preds.size(); ++m) {
        std::size_t c = 0;
        models.push_back(per_video_means(o.preds[m], c));
        if (m == 0) classes = c;
        if (c != classes) {
            throw ParameterError("aggregate: '" + o.preds[m] + "' has " + std::to_string(c) + " classes, expected " +
                                 std::to_string(classes));
        }
    }

    Json doc = Json::array();
    for (const auto& [video, first] : models.front()) {
        std::vector<std::vector<double>> per_model{first};
        for (std::size_t m = 1; m < models.size(); ++m) {
            auto it = std::find_if(models[m].begin(), models[m].end(), [&](const auto& e) { return e.first == video; });
            if (it == models[m].end()) {
                throw ParameterError("aggregate: video '" + video + "' missing from '" + o.preds[m] + "'");
            }
            per_model.push_back(it->second);
        }
        doc.push_back(io::prediction_report(video, tta::aggregate_ensemble(per_model, *spec)));
    }
    emit_json(doc, o.out, out);

    ManifestSink sink{o.manifest, {}};
    sink.manifest.command = "aggregate";
    Json members = Json::array();
    for (const auto& m : spec->members()) members.push_back({{"model", m.model_id}, {"weight", m.weight}});
    sink.manifest.params = {{"ensemble", members}};
    for (const auto& p : o.preds) sink.manifest.inputs.push_back(p);
    if (!o.ensemble.empty()) sink.manifest.inputs.push_back(o.ensemble);
    if (!o.out.empty()) sink.manifest.outputs = {o.out};
    sink.finish(o.out, err);
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"knights: TCLR losses, TV-L1 flow, pooling attention and multi-crop inference tools", "knights"};
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);

    std::string config_path;
    auto add_common = [&config_path](CLI::App* cmd, std::string& manifest) {
        cmd->add_option("--config", config_path, "key=value file; command-line flags take precedence");
        cmd->add_option("--manifest", manifest, "Run manifest path (default: <out>.manifest.json)");
    };

    FlowOptions flow_opts;
    auto* flow_cmd = app.add_subcommand("flow", "TV-L1 optical flow between two PGM frames (or a frame directory)");
    flow_cmd->add_option("--i0", flow_opts.i0, "First frame (PGM)");
    flow_cmd->add_option("--i1", flow_opts.i1, "Second frame (PGM)");
    flow_cmd->add_option("--out", flow_opts.out, "Output .flo");
    flow_cmd->add_option("--dir", flow_opts.dir, "Directory of frames; flow for each consecutive pair");
    flow_cmd->add_option("--out-dir", flow_opts.out_dir, "Output directory for --dir mode");
    add_solver_flags(flow_cmd, flow_opts.params);
    add_common(flow_cmd, flow_opts.manifest);

    EnergyOptions energy_opts;
    auto* energy_cmd = app.add_subcommand("energy", "Evaluate the TV-L1 energy of a flow field");
    energy_cmd->add_option("--i0", energy_opts.i0, "First frame (PGM)")->required();
    energy_cmd->add_option("--i1", energy_opts.i1, "Second frame (PGM)")->required();
    energy_cmd->add_option("--flow", energy_opts.flow, "Flow (.flo); zero flow when omitted");
    energy_cmd->add_option("--lambda", energy_opts.lambda, "Data term weight")->capture_default_str();
    energy_cmd->add_option("--intensity-scale", energy_opts.intensity_scale, "Intensity multiplier")
        ->capture_default_str();
    energy_cmd->add_option("--out", energy_opts.out, "Output JSON (stdout when omitted)");
    add_common(energy_cmd, energy_opts.manifest);

    LossOptions loss_opts;
    auto* loss_cmd = app.add_subcommand("tclr-loss", "Evaluate TCLR losses on EMB1 matrices");
    loss_cmd->add_option("--loss", loss_opts.loss, "ic | ll | gl | combined")->capture_default_str();
    loss_cmd->add_option("--embeddings", loss_opts.embeddings, "Instance clip features G (EMB1)");
    loss_cmd->add_option("--twins", loss_opts.twins, "Augmented twins G' (EMB1)");
    loss_cmd->add_option("--locals", loss_opts.locals, "Local clip features per timestamp (EMB1)");
    loss_cmd->add_option("--locals-twin", loss_opts.locals_twin, "Augmented local clips (EMB1)");
    loss_cmd->add_option("--global-slices", loss_opts.global_slices, "Global clip slices per timestamp (EMB1)");
    loss_cmd->add_option("--local-anchors", loss_opts.local_anchors, "Local anchors per timestamp (EMB1)");
    loss_cmd->add_option("--tau", loss_opts.tau, "Temperature")->capture_default_str();
    loss_cmd->add_option("--weights", loss_opts.weights, "Weights for the combined loss (ic ll gl)")
        ->expected(3)
        ->capture_default_str();
    loss_cmd->add_option("--out", loss_opts.out, "Output JSON (stdout when omitted)");
    add_common(loss_cmd, loss_opts.manifest);

    GradcheckOptions gc_opts;
    auto* gc_cmd = app.add_subcommand("tclr-gradcheck", "Finite-difference check of every analytic gradient");
    gc_cmd->add_option("--trials", gc_opts.trials, "Random configurations")->capture_default_str();
    gc_cmd->add_option("--seed", gc_opts.seed, "RNG seed")->capture_default_str();
    gc_cmd->add_option("--step", gc_opts.step, "Central difference step")->capture_default_str();
    gc_cmd->add_option("--out", gc_opts.out, "Output JSON (stdout when omitted)");
    add_common(gc_cmd, gc_opts.manifest);

    PretrainOptions pt_opts;
    auto* pt_cmd = app.add_subcommand("pretrain", "Train a tiny encoder on synthetic clips with the TCLR objective");
    pt_cmd->add_option("--instances", pt_opts.data.n_instances, "Synthetic instances")->capture_default_str();
    pt_cmd->add_option("--segments", pt_opts.data.n_segments, "Temporal segments per instance")->capture_default_str();
    pt_cmd->add_option("--features", pt_opts.data.feature_dim, "Input feature dim")->capture_default_str();
    pt_cmd->add_option("--drift", pt_opts.data.drift, "Segment-to-segment drift")->capture_default_str();
    pt_cmd->add_option("--noise", pt_opts.data.noise, "View perturbation bound")->capture_default_str();
    pt_cmd->add_option("--data-seed", pt_opts.data.seed, "Dataset seed")->capture_default_str();
    pt_cmd->add_option("--hidden", pt_opts.encoder.hidden_dim, "Encoder hidden width")->capture_default_str();
    pt_cmd->add_option("--embedding", pt_opts.encoder.embedding_dim, "Embedding dim")->capture_default_str();
    pt_cmd->add_option("--init-seed", pt_opts.encoder.seed, "Encoder init seed")->capture_default_str();
    pt_cmd->add_option("--steps", pt_opts.train.steps, "Gradient steps")->capture_default_str();
    pt_cmd->add_option("--batch", pt_opts.train.batch, "Instances per step")->capture_default_str();
    pt_cmd->add_option("--tau", pt_opts.train.tau, "Temperature")->capture_default_str();
    pt_cmd->add_option("--lr", pt_opts.train.learning_rate, "Learning rate")->capture_default_str();
    pt_cmd->add_option("--weights", pt_opts.weights, "Loss weights (ic ll gl)")->expected(3)->capture_default_str();
    pt_cmd->add_option("--seed", pt_opts.train.seed, "Batch order seed")->capture_default_str();
    pt_cmd->add_option("--trace", pt_opts.trace, "Trace CSV (step,loss,grad_norm)");
    pt_cmd->add_option("--out", pt_opts.out, "Summary JSON (stdout when omitted)");
    add_common(pt_cmd, pt_opts.manifest);

    MhpaOptions mhpa_opts;
    auto* mhpa_cmd = app.add_subcommand("mhpa-run", "Forward a token grid through a pooling-attention schedule");
    mhpa_cmd->add_option("--schedule", mhpa_opts.schedule, "Schedule key=value file")->required();
    mhpa_cmd->add_option("--tokens", mhpa_opts.tokens, "Input tokens (EMB1); seeded random when omitted");
    mhpa_cmd->add_option("--seed", mhpa_opts.seed, "Seed for weights and random tokens")->capture_default_str();
    mhpa_cmd->add_option("--out", mhpa_opts.out, "Trace JSON (stdout when omitted)");
    add_common(mhpa_cmd, mhpa_opts.manifest);

    SampleOptions sample_opts;
    auto* sample_cmd = app.add_subcommand("sample-clips", "Frame indices and crop boxes for multi-crop inference");
    sample_cmd->add_option("--video-len", sample_opts.video_len, "Frames in the video")->required();
    sample_cmd->add_option("--frames", sample_opts.clip.frames, "Frames per clip")->capture_default_str();
    sample_cmd->add_option("--skip", sample_opts.clip.skip, "Frame stride")->capture_default_str();
    sample_cmd->add_option("--resolution", sample_opts.clip.resolution, "Crop side")->capture_default_str();
    sample_cmd->add_option("--temporal-crops", sample_opts.crops.temporal_crops, "Temporal crops")
        ->capture_default_str();
    sample_cmd->add_option("--spatial-crops", sample_opts.crops.spatial_crops, "Spatial crops")->capture_default_str();
    sample_cmd->add_option("--height", sample_opts.height, "Frame height after resize (enables spatial boxes)");
    sample_cmd->add_option("--width", sample_opts.width, "Frame width after resize");
    sample_cmd->add_option("--out", sample_opts.out, "Output JSON (stdout when omitted)");
    add_common(sample_cmd, sample_opts.manifest);

    AggregateOptions agg_opts;
    auto* agg_cmd = app.add_subcommand("aggregate", "Average crop predictions per video and ensemble models");
    agg_cmd->add_option("--preds", agg_opts.preds, "Prediction files (CSV or .emb1), one per model")->required();
    agg_cmd->add_option("--weights", agg_opts.weights, "Model weights, one per --preds file");
    agg_cmd->add_option("--ensemble", agg_opts.ensemble, "Ensemble key=value file (model.<id> = weight)");
    agg_cmd->add_option("--out", agg_opts.out, "Output JSON (stdout when omitted)");
    add_common(agg_cmd, agg_opts.manifest);

    try {
        std::vector<std::string> args = apply_config(raw_args);
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        try {
            app.parse(args);
        } catch (const CLI::Success& e) {
            return app.exit(e, out, err);
        } catch (const CLI::ParseError& e) {
            app.exit(e, out, err);
            return kParamError;
        }

        if (*flow_cmd) run_flow(flow_opts, out, err);
        if (*energy_cmd) run_energy(energy_opts, out, err);
        if (*loss_cmd) run_tclr_loss(loss_opts, out, err);
        if (*gc_cmd) run_gradcheck(gc_opts, out, err);
        if (*pt_cmd) run_pretrain(pt_opts, out, err);
        if (*mhpa_cmd) run_mhpa(mhpa_opts, out, err);
        if (*sample_cmd) run_sample(sample_opts, out, err);
        if (*agg_cmd) run_aggregate(agg_opts, out, err);
        return kOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const CheckFailed& e) {
        err << "error: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const pretrain::TrainingDiverged& e) {
        err << "error: " << e.what() << "\n";
        return kCheckFailed;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        // ParameterError, ShapeError, DomainError
        err << "error: " << e.what() << "\n";
        return kParamError;
    }
}

}  // namespace knights::cli
