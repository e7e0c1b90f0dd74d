// sense: file-level front end over the transport, assignment, metrics, and
// toy-harness modules.
//
// Exit contract: 0 success, 1 input error, 2 numerical warning (Sinkhorn
// non-convergence; the plan file is still written). Commands are idempotent
// for identical inputs; manifests differ only in their timing fields.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sense/image_io.hpp"
#include "sense/metrics.hpp"
#include "sense/pixel_loss.hpp"
#include "sense/serialize.hpp"
#include "sense/toy_model.hpp"
#include "sense/toy_train.hpp"
#include "sense/toy_world.hpp"
#include "sense/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sense;

namespace {

constexpr const char* kToolVersion = "0.1.0";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fnv_hex(std::uint64_t hash) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a:%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

json manifest_skeleton(const std::string& command) {
    json m;
    m["tool"] = "sense";
    m["version"] = kToolVersion;
    m["command"] = command;
    return m;
}

// One manifest per output directory; everything except "timing" is a pure
// function of inputs and flags.
void write_manifest(const fs::path& dir, const json& manifest) {
    fs::create_directories(dir.empty() ? fs::path(".") : dir);
    const fs::path path = (dir.empty() ? fs::path(".") : dir) / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << manifest.dump(2) << '\n';
}

std::string format_index(const char* stem, Index i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03lld%s", stem, static_cast<long long>(i), ext);
    return buf;
}

GrayImage argmax_label_image(const Eigen::Ref<const Matrix>& rows, const LayoutDescriptor& layout,
                             Index batch) {
    GrayImage img;
    img.width = layout.width;
    img.height = layout.height;
    img.pixels.resize(static_cast<std::size_t>(layout.height * layout.width));
    for (Index y = 0; y < layout.height; ++y) {
        for (Index x = 0; x < layout.width; ++x) {
            Index best = 0;
            rows.row(layout.row_of(batch, y, x)).maxCoeff(&best);
            img.at(y, x) = static_cast<std::uint8_t>(best);
        }
    }
    return img;
}

// ---------------------------------------------------------------- solve-ot

struct SolveOtArgs {
    std::string cost_path;
    std::string out_path;
    double beta = 0.05;
    double tol = 1e-6;
    long max_iters = 1000;
    bool oracle = false;
};

int cmd_solve_ot(const SolveOtArgs& args) {
    const auto t0 = Clock::now();
    const Matrix cost = read_cost_any(args.cost_path);
    const double read_seconds = seconds_since(t0);

    SinkhornSettings settings;
    settings.beta = args.beta;
    settings.tolerance = args.tol;
    settings.max_iters = static_cast<int>(args.max_iters);
    const MarginalPrior prior = MarginalPrior::uniform(cost.rows(), cost.cols());

    const auto t1 = Clock::now();
    const TransportPlan plan = sinkhorn_solve(cost, prior, settings);
    const double solve_seconds = seconds_since(t1);

    if (!args.out_path.empty() && fs::path(args.out_path).has_parent_path())
        fs::create_directories(fs::path(args.out_path).parent_path());
    write_otpl(args.out_path, plan.data, plan.iterations_used, plan.final_violation);
    const double objective = transport_cost(plan, cost);

    json m = manifest_skeleton("solve-ot");
    m["config"] = {{"cost", args.cost_path},
                   {"beta", args.beta},
                   {"tol", args.tol},
                   {"max_iters", args.max_iters},
                   {"oracle", args.oracle},
                   {"out", args.out_path}};
    m["inputs"][args.cost_path] = fnv_hex(fnv1a_file(args.cost_path));
    m["results"] = {{"rows", cost.rows()},
                    {"cols", cost.cols()},
                    {"iterations_used", plan.iterations_used},
                    {"final_violation", plan.final_violation},
                    {"converged", plan.converged},
                    {"objective", objective}};

    std::printf("solve-ot: %lld x %lld, %d iterations, violation %.3e, objective %.12g\n",
                static_cast<long long>(cost.rows()), static_cast<long long>(cost.cols()),
                plan.iterations_used, plan.final_violation, objective);
    if (args.oracle) {
        const LpPlan lp = lp_oracle_solve(cost, prior);
        const double gap = objective - lp.objective;
        m["results"]["lp_objective"] = lp.objective;
        m["results"]["entropic_gap"] = gap;
        std::printf("oracle: lp objective %.12g, entropic gap %.12g\n", lp.objective, gap);
    }

    m["timing"] = {{"read_seconds", read_seconds},
                   {"solve_seconds", solve_seconds},
                   {"seconds_per_iteration", solve_seconds / std::max(1, plan.iterations_used)},
                   {"total_seconds", seconds_since(t0)}};
    const fs::path out(args.out_path);
    write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), m);

    if (!plan.converged) {
        std::fprintf(stderr, "warning: no convergence within %ld iterations (violation %.3e)\n",
                     args.max_iters, plan.final_violation);
        return 2;
    }
    return 0;
}

// ------------------------------------------------------------------ assign

struct AssignArgs {
    std::string probs_path;
    std::string out_dir;
    double gamma = 0.95;
};

int cmd_assign(const AssignArgs& args) {
    const auto t0 = Clock::now();
    const ProbTensor tensor = read_prbt(args.probs_path);
    auto [rows, layout] = flatten_predictions(tensor);

    GateMask gate = confidence_gate(rows, args.gamma);
    const double fraction = gate.fraction();

    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    PseudoLabelGrid grid;
    grid.q = std::move(rows);
    grid.gate = std::move(gate);
    grid.layout = layout;
    write_pslg((out / "pseudo_labels.pslg").string(), grid);
    for (Index b = 0; b < layout.batch; ++b) {
        const GrayImage labels = argmax_label_image(grid.q, layout, b);
        write_png((out / format_index("argmax", b, ".png")).string(), labels);
    }

    json m = manifest_skeleton("assign");
    m["config"] = {{"probs", args.probs_path}, {"gamma", args.gamma}, {"out", args.out_dir}};
    m["inputs"][args.probs_path] = fnv_hex(fnv1a_file(args.probs_path));
    m["results"] = {{"batch", layout.batch},
                    {"classes", tensor.classes()},
                    {"height", layout.height},
                    {"width", layout.width},
                    {"gate_fraction", fraction}};
    m["timing"] = {{"total_seconds", seconds_since(t0)}};
    write_manifest(out, m);

    std::printf("assign: %lld rows, gate fraction %.6f\n",
                static_cast<long long>(grid.q.rows()), fraction);
    return 0;
}

// ----------------------------------------------------------------- metrics

struct MetricsArgs {
    std::string dir;
    std::string out_csv;
};

bool decode_gray(const fs::path& path, GrayImage& out) {
    const std::string ext = path.extension().string();
    try {
        if (ext == ".png") {
            out = png_is_gray(path.string()) ? read_png_gray(path.string())
                                             : to_luma(read_png_rgb(path.string()));
        } else if (ext == ".pgm") {
            out = read_pgm(path.string());
        } else if (ext == ".ppm") {
            out = to_luma(read_ppm(path.string()));
        } else {
            return false;
        }
        return true;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "warning: skipping %s: %s\n", path.string().c_str(), e.what());
        return false;
    }
}

int cmd_metrics(const MetricsArgs& args) {
    const auto t0 = Clock::now();
    if (!fs::is_directory(args.dir)) throw std::runtime_error("not a directory: " + args.dir);
    std::vector<fs::path> candidates;
    for (const auto& entry : fs::directory_iterator(args.dir)) {
        if (entry.is_regular_file()) candidates.push_back(entry.path());
    }
    std::sort(candidates.begin(), candidates.end());

    std::vector<ImageMetrics> rowset;
    json inputs = json::object();
    for (const fs::path& path : candidates) {
        GrayImage img;
        if (!decode_gray(path, img)) continue;
        ImageMetrics row;
        row.path = path.string();
        row.glcm_score = glcm_score(img);
        row.compression_ratio = compression_ratio(img);
        rowset.push_back(std::move(row));
        inputs[path.string()] = fnv_hex(fnv1a_file(path.string()));
    }
    if (rowset.empty()) throw std::runtime_error("no decodable images in " + args.dir);
    const MetricReport report = fold_metrics(std::move(rowset));

    const fs::path out(args.out_csv);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream csv(out, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + args.out_csv);
    csv << "path,glcm_score,compression_ratio\n";
    char buf[64];
    for (const ImageMetrics& row : report.per_image) {
        std::snprintf(buf, sizeof buf, "%.17g", row.glcm_score);
        csv << row.path << ',' << buf;
        std::snprintf(buf, sizeof buf, "%.17g", row.compression_ratio);
        csv << ',' << buf << '\n';
    }
    csv << "# definition " << report.definition << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", report.glcm_mean);
    csv << "# glcm_mean " << buf;
    std::snprintf(buf, sizeof buf, "%.17g", report.glcm_std);
    csv << " glcm_std " << buf;
    std::snprintf(buf, sizeof buf, "%.17g", report.ratio_mean);
    csv << " ratio_mean " << buf;
    std::snprintf(buf, sizeof buf, "%.17g", report.ratio_std);
    csv << " ratio_std " << buf << '\n';
    csv.close();

    json m = manifest_skeleton("metrics");
    m["config"] = {{"dir", args.dir}, {"out", args.out_csv}};
    m["inputs"] = inputs;
    m["results"] = {{"images", report.per_image.size()},
                    {"glcm_mean", report.glcm_mean},
                    {"glcm_std", report.glcm_std},
                    {"ratio_mean", report.ratio_mean},
                    {"ratio_std", report.ratio_std},
                    {"definition", report.definition}};
    m["timing"] = {{"total_seconds", seconds_since(t0)}};
    write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), m);

    std::printf("metrics: %zu images, glcm %.6f +/- %.6f, ratio %.6f +/- %.6f\n",
                report.per_image.size(), report.glcm_mean, report.glcm_std, report.ratio_mean,
                report.ratio_std);
    return 0;
}

// --------------------------------------------------------------- harness

json config_echo(const TrainConfig& cfg, const std::string& world) {
    return {{"beta", cfg.beta},
            {"gamma", cfg.gamma},
            {"delta", cfg.delta},
            {"ema_momentum", cfg.ema_momentum},
            {"lr0", cfg.lr0},
            {"total_iters", cfg.total_iters},
            {"poly_power", cfg.poly_power},
            {"batch_labeled", cfg.batch_labeled},
            {"batch_unlabeled", cfg.batch_unlabeled},
            {"cutmix_prob", cfg.cutmix_prob},
            {"seed", cfg.seed},
            {"ot_enabled", cfg.ot_enabled},
            {"world", world}};
}

ToyWorld world_by_name(const std::string& name) {
    if (name == "clean") return ToyWorld::clean();
    if (name == "imbalanced") return ToyWorld::imbalanced();
    throw std::runtime_error("unknown world: " + name);
}

struct HarnessArgs {
    std::string config_path;
    std::string out_dir;
    std::string world = "imbalanced";
    std::uint64_t seed = 0;
    bool seed_given = false;
    long runs = 5;  // ablate only
};

TrainConfig load_harness_config(const HarnessArgs& args) {
    TrainConfig cfg = load_train_config(args.config_path);
    if (args.seed_given) cfg.seed = args.seed;
    return cfg;
}

int cmd_toy_train(const HarnessArgs& args) {
    const auto t0 = Clock::now();
    const TrainConfig cfg = load_harness_config(args);
    const ToyDatasets data = build_datasets(world_by_name(args.world));
    const double data_seconds = seconds_since(t0);

    const auto t1 = Clock::now();
    const TrainResult result = run_training(data, cfg);
    const double train_seconds = seconds_since(t1);

    const auto t2 = Clock::now();
    const fs::path out(args.out_dir);
    fs::create_directories(out / "predictions");
    fs::create_directories(out / "labels");
    write_step_csv((out / "steps.csv").string(), result.records);
    write_iou_csv((out / "iou.csv").string(), result.eval);
    for (std::size_t i = 0; i < data.eval.size(); ++i) {
        const ShapesSample& sample = data.eval[i];
        const Matrix probs = result.model.predict(compute_features(sample.image));
        const LayoutDescriptor layout{1, sample.image.height, sample.image.width};
        const GrayImage pred = argmax_label_image(probs, layout, 0);
        const Index idx = static_cast<Index>(i);
        write_png((out / "predictions" / format_index("sample", idx, ".png")).string(), pred);
        write_pgm((out / "predictions" / format_index("sample", idx, ".pgm")).string(), pred);
        GrayImage truth;
        truth.width = sample.image.width;
        truth.height = sample.image.height;
        truth.pixels.assign(sample.labels.labels.begin(), sample.labels.labels.end());
        write_png((out / "labels" / format_index("sample", idx, ".png")).string(), truth);
    }
    const double dump_seconds = seconds_since(t2);

    json m = manifest_skeleton("toy-train");
    m["config"] = config_echo(cfg, args.world);
    m["inputs"][args.config_path] = fnv_hex(fnv1a_file(args.config_path));
    json per_class = json::array();
    for (Index c = 0; c < result.eval.per_class_iou.size(); ++c)
        per_class.push_back(result.eval.per_class_iou[c]);  // NaN serializes as null
    m["results"] = {{"steps", result.records.size()},
                    {"mean_iou", result.eval.mean_iou},
                    {"per_class_iou", per_class},
                    {"sinkhorn_failures", result.sinkhorn_failures},
                    {"eval_samples", data.eval.size()}};
    m["timing"] = {{"data_seconds", data_seconds},
                   {"train_seconds", train_seconds},
                   {"dump_seconds", dump_seconds},
                   {"step_seconds_mean", result.mean_step_seconds},
                   {"ot_seconds_mean", result.mean_ot_seconds},
                   {"total_seconds", seconds_since(t0)}};
    write_manifest(out, m);

    std::printf("toy-train: %zu steps, mean IoU %.4f, ot/step %.3fms, step %.3fms\n",
                result.records.size(), result.eval.mean_iou, result.mean_ot_seconds * 1e3,
                result.mean_step_seconds * 1e3);
    return 0;
}

int cmd_ablate(const HarnessArgs& args) {
    const auto t0 = Clock::now();
    const TrainConfig cfg = load_harness_config(args);
    std::vector<std::uint64_t> seeds;
    for (long i = 0; i < args.runs; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));

    const AblationReport report = run_ablation(world_by_name(args.world), cfg, seeds);

    const fs::path out(args.out_dir);
    fs::create_directories(out);
    write_ablation_csv((out / "ablation.csv").string(), report);

    for (const AblationRow& row : report.rows) {
        std::printf("seed %llu: mIoU on %.4f off %.4f delta %+.4f, rare IoU on %.4f off %.4f\n",
                    static_cast<unsigned long long>(row.seed), row.miou_on, row.miou_off,
                    row.miou_on - row.miou_off, row.rare_iou_on, row.rare_iou_off);
    }
    std::printf("mean paired delta %+.6f, rare class improved in %d/%zu seeds\n",
                report.mean_delta(), report.rare_improved(), report.rows.size());

    json m = manifest_skeleton("ablate");
    m["config"] = config_echo(cfg, args.world);
    m["config"]["runs"] = args.runs;
    m["inputs"][args.config_path] = fnv_hex(fnv1a_file(args.config_path));
    json rows = json::array();
    for (const AblationRow& row : report.rows) {
        rows.push_back({{"seed", row.seed},
                        {"miou_on", row.miou_on},
                        {"miou_off", row.miou_off},
                        {"rare_iou_on", row.rare_iou_on},
                        {"rare_iou_off", row.rare_iou_off}});
    }
    m["results"] = {{"rows", rows},
                    {"mean_delta", report.mean_delta()},
                    {"rare_improved", report.rare_improved()}};
    m["timing"] = {{"total_seconds", seconds_since(t0)}};
    write_manifest(out, m);
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string pred_dir;
    std::string gt_dir;
    std::string out_dir;
};

GrayImage read_label_image(const fs::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".png") return read_png_gray(path.string());
    if (ext == ".pgm") return read_pgm(path.string());
    throw std::runtime_error("unsupported label format: " + path.string());
}

int cmd_eval(const EvalArgs& args) {
    const auto t0 = Clock::now();
    if (!fs::is_directory(args.gt_dir)) throw std::runtime_error("not a directory: " + args.gt_dir);
    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(args.gt_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm") gt_files.push_back(entry.path());
    }
    std::sort(gt_files.begin(), gt_files.end());
    if (gt_files.empty()) throw std::runtime_error("no label images in " + args.gt_dir);

    // Pair by file name; every ground-truth file needs a prediction. Ignore
    // pixels (255) in the ground truth are skipped; predictions must be
    // class indices.
    json inputs = json::object();
    int max_label = -1;
    std::vector<std::pair<GrayImage, GrayImage>> pairs;
    for (const fs::path& gt_path : gt_files) {
        const fs::path pred_path = fs::path(args.pred_dir) / gt_path.filename();
        if (!fs::exists(pred_path))
            throw std::runtime_error("missing prediction for " + gt_path.filename().string());
        GrayImage gt = read_label_image(gt_path);
        GrayImage pred = read_label_image(pred_path);
        if (gt.width != pred.width || gt.height != pred.height)
            throw std::runtime_error("size mismatch for " + gt_path.filename().string());
        inputs[gt_path.string()] = fnv_hex(fnv1a_file(gt_path.string()));
        inputs[pred_path.string()] = fnv_hex(fnv1a_file(pred_path.string()));
        for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
            if (gt.pixels[i] == kIgnoreLabel) continue;
            if (pred.pixels[i] == kIgnoreLabel)
                throw std::runtime_error("prediction contains the ignore sentinel: " +
                                         pred_path.filename().string());
            max_label = std::max({max_label, int(gt.pixels[i]), int(pred.pixels[i])});
        }
        pairs.emplace_back(std::move(gt), std::move(pred));
    }
    if (max_label < 0) throw std::runtime_error("every ground-truth pixel is ignored");

    const int k = max_label + 1;
    Matrix confusion = Matrix::Zero(k, k);
    for (const auto& [gt, pred] : pairs) {
        for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
            if (gt.pixels[i] == kIgnoreLabel) continue;
            confusion(gt.pixels[i], pred.pixels[i]) += 1.0;
        }
    }
    const EvalReport report = iou_from_confusion(std::move(confusion));

    const fs::path out(args.out_dir);
    fs::create_directories(out);
    write_iou_csv((out / "iou.csv").string(), report);

    json m = manifest_skeleton("eval");
    m["config"] = {{"pred", args.pred_dir}, {"gt", args.gt_dir}, {"out", args.out_dir}};
    m["inputs"] = inputs;
    json per_class = json::array();
    for (Index c = 0; c < report.per_class_iou.size(); ++c)
        per_class.push_back(report.per_class_iou[c]);
    m["results"] = {{"pairs", pairs.size()},
                    {"classes", k},
                    {"mean_iou", report.mean_iou},
                    {"per_class_iou", per_class}};
    m["timing"] = {{"total_seconds", seconds_since(t0)}};
    write_manifest(out, m);

    std::printf("eval: %zu pairs, mean IoU %.6f\n", pairs.size(), report.mean_iou);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optimal-transport pseudo-label toolkit"};
    app.require_subcommand(1);

    SolveOtArgs solve_args;
    CLI::App* solve = app.add_subcommand("solve-ot", "solve one entropic transport problem");
    solve->add_option("--cost", solve_args.cost_path, "cost matrix file (OTCM or CSV)")
        ->required();
    solve->add_option("--beta", solve_args.beta, "entropic regularization strength");
    solve->add_option("--tol", solve_args.tol, "marginal L1 tolerance");
    solve->add_option("--max-iters", solve_args.max_iters, "Sinkhorn iteration cap");
    solve->add_option("--out", solve_args.out_path, "output plan file (OTPL)")->required();
    solve->add_flag("--oracle", solve_args.oracle, "also solve the exact LP and print the gap");

    AssignArgs assign_args;
    CLI::App* assign = app.add_subcommand("assign", "gate probabilities into pseudo-labels");
    assign->add_option("--probs", assign_args.probs_path, "probability tensor file (PRBT)")
        ->required();
    assign->add_option("--gamma", assign_args.gamma, "confidence gate threshold")
        ->check(CLI::Range(0.0, 1.0));
    assign->add_option("--out", assign_args.out_dir, "output directory")->required();

    MetricsArgs metrics_args;
    CLI::App* metrics = app.add_subcommand("metrics", "score a directory of images");
    metrics->add_option("--dir", metrics_args.dir, "image directory")->required();
    metrics->add_option("--out", metrics_args.out_csv, "output CSV path")->required();

    HarnessArgs train_args;
    CLI::App* train = app.add_subcommand("toy-train", "run the toy training loop");
    train->add_option("--config", train_args.config_path, "key=value config file")->required();
    train->add_option("--out", train_args.out_dir, "output directory")->required();
    train->add_option("--world", train_args.world, "shapes world: clean or imbalanced")
        ->check(CLI::IsMember({"clean", "imbalanced"}));
    train->add_option("--seed", train_args.seed, "override the config seed");

    HarnessArgs ablate_args;
    CLI::App* ablate = app.add_subcommand("ablate", "paired OT-on/OT-off ablation");
    ablate->add_option("--config", ablate_args.config_path, "key=value config file")->required();
    ablate->add_option("--out", ablate_args.out_dir, "output directory")->required();
    ablate->add_option("--world", ablate_args.world, "shapes world: clean or imbalanced")
        ->check(CLI::IsMember({"clean", "imbalanced"}));
    ablate->add_option("--seed", ablate_args.seed, "override the config base seed");
    ablate->add_option("--runs", ablate_args.runs, "number of paired seeds")
        ->check(CLI::PositiveNumber);

    EvalArgs eval_args;
    CLI::App* evalc = app.add_subcommand("eval", "score prediction dumps against labels");
    evalc->add_option("--pred", eval_args.pred_dir, "prediction label directory")->required();
    evalc->add_option("--gt", eval_args.gt_dir, "ground-truth label directory")->required();
    evalc->add_option("--out", eval_args.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    train_args.seed_given = train->count("--seed") > 0;
    ablate_args.seed_given = ablate->count("--seed") > 0;

    try {
        if (solve->parsed()) return cmd_solve_ot(solve_args);
        if (assign->parsed()) return cmd_assign(assign_args);
        if (metrics->parsed()) return cmd_metrics(metrics_args);
        if (train->parsed()) return cmd_toy_train(train_args);
        if (ablate->parsed()) return cmd_ablate(ablate_args);
        if (evalc->parsed()) return cmd_eval(eval_args);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
