#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sense/toy_augment.hpp"
#include "sense/toy_model.hpp"
#include "sense/toy_world.hpp"

namespace sense {

// Run settings, loadable from a key=value file. The schema is exactly these
// twelve keys; unknown keys are rejected by name.
struct TrainConfig {
    double beta = 0.05;
    double gamma = 0.95;
    double delta = 0.95;       // query-branch gate; carried in the schema but
                               // unused by the pixel-level toy loop
    double ema_momentum = 0.99;
    double lr0 = 4.0;
    int total_iters = 2000;
    double poly_power = 0.9;
    int batch_labeled = 8;
    int batch_unlabeled = 8;
    double cutmix_prob = 0.5;
    std::uint64_t seed = 0;
    bool ot_enabled = true;

    void validate() const;
};

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped,
// later duplicates win. Unknown keys or unparseable values throw
// std::invalid_argument naming the key.
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig load_train_config(const std::string& path);

// One metric-log row per step.
struct StepRecord {
    int step = 0;
    double loss_real = 0.0;
    double loss_syn = 0.0;
    double lr = 0.0;
    double gate_fraction = 0.0;  // confidence gate alone, before validity
};

struct EvalReport {
    double mean_iou = 0.0;
    Vector per_class_iou;  // NaN where the class is absent from gt and pred
    Matrix confusion;      // ground truth x prediction counts
};

struct TrainResult {
    LinearSoftmaxModel model;
    std::vector<StepRecord> records;
    EvalReport eval;
    double mean_step_seconds = 0.0;
    double mean_ot_seconds = 0.0;  // cost build + solve + extension; 0 when off
    int sinkhorn_failures = 0;
};

// Fixed split sizes; sample seeds are the dataset bases plus the index, so
// the datasets are shared by every run regardless of the training seed.
inline constexpr int kLabeledCount = 200;
inline constexpr int kUnlabeledCount = 1000;
inline constexpr int kEvalCount = 100;
inline constexpr std::uint64_t kLabeledSeedBase = 0;
inline constexpr std::uint64_t kUnlabeledSeedBase = 10000;
inline constexpr std::uint64_t kEvalSeedBase = 50000;

struct ToyDatasets {
    std::vector<ShapesSample> labeled;
    std::vector<ShapesSample> unlabeled;
    std::vector<ShapesSample> eval;
};

ToyDatasets build_datasets(const ToyWorld& world);

// Full teacher/student loop: per step, weak labeled views feed the supervised
// loss; the EMA teacher predicts on weak unlabeled views; pseudo-labels come
// from an entropic transport assignment with uniform marginals (or gated
// argmax when OT is off); the student learns them on strong views under the
// confidence gate AND the view-validity mask, CutMix-composed. One plain
// gradient step on 0.5*(real + synthetic), then the EMA update.
TrainResult run_training(const ToyDatasets& data, const TrainConfig& cfg);
TrainResult run_training(const ToyWorld& world, const TrainConfig& cfg);

// IoU report from an accumulated k x k confusion matrix (rows = truth).
// Classes absent from both prediction and ground truth are excluded from the
// mean and reported as NaN.
EvalReport iou_from_confusion(Matrix confusion);

// Accumulated-confusion IoU over the eval set using student weights.
EvalReport evaluate_model(const LinearSoftmaxModel& model,
                          const std::vector<ShapesSample>& eval_set);

struct AblationRow {
    std::uint64_t seed = 0;
    double miou_on = 0.0;
    double miou_off = 0.0;
    double rare_iou_on = 0.0;   // rarest class = last class index
    double rare_iou_off = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;

    double mean_delta() const;
    int rare_improved() const;  // rows with rare_iou_on > rare_iou_off
};

// Paired runs per seed: identical datasets and RNG streams, OT on vs off.
AblationReport run_ablation(const ToyWorld& world, const TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds);

// CSV round trips. Floats print as %.17g so rereads are exact.
void write_step_csv(const std::string& path, const std::vector<StepRecord>& records);
void write_iou_csv(const std::string& path, const EvalReport& report);
void write_ablation_csv(const std::string& path, const AblationReport& report);
AblationReport read_ablation_csv(const std::string& path);

}  // namespace sense
