#include "sense/toy_train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sense/transport.hpp"

namespace sense {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": bad number '" + value + "'");
    }
    if (used != value.size())
        throw std::invalid_argument("config key " + key + ": bad number '" + value + "'");
    return out;
}

long long parse_int(const std::string& key, const std::string& value) {
    long long out = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size())
        throw std::invalid_argument("config key " + key + ": bad integer '" + value + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size())
        throw std::invalid_argument("config key " + key + ": bad integer '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config key " + key + ": bad boolean '" + value + "'");
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Strong-view payload that CutMix pastes between batch slots.
struct StrongSlot {
    ToyImage image;
    Matrix q;                   // h*w x k pseudo-labels
    std::vector<char> gate;     // confidence gate
    std::vector<char> valid;    // in-view mask from the weak geometry
};

void cutmix_paste(StrongSlot& dst, const StrongSlot& src, const CutMixBox& box, Index w) {
    paste_box(dst.image, src.image, box);
    paste_box(dst.q, src.q, box, w);
    paste_box(dst.gate, src.gate, box, w);
    paste_box(dst.valid, src.valid, box, w);
}

}  // namespace

void TrainConfig::validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("config key beta: must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("config key gamma: must be in [0,1]");
    if (!(delta >= 0.0 && delta <= 1.0))
        throw std::invalid_argument("config key delta: must be in [0,1]");
    if (!(ema_momentum >= 0.0 && ema_momentum < 1.0))
        throw std::invalid_argument("config key ema_momentum: must be in [0,1)");
    if (!(lr0 > 0.0)) throw std::invalid_argument("config key lr0: must be > 0");
    if (total_iters < 1) throw std::invalid_argument("config key total_iters: must be >= 1");
    if (!(poly_power >= 0.0)) throw std::invalid_argument("config key poly_power: must be >= 0");
    if (batch_labeled < 0) throw std::invalid_argument("config key batch_labeled: must be >= 0");
    if (batch_unlabeled < 0)
        throw std::invalid_argument("config key batch_unlabeled: must be >= 0");
    if (!(cutmix_prob >= 0.0 && cutmix_prob <= 1.0))
        throw std::invalid_argument("config key cutmix_prob: must be in [0,1]");
}

TrainConfig parse_train_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line is not key = value: '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "beta")
            cfg.beta = parse_double(key, value);
        else if (key == "gamma")
            cfg.gamma = parse_double(key, value);
        else if (key == "delta")
            cfg.delta = parse_double(key, value);
        else if (key == "ema_momentum")
            cfg.ema_momentum = parse_double(key, value);
        else if (key == "lr0")
            cfg.lr0 = parse_double(key, value);
        else if (key == "total_iters")
            cfg.total_iters = static_cast<int>(parse_int(key, value));
        else if (key == "poly_power")
            cfg.poly_power = parse_double(key, value);
        else if (key == "batch_labeled")
            cfg.batch_labeled = static_cast<int>(parse_int(key, value));
        else if (key == "batch_unlabeled")
            cfg.batch_unlabeled = static_cast<int>(parse_int(key, value));
        else if (key == "cutmix_prob")
            cfg.cutmix_prob = parse_double(key, value);
        else if (key == "seed")
            cfg.seed = parse_u64(key, value);
        else if (key == "ot_enabled")
            cfg.ot_enabled = parse_bool(key, value);
        else
            throw std::invalid_argument("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_train_config_text(buf.str());
}

ToyDatasets build_datasets(const ToyWorld& world) {
    if (world.labeled.classes != world.unlabeled.classes)
        throw std::invalid_argument("build_datasets: class counts differ between domains");
    ToyDatasets data;
    data.labeled.reserve(kLabeledCount);
    data.unlabeled.reserve(kUnlabeledCount);
    data.eval.reserve(kEvalCount);
    for (int i = 0; i < kLabeledCount; ++i)
        data.labeled.push_back(generate_shapes(world.labeled, kLabeledSeedBase + i));
    for (int i = 0; i < kUnlabeledCount; ++i)
        data.unlabeled.push_back(generate_shapes(world.unlabeled, kUnlabeledSeedBase + i));
    for (int i = 0; i < kEvalCount; ++i)
        data.eval.push_back(generate_shapes(world.labeled, kEvalSeedBase + i));
    return data;
}

TrainResult run_training(const ToyDatasets& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.labeled.empty() || data.eval.empty())
        throw std::invalid_argument("run_training: empty dataset");
    const Index size = data.labeled.front().image.height;
    const int k = static_cast<int>(data.labeled.front().class_histogram.size());
    const Index npx = size * size;

    TrainResult result{LinearSoftmaxModel(k), {}, {}, 0.0, 0.0, 0};
    result.records.reserve(static_cast<std::size_t>(cfg.total_iters));
    LinearSoftmaxModel& model = result.model;

    SinkhornSettings ot;
    ot.beta = cfg.beta;
    ot.max_iters = 150;
    ot.tolerance = 1e-3;
    // Teacher tails sharpen as training progresses; this floor keeps the
    // cost range inside the plain-scaling exponent budget, and entries this
    // small carry no assignment mass either way.
    ot.prob_floor = 1e-9;
    // The column potential carries over between steps; the teacher drifts
    // slowly under EMA, so the previous potential is a good initial guess.
    // The per-step iteration budget stays high regardless: the rebalancing
    // pressure on starved classes lives in the late iterations, and cutting
    // them flattens exactly the assignments the imbalanced worlds need.
    Vector log_v_warm = Vector::Zero(k);

    // No softmax row reaches probability 1 in exact arithmetic, so gamma = 1
    // gates out every pixel; skipping the branch keeps that semantics even
    // where rounding would saturate a probability to 1.0.
    const bool use_synthetic = cfg.batch_unlabeled > 0 && cfg.gamma < 1.0;

    double step_seconds = 0.0, ot_seconds = 0.0;
    using clock = std::chrono::steady_clock;

    for (int step = 0; step < cfg.total_iters; ++step) {
        const auto t_step = clock::now();
        const double lr = poly_lr(cfg.lr0, step, cfg.total_iters, cfg.poly_power);
        Rng rng_lab = Rng::stream(cfg.seed, 1, static_cast<std::uint64_t>(step));
        Rng rng_unl = Rng::stream(cfg.seed, 2, static_cast<std::uint64_t>(step));

        Matrix grad_w = Matrix::Zero(kToyFeatureDim, k);
        Vector grad_b = Vector::Zero(k);
        double loss_real = 0.0;
        int contributing = 0;
        for (int i = 0; i < cfg.batch_labeled; ++i) {
            const auto idx =
                static_cast<std::size_t>(rng_lab.uniform_int(0, kLabeledCount - 1));
            const ShapesSample view = weak_augment(data.labeled[idx], rng_lab);
            const Matrix feats = compute_features(view.image);
            const Matrix probs = model.predict(feats);
            const PixelLossResult res = real_pixel_loss(view.labels, probs);
            if (res.active_rows == 0) continue;
            loss_real += res.loss;
            grad_w += feats.transpose() * res.grad;
            grad_b += res.grad.colwise().sum().transpose();
            ++contributing;
        }
        if (contributing > 0) {
            loss_real /= contributing;
            grad_w /= contributing;
            grad_b /= contributing;
        }

        Matrix grad_w_syn = Matrix::Zero(kToyFeatureDim, k);
        Vector grad_b_syn = Vector::Zero(k);
        double loss_syn = 0.0;
        double gate_fraction = 0.0;
        if (use_synthetic) {
            const int bu = cfg.batch_unlabeled;
            std::vector<ShapesSample> views;
            views.reserve(static_cast<std::size_t>(bu));
            for (int i = 0; i < bu; ++i) {
                const auto idx =
                    static_cast<std::size_t>(rng_unl.uniform_int(0, kUnlabeledCount - 1));
                views.push_back(weak_augment(data.unlabeled[idx], rng_unl));
            }
            Matrix p_teacher(static_cast<Index>(bu) * npx, k);
            for (int i = 0; i < bu; ++i)
                p_teacher.middleRows(static_cast<Index>(i) * npx, npx) =
                    model.predict_teacher(compute_features(views[i].image));

            const GateMask gate = confidence_gate(p_teacher, cfg.gamma);
            gate_fraction = gate.fraction();

            Matrix q;
            if (cfg.ot_enabled) {
                const auto t_ot = clock::now();
                // Assignments are solved on a strided pixel grid and each
                // solved row is pasted onto its cell; the confidence gate
                // stays at full resolution. Gather and paste walk one column
                // at a time to keep the column-major accesses contiguous.
                constexpr Index kStride = 4;
                const Index sub_side = (size + kStride - 1) / kStride;
                const Index n_sub = static_cast<Index>(bu) * sub_side * sub_side;
                Matrix p_sub(n_sub, k);
                for (Index j = 0; j < k; ++j) {
                    Index r = 0;
                    for (int i = 0; i < bu; ++i) {
                        const Index base = static_cast<Index>(i) * npx;
                        for (Index y = 0; y < size; y += kStride)
                            for (Index x = 0; x < size; x += kStride)
                                p_sub(r++, j) = p_teacher(base + y * size + x, j);
                    }
                }
                const Matrix cost_sub = build_cost_matrix(p_sub, ot);
                const TransportPlan plan =
                    sinkhorn_solve(cost_sub, MarginalPrior::uniform(n_sub, k), ot, log_v_warm);
                if (!plan.converged) ++result.sinkhorn_failures;
                log_v_warm = plan.log_v;
                const Matrix q_sub = plan_row_normalize(plan);
                q = Matrix(p_teacher.rows(), k);
                for (Index j = 0; j < k; ++j) {
                    Index r = 0;
                    for (int i = 0; i < bu; ++i) {
                        const Index base = static_cast<Index>(i) * npx;
                        for (Index y = 0; y < size; y += kStride) {
                            for (Index x = 0; x < size; x += kStride) {
                                const double val = q_sub(r++, j);
                                const Index y_end = std::min(y + kStride, size);
                                const Index x_end = std::min(x + kStride, size);
                                for (Index dy = y; dy < y_end; ++dy)
                                    for (Index dx = x; dx < x_end; ++dx)
                                        q(base + dy * size + dx, j) = val;
                            }
                        }
                    }
                }
                ot_seconds += std::chrono::duration<double>(clock::now() - t_ot).count();
            } else {
                q = Matrix::Zero(p_teacher.rows(), k);
                for (Index i = 0; i < p_teacher.rows(); ++i) {
                    Index best = 0;
                    p_teacher.row(i).maxCoeff(&best);
                    q(i, best) = 1.0;
                }
            }

            std::vector<StrongSlot> slots(static_cast<std::size_t>(bu));
            for (int i = 0; i < bu; ++i) {
                StrongSlot& slot = slots[static_cast<std::size_t>(i)];
                slot.image = strong_photo(views[i].image, rng_unl);
                slot.q = q.middleRows(static_cast<Index>(i) * npx, npx);
                slot.gate.assign(gate.flags.begin() + static_cast<Index>(i) * npx,
                                 gate.flags.begin() + static_cast<Index>(i + 1) * npx);
                slot.valid.resize(static_cast<std::size_t>(npx));
                for (Index row = 0; row < npx; ++row)
                    slot.valid[static_cast<std::size_t>(row)] =
                        views[i].labels.labels[static_cast<std::size_t>(row)] != kIgnoreLabel;
            }
            for (int i = 0; i < bu; ++i) {
                if (!rng_unl.bernoulli(cfg.cutmix_prob)) continue;
                const CutMixBox box = draw_cutmix_box(size, rng_unl);
                cutmix_paste(slots[static_cast<std::size_t>(i)],
                             slots[static_cast<std::size_t>((i + 1) % bu)], box, size);
            }

            for (int i = 0; i < bu; ++i) {
                StrongSlot& slot = slots[static_cast<std::size_t>(i)];
                PseudoLabelGrid pl;
                pl.q = std::move(slot.q);
                pl.layout = LayoutDescriptor{1, size, size};
                pl.gate.gamma = cfg.gamma;
                pl.gate.flags.resize(static_cast<std::size_t>(npx));
                for (Index row = 0; row < npx; ++row)
                    pl.gate.flags[static_cast<std::size_t>(row)] =
                        slot.gate[static_cast<std::size_t>(row)] &&
                        slot.valid[static_cast<std::size_t>(row)];
                const Matrix feats = compute_features(slot.image);
                const Matrix probs = model.predict(feats);
                const PixelLossResult res = synthetic_pixel_loss(pl, probs);
                loss_syn += res.loss / bu;
                grad_w_syn += feats.transpose() * (res.grad / bu);
                grad_b_syn += (res.grad.colwise().sum() / bu).transpose();
            }
        }

        grad_w = 0.5 * (grad_w + grad_w_syn);
        grad_b = 0.5 * (grad_b + grad_b_syn);
        model.apply_gradient(grad_w, grad_b, lr);
        model.ema_update(cfg.ema_momentum);

        step_seconds += std::chrono::duration<double>(clock::now() - t_step).count();
        result.records.push_back(StepRecord{step, loss_real, loss_syn, lr, gate_fraction});
    }

    result.mean_step_seconds = step_seconds / cfg.total_iters;
    result.mean_ot_seconds = ot_seconds / cfg.total_iters;
    result.eval = evaluate_model(model, data.eval);
    return result;
}

TrainResult run_training(const ToyWorld& world, const TrainConfig& cfg) {
    return run_training(build_datasets(world), cfg);
}

EvalReport iou_from_confusion(Matrix confusion) {
    if (confusion.rows() != confusion.cols() || confusion.rows() < 1)
        throw std::invalid_argument("iou_from_confusion: confusion matrix must be square");
    EvalReport report;
    report.confusion = std::move(confusion);
    const Index k = report.confusion.rows();
    report.per_class_iou = Vector::Constant(k, std::nan(""));
    double sum = 0.0;
    int present = 0;
    for (Index c = 0; c < k; ++c) {
        const double tp = report.confusion(c, c);
        const double fp = report.confusion.col(c).sum() - tp;
        const double fn = report.confusion.row(c).sum() - tp;
        if (tp + fp + fn == 0.0) continue;  // absent from gt and prediction
        report.per_class_iou[c] = tp / (tp + fp + fn);
        sum += report.per_class_iou[c];
        ++present;
    }
    report.mean_iou = present > 0 ? sum / present : 0.0;
    return report;
}

EvalReport evaluate_model(const LinearSoftmaxModel& model,
                          const std::vector<ShapesSample>& eval_set) {
    if (eval_set.empty()) throw std::invalid_argument("evaluate_model: empty eval set");
    const int k = model.classes();
    Matrix confusion = Matrix::Zero(k, k);
    for (const ShapesSample& sample : eval_set) {
        const Matrix probs = model.predict(compute_features(sample.image));
        for (Index row = 0; row < probs.rows(); ++row) {
            Index pred = 0;
            probs.row(row).maxCoeff(&pred);
            const int truth = sample.labels.labels[static_cast<std::size_t>(row)];
            confusion(truth, pred) += 1.0;
        }
    }
    return iou_from_confusion(std::move(confusion));
}

double AblationReport::mean_delta() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const AblationRow& row : rows) s += row.miou_on - row.miou_off;
    return s / static_cast<double>(rows.size());
}

int AblationReport::rare_improved() const {
    int n = 0;
    for (const AblationRow& row : rows) n += row.rare_iou_on > row.rare_iou_off ? 1 : 0;
    return n;
}

AblationReport run_ablation(const ToyWorld& world, const TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
    const ToyDatasets data = build_datasets(world);
    AblationReport report;
    for (const std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.ot_enabled = true;
        const TrainResult on = run_training(data, cfg);
        cfg.ot_enabled = false;
        const TrainResult off = run_training(data, cfg);
        const Index rare = on.eval.per_class_iou.size() - 1;
        report.rows.push_back(AblationRow{seed, on.eval.mean_iou, off.eval.mean_iou,
                                          on.eval.per_class_iou[rare],
                                          off.eval.per_class_iou[rare]});
    }
    return report;
}

void write_step_csv(const std::string& path, const std::vector<StepRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "step,loss_real,loss_syn,lr,gate_fraction\n";
    for (const StepRecord& r : records)
        out << r.step << ',' << fmt_g(r.loss_real) << ',' << fmt_g(r.loss_syn) << ','
            << fmt_g(r.lr) << ',' << fmt_g(r.gate_fraction) << '\n';
    if (!out) throw std::runtime_error("short write: " + path);
}

void write_iou_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "class,iou\n";
    for (Index c = 0; c < report.per_class_iou.size(); ++c)
        out << c << ',' << fmt_g(report.per_class_iou[c]) << '\n';
    out << "mean," << fmt_g(report.mean_iou) << '\n';
    if (!out) throw std::runtime_error("short write: " + path);
}

void write_ablation_csv(const std::string& path, const AblationReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "seed,miou_on,miou_off,rare_iou_on,rare_iou_off\n";
    for (const AblationRow& r : report.rows)
        out << r.seed << ',' << fmt_g(r.miou_on) << ',' << fmt_g(r.miou_off) << ','
            << fmt_g(r.rare_iou_on) << ',' << fmt_g(r.rare_iou_off) << '\n';
    if (!out) throw std::runtime_error("short write: " + path);
}

AblationReport read_ablation_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "seed,miou_on,miou_off,rare_iou_on,rare_iou_off")
        throw std::invalid_argument("ablation csv: bad header");
    AblationReport report;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        AblationRow r;
        if (!std::getline(row, field, ',')) throw std::invalid_argument("ablation csv: bad row");
        r.seed = parse_u64("seed", trim(field));
        double* cells[4] = {&r.miou_on, &r.miou_off, &r.rare_iou_on, &r.rare_iou_off};
        for (double* cell : cells) {
            if (!std::getline(row, field, ','))
                throw std::invalid_argument("ablation csv: bad row");
            *cell = parse_double("ablation", trim(field));
        }
        report.rows.push_back(r);
    }
    return report;
}

}  // namespace sense
