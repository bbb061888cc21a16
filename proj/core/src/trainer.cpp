#include "microcount/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "microcount/errors.hpp"
#include "microcount/pngio.hpp"
#include "microcount/rng.hpp"

namespace microcount::train {

using nn::Tensor;

void TrainConfig::validate() const {
    if (base_lr <= 0) throw ConfigError("base_lr must be positive");
    if (!(plateau_factor > 0 && plateau_factor < 1))
        throw ConfigError("plateau_factor must lie in (0, 1)");
    if (plateau_patience < 1 || early_stop_patience < 1)
        throw ConfigError("patience values must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
}

int default_batch_size(models::Family family) {
    switch (family) {
        case models::Family::cnn:
            return 128;
        case models::Family::parallelvit:
        case models::Family::deepvit:
        case models::Family::xcit:
            return 32;
        default:
            return 64;  // vanilla ViT, CrossViT, TransCrowd, ResNet
    }
}

double warmup_lr(const TrainConfig& config, long long step) {
    if (!config.warmup_enabled || config.warmup_steps == 0) return config.base_lr;
    const double lr_min = config.base_lr * config.warmup_start_fraction;
    const double t = std::min(1.0, static_cast<double>(step) / config.warmup_steps);
    return lr_min + (config.base_lr - lr_min) * t;
}

bool PlateauScheduler::observe(double val_loss) {
    if (!has_best_ || val_loss < best_ * (1.0 - config_.improvement_rel)) {
        best_ = val_loss;
        has_best_ = true;
        stale_ = 0;
        return false;
    }
    if (++stale_ >= config_.plateau_patience) {
        scale_ *= config_.plateau_factor;
        stale_ = 0;
        return true;
    }
    return false;
}

bool EarlyStopper::observe(double val_loss) {
    ++epoch_;
    if (!has_best_ || val_loss < best_ * (1.0 - config_.improvement_rel)) {
        best_ = val_loss;
        has_best_ = true;
        stale_ = 0;
        improved_last_ = true;
    } else {
        ++stale_;
        improved_last_ = false;
    }
    return stale_ >= config_.early_stop_patience || epoch_ >= config_.max_epochs;
}

nn::Tensor count_loss(const nn::Tensor& predicted, const nn::Tensor& truth, LossKind kind) {
    if (predicted.shape() != truth.shape())
        throw std::invalid_argument("loss: prediction/label length mismatch");
    Tensor diff = sub(predicted, truth);
    if (kind == LossKind::l1) return mean_all(abs(diff));
    return mean_all(mul(diff, diff));
}

Adam::Adam(std::vector<nn::NamedTensor>& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].tensor.numel(), 0.f);
        v_[i].assign(params[i].tensor.numel(), 0.f);
    }
}

void Adam::zero_grad() {
    for (auto& p : *params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_->size(); ++i) {
        auto& tensor = (*params_)[i].tensor;
        const auto& g = tensor.grad();
        auto& value = tensor.data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < value.size(); ++j) {
            m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
            v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j]);
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            value[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps_));
        }
    }
}

TensorDataset load_dataset(const Manifest& manifest, const adapt::NormalizationStats& stats,
                           int input_size) {
    TensorDataset ds;
    ds.size = input_size;
    ds.samples.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        Sample s;
        s.chw = adapt::preprocess(read_png(manifest.resolve(rec)), stats, input_size);
        s.count = static_cast<float>(rec.count);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace {

// Deterministic Fisher-Yates; std::shuffle is implementation-defined.
void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
}

Tensor make_batch(const TensorDataset& ds, const std::vector<size_t>& idx, size_t begin,
                  size_t end, Tensor* labels) {
    const size_t B = end - begin;
    const size_t sample_elems = ds.samples[0].chw.size();
    std::vector<float> data(B * sample_elems);
    std::vector<float> y(B);
    for (size_t i = 0; i < B; ++i) {
        const Sample& s = ds.samples[idx[begin + i]];
        std::copy(s.chw.begin(), s.chw.end(), data.begin() + i * sample_elems);
        y[i] = s.count;
    }
    *labels = Tensor::from_data({static_cast<int>(B)}, std::move(y));
    return Tensor::from_data({static_cast<int>(B), 3, ds.size, ds.size}, std::move(data));
}

struct ValResult {
    double loss = 0.0;
    double mae = 0.0;
};

ValResult validate_epoch(models::CountingModel& model, const TensorDataset& val,
                         int batch_size, LossKind kind) {
    nn::NoGradGuard guard;
    std::vector<size_t> idx(val.samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (size_t begin = 0; begin < idx.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(idx.size(), begin + static_cast<size_t>(batch_size));
        Tensor labels;
        Tensor batch = make_batch(val, idx, begin, end, &labels);
        Tensor pred = model.forward(batch);
        for (size_t i = 0; i < pred.numel(); ++i) {
            const double d = static_cast<double>(pred.data()[i]) - labels.data()[i];
            abs_sum += std::fabs(d);
            sq_sum += d * d;
        }
    }
    ValResult r;
    const double n = static_cast<double>(val.samples.size());
    r.mae = abs_sum / n;
    r.loss = kind == LossKind::l1 ? abs_sum / n : sq_sum / n;
    return r;
}

}  // namespace

TrainReport train(models::CountingModel& model, const TensorDataset& train_set,
                  const TensorDataset& val_set, const TrainConfig& config_in) {
    TrainConfig config = config_in;
    config.validate();
    if (train_set.samples.empty() || val_set.samples.empty())
        throw InputError("train and validation splits must be non-empty");
    if (config.batch_size == 0) config.batch_size = default_batch_size(model.config.family);
    const bool transformer =
        model.config.family != models::Family::cnn && model.config.family != models::Family::resnet;
    if (!transformer) config.warmup_enabled = false;

    const auto t0 = std::chrono::steady_clock::now();
    Adam optimizer(model.params);
    PlateauScheduler plateau(config);
    EarlyStopper stopper(config);

    TrainReport report;
    long long step = 0;
    std::vector<size_t> idx(train_set.samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    std::vector<std::vector<float>> best_weights;
    auto snapshot = [&]() {
        best_weights.clear();
        best_weights.reserve(model.params.size());
        for (const auto& p : model.params) best_weights.push_back(p.tensor.data());
    };

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, static_cast<uint64_t>(epoch)));
        shuffle_indices(idx, rng);

        double loss_sum = 0.0;
        size_t batches = 0;
        double lr = config.base_lr;
        for (size_t begin = 0; begin < idx.size(); begin += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(idx.size(), begin + static_cast<size_t>(config.batch_size));
            Tensor labels;
            Tensor batch = make_batch(train_set, idx, begin, end, &labels);
            Tensor loss = count_loss(model.forward(batch), labels, config.loss);
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                report.stop_reason = "diverged";
                report.wall_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return report;
            }
            loss_sum += loss_value;
            ++batches;
            optimizer.zero_grad();
            nn::backward(loss);
            lr = warmup_lr(config, step) * plateau.scale();
            optimizer.step(lr);
            ++step;
        }

        ValResult val = validate_epoch(model, val_set, config.batch_size, config.loss);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        stats.val_loss = val.loss;
        stats.val_mae = val.mae;
        stats.lr = lr;
        report.epochs.push_back(stats);

        const bool stop = stopper.observe(val.loss);
        if (stopper.improved_last()) {
            report.best_epoch = epoch;
            report.best_val_loss = val.loss;
            snapshot();
        }
        plateau.observe(val.loss);
        if (stop) {
            report.stop_reason = epoch >= config.max_epochs ? "max_epochs" : "early_stop";
            break;
        }
    }
    if (report.stop_reason.empty()) report.stop_reason = "max_epochs";

    // Leave the model at its best-validation weights.
    if (!best_weights.empty())
        for (size_t i = 0; i < model.params.size(); ++i)
            model.params[i].tensor.data() = best_weights[i];
    if (!config.checkpoint_path.empty()) {
        nn::save_checkpoint(config.checkpoint_path, model.params);
        report.checkpoint = config.checkpoint_path;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void TrainReport::write_json(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["stop_reason"] = stop_reason;
    j["best_epoch"] = best_epoch;
    j["best_val_loss"] = best_val_loss;
    j["wall_seconds"] = wall_seconds;
    j["checkpoint"] = checkpoint.string();
    nlohmann::json epochs_json = nlohmann::json::array();
    for (const auto& e : epochs) {
        epochs_json.push_back({{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"val_loss", e.val_loss},
                               {"val_mae", e.val_mae},
                               {"lr", e.lr}});
    }
    j["epochs"] = std::move(epochs_json);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write train report: " + path.string());
    out << j.dump(2) << '\n';
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write loss curve: " + path.string());
    out << "epoch,train_loss,val_loss,val_mae,lr\n";
    char buf[256];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.val_loss, e.val_mae, e.lr);
        out << buf;
    }
}

}  // namespace microcount::train
