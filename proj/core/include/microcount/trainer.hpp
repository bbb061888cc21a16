#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "microcount/adapters.hpp"
#include "microcount/manifest.hpp"
#include "microcount/models.hpp"

namespace microcount::train {

enum class LossKind { l1, mse };

struct TrainConfig {
    double base_lr = 1e-4;
    double warmup_start_fraction = 0.01;  // warm-up starts at base_lr/100
    int warmup_steps = 5000;
    bool warmup_enabled = true;  // applied to transformer families only
    int plateau_patience = 5;
    double plateau_factor = 0.5;
    double improvement_rel = 1e-4;  // relative improvement that resets patience
    int early_stop_patience = 20;
    int max_epochs = 400;
    int batch_size = 0;  // 0: family default
    uint64_t seed = 0;
    LossKind loss = LossKind::l1;
    std::filesystem::path checkpoint_path;  // best weights; empty to skip

    void validate() const;
};

// 128 for the small CNNs, 64 for vanilla ViT / CrossViT / TransCrowd /
// ResNet, 32 for Parallel ViT, DeepViT, and XCiT.
int default_batch_size(models::Family family);

// Linear ramp from base_lr*fraction to base_lr over warmup_steps, constant
// afterwards; the whole schedule collapses to base_lr when warm-up is off.
double warmup_lr(const TrainConfig& config, long long step);

// Multiplies the rate by plateau_factor after `patience` consecutive
// epochs without relative improvement, then restarts the window.
class PlateauScheduler {
  public:
    explicit PlateauScheduler(const TrainConfig& config) : config_(config) {}
    double scale() const { return scale_; }
    // One call per epoch; returns true when the factor fired.
    bool observe(double val_loss);

  private:
    TrainConfig config_;
    double best_ = 0.0;
    bool has_best_ = false;
    int stale_ = 0;
    double scale_ = 1.0;
};

// Signals stop after `patience` epochs without improvement or at the epoch
// cap.
class EarlyStopper {
  public:
    explicit EarlyStopper(const TrainConfig& config) : config_(config) {}
    // One call per epoch; returns true when training should stop.
    bool observe(double val_loss);
    bool improved_last() const { return improved_last_; }
    double best() const { return best_; }

  private:
    TrainConfig config_;
    double best_ = 0.0;
    bool has_best_ = false;
    int stale_ = 0;
    int epoch_ = 0;
    bool improved_last_ = false;
};

nn::Tensor count_loss(const nn::Tensor& predicted, const nn::Tensor& truth, LossKind kind);

// Adaptive moment estimation, beta 0.9/0.999, eps 1e-8.
class Adam {
  public:
    explicit Adam(std::vector<nn::NamedTensor>& params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(double lr);
    void zero_grad();

  private:
    std::vector<nn::NamedTensor>* params_;
    std::vector<std::vector<float>> m_, v_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
};

// Decoded and preprocessed samples held in memory; one decode per image
// per run.
struct Sample {
    std::vector<float> chw;
    float count = 0.f;
};
struct TensorDataset {
    int size = 0;  // side length; tensors are (3, size, size)
    std::vector<Sample> samples;
};
TensorDataset load_dataset(const Manifest& manifest, const adapt::NormalizationStats& stats,
                           int input_size);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_mae = 0.0;
    double lr = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::string stop_reason;  // "max_epochs" | "early_stop" | "diverged"
    int best_epoch = -1;
    double best_val_loss = 0.0;
    double wall_seconds = 0.0;
    std::filesystem::path checkpoint;

    void write_json(const std::filesystem::path& path) const;
    void write_csv(const std::filesystem::path& path) const;
};

// Seeded-shuffle mini-batch training with warm-up, plateau scheduling,
// early stopping, and best-checkpoint tracking. Deterministic for a fixed
// seed. Non-finite loss aborts with stop_reason "diverged".
TrainReport train(models::CountingModel& model, const TensorDataset& train_set,
                  const TensorDataset& val_set, const TrainConfig& config);

}  // namespace microcount::train
