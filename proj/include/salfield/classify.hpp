#pragma once

// Multi-class PointNet point cloud classifier: plain and saliency-weighted
// training, accuracy evaluation and the salient-point subset experiment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "salfield/adam.hpp"
#include "salfield/config.hpp"
#include "salfield/geometry.hpp"
#include "salfield/pointnet.hpp"
#include "salfield/rng.hpp"
#include "salfield/trainer.hpp"

namespace salfield {

struct ClassifierConfig {
    std::size_t classes = 2;
    std::size_t points = 1024;  // points per input cloud
    std::vector<std::size_t> point_widths{64, 128, 256};
    std::vector<std::size_t> head_widths{128};
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    bool weighted = false;         // saliency-weighted feature gradients
    std::size_t weight_layer = 0;  // shared layer m whose per-point gradients are scaled
    std::uint64_t seed = 0;

    void validate() const;
    PointNetConfig pointnet() const;

    KeyValueConfig to_kv() const;
    static ClassifierConfig from_kv(const KeyValueConfig& kv, ClassifierConfig base);
    static ClassifierConfig from_kv(const KeyValueConfig& kv) { return from_kv(kv, ClassifierConfig{}); }
    static std::vector<std::string> keys();
};

struct ClassSample {
    std::string id;
    std::vector<Vec3> points;
    int label = 0;
};

struct ClassifierEpoch {
    std::size_t epoch = 0;
    double loss = 0;
    double train_acc = 0;  // accuracy of the forward passes seen during the epoch
    bool operator==(const ClassifierEpoch&) const = default;
};

struct ClassifierModel {
    ClassifierConfig config;
    std::vector<std::string> class_names;
    PointNetParams<float> net;
    AdamState<float> opt;
    std::uint64_t epoch = 0;
    Rng rng;

    Checkpoint to_checkpoint() const;
    static ClassifierModel from_checkpoint(const Checkpoint& ckpt);

    /// Class index per cloud, each cloud classified on its own.
    std::vector<int> predict(const std::vector<ClassSample>& data) const;
};

struct ClassifierRun {
    ClassifierModel model;
    std::vector<ClassifierEpoch> log;
};

/// Cross-entropy training over shuffled batches. With config.weighted, row i
/// of the features at layer m is backpropagated scaled by saliency[i] of its
/// cloud; `saliency` must then cover every sample with one score per point.
ClassifierRun train_classifier(const std::vector<ClassSample>& data, const ClassifierConfig& config,
                               const std::vector<std::vector<double>>* saliency = nullptr,
                               std::vector<std::string> class_names = {});

struct Accuracy {
    double overall = 0;
    double avg_class = 0;  // mean recall over classes present in the data
    std::vector<std::optional<double>> per_class;
};

Accuracy accuracy_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                   std::size_t classes);
Accuracy evaluate_classifier(const ClassifierModel& model, const std::vector<ClassSample>& data);

/// Replaces each cloud by its k most salient points (ascending index order).
std::vector<ClassSample> topk_dataset(const std::vector<ClassSample>& data,
                                      const std::vector<std::vector<double>>& saliency, std::size_t k);

/// Trains on the top-k sets of the training clouds and scores the top-k sets
/// of the test clouds. config.points is set to k.
Accuracy salient_points_experiment(const std::vector<ClassSample>& train,
                                   const std::vector<std::vector<double>>& train_saliency,
                                   const std::vector<ClassSample>& test,
                                   const std::vector<std::vector<double>>& test_saliency, std::size_t k,
                                   ClassifierConfig config);

inline const std::vector<std::size_t> kTopkSizes{32, 64, 128, 256, 512};

/// Uniform random scores, one per point; the "random k points" control.
std::vector<std::vector<double>> random_saliency(const std::vector<ClassSample>& data, std::uint64_t seed);

struct AccuracyRow {
    std::string run_id;
    std::string method;
    std::size_t k = 0;  // 0 = full cloud
    double overall_acc = 0;
    double avg_class_acc = 0;
    std::size_t epoch = 0;
};

std::string accuracy_csv(const std::vector<AccuracyRow>& rows, bool header = true);
void write_accuracy(const std::filesystem::path& path, const std::vector<AccuracyRow>& rows);

}  // namespace salfield
