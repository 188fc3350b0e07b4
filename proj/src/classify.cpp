#include "salfield/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "salfield/binio.hpp"
#include "salfield/saliency_eval.hpp"

namespace salfield {

namespace {
enum Stream : std::uint64_t { kInit = 5, kBatching = 6 };
}

void ClassifierConfig::validate() const {
    if (classes < 2) throw std::invalid_argument("classifier: class count must be >= 2");
    if (points == 0 || batch_size == 0 || epochs == 0) throw std::invalid_argument("classifier: points, batch size and epochs must be > 0");
    if (point_widths.empty()) throw std::invalid_argument("classifier: needs at least one shared layer");
    if (!(lr > 0)) throw std::invalid_argument("classifier: lr must be > 0");
    if (weight_layer >= point_widths.size())
        throw std::invalid_argument("classifier: weight_layer " + std::to_string(weight_layer) + " but only " +
                                    std::to_string(point_widths.size()) + " shared layers");
}

PointNetConfig ClassifierConfig::pointnet() const {
    PointNetConfig c;
    c.input_dim = 3;
    c.point_widths = point_widths;
    c.head_widths = head_widths;
    c.outputs = classes;
    return c;
}

std::vector<std::string> ClassifierConfig::keys() {
    return {"classes", "points", "widths", "head", "epochs", "batch_size", "lr", "weighted", "weight_layer", "seed"};
}

KeyValueConfig ClassifierConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set("classes", std::to_string(classes));
    kv.set("points", std::to_string(points));
    kv.set("widths", join_sizes(point_widths));
    kv.set("head", join_sizes(head_widths));
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lr", format_double(lr));
    kv.set("weighted", weighted ? "true" : "false");
    kv.set("weight_layer", std::to_string(weight_layer));
    kv.set("seed", std::to_string(seed));
    return kv;
}

ClassifierConfig ClassifierConfig::from_kv(const KeyValueConfig& kv, ClassifierConfig c) {
    kv.require_known(keys());
    c.classes = kv.get_uint("classes", c.classes);
    c.points = kv.get_uint("points", c.points);
    if (auto w = kv.get("widths")) c.point_widths = parse_sizes(*w, "widths");
    if (auto w = kv.get("head")) c.head_widths = parse_sizes(*w, "head");
    c.epochs = kv.get_uint("epochs", c.epochs);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.lr = kv.get_double("lr", c.lr);
    c.weighted = kv.get_bool("weighted", c.weighted);
    c.weight_layer = kv.get_uint("weight_layer", c.weight_layer);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
}

// Class names travel in the checkpoint's id table.
Checkpoint ClassifierModel::to_checkpoint() const {
    Checkpoint c;
    c.kind = "classifier";
    c.config = config.to_kv();
    for (std::size_t i = 0; i < net.tensors.size(); ++i) c.tensors.push_back({"classifier." + std::to_string(i), net.tensors[i]});
    c.shape_ids = class_names;
    c.latents.assign(class_names.size(), {});
    c.optimizers.push_back({"classifier", opt});
    c.epoch = epoch;
    c.rng_state = rng_state(rng);
    return c;
}

ClassifierModel ClassifierModel::from_checkpoint(const Checkpoint& c) {
    if (c.kind != "classifier") throw FormatError("checkpoint kind '" + c.kind + "' is not a classifier");
    ClassifierModel m;
    m.config = ClassifierConfig::from_kv(c.config);
    m.config.validate();
    m.net = PointNetParams<float>::init(m.config.pointnet(), 0);
    for (std::size_t i = 0; i < m.net.tensors.size(); ++i) {
        const auto& t = c.tensor("classifier." + std::to_string(i));
        if (t.shape() != m.net.tensors[i].shape())
            throw FormatError("classifier tensor " + std::to_string(i) + " does not match its config");
        m.net.tensors[i] = t;
    }
    m.class_names = c.shape_ids;
    for (const auto& o : c.optimizers)
        if (o.name == "classifier") m.opt = o.state;
    m.epoch = c.epoch;
    m.rng = c.rng_state.empty() ? Rng(derive_seed(m.config.seed, kBatching)) : rng_from_state(c.rng_state);
    return m;
}

namespace {

Tensor<float> stack_points(const std::vector<ClassSample>& data, std::span<const std::size_t> idx, std::size_t n) {
    Tensor<float> x = Tensor<float>::matrix(idx.size() * n, 3);
    for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) x[(b * n + i) * 3 + c] = float(data[idx[b]].points[i][c]);
    return x;
}

int argmax_row(const Tensor<float>& l, std::size_t r) {
    const std::size_t c = l.cols();
    int best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (l[r * c + j] > l[r * c + std::size_t(best)]) best = int(j);
    return best;
}

}  // namespace

std::vector<int> ClassifierModel::predict(const std::vector<ClassSample>& data) const {
    std::vector<int> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].points.empty()) throw std::invalid_argument("classifier: empty cloud '" + data[i].id + "'");
        ad::Graph<float> g;
        const auto params = bind_params(g, net.tensors, false);
        const std::size_t one[1] = {i};
        const auto x = g.constant(stack_points(data, one, data[i].points.size()));
        const auto logits = pointnet_logits(g, net.config, std::span<const ad::Var>(params), x, data[i].points.size());
        out.push_back(argmax_row(g.value(logits), 0));
    }
    return out;
}

ClassifierRun train_classifier(const std::vector<ClassSample>& data, const ClassifierConfig& config,
                               const std::vector<std::vector<double>>* saliency, std::vector<std::string> class_names) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("classifier: empty training set");
    for (const auto& s : data) {
        if (s.points.size() != config.points)
            throw std::invalid_argument("classifier: cloud '" + s.id + "' has " + std::to_string(s.points.size()) +
                                        " points, config expects " + std::to_string(config.points));
        if (s.label < 0 || std::size_t(s.label) >= config.classes)
            throw std::invalid_argument("classifier: label " + std::to_string(s.label) + " of '" + s.id + "' out of range");
    }
    if (config.weighted) {
        if (!saliency || saliency->size() != data.size())
            throw std::invalid_argument("classifier: weighting enabled but saliency maps do not cover the training set");
        for (std::size_t i = 0; i < data.size(); ++i)
            if ((*saliency)[i].size() != data[i].points.size())
                throw std::invalid_argument("classifier: saliency map of '" + data[i].id + "' has wrong length");
    }
    if (class_names.empty())
        for (std::size_t c = 0; c < config.classes; ++c) class_names.push_back(std::to_string(c));
    if (class_names.size() != config.classes) throw std::invalid_argument("classifier: class name count mismatch");

    ClassifierRun run;
    auto& m = run.model;
    m.config = config;
    m.class_names = std::move(class_names);
    m.net = PointNetParams<float>::init(config.pointnet(), derive_seed(config.seed, kInit));
    m.rng = Rng(derive_seed(config.seed, kBatching));
    const std::size_t n = config.points;

    for (; m.epoch < config.epochs; ++m.epoch) {
        std::vector<std::size_t> perm(data.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), m.rng);
        ClassifierEpoch row;
        row.epoch = m.epoch;
        std::size_t correct = 0, steps = 0;
        for (std::size_t s = 0; s < perm.size(); s += config.batch_size, ++steps) {
            const std::span<const std::size_t> batch(perm.data() + s, std::min(config.batch_size, perm.size() - s));
            ad::Graph<float> g;
            const auto params = bind_params(g, m.net.tensors, true);
            std::vector<int> labels;
            for (auto i : batch) labels.push_back(data[i].label);
            std::optional<FeatureGradWeighting<float>> fw;
            if (config.weighted) {
                fw.emplace();
                fw->layer = config.weight_layer;
                for (auto i : batch)
                    for (double w : (*saliency)[i]) fw->weights.push_back(float(w));
            }
            const auto logits = pointnet_logits(g, m.net.config, std::span<const ad::Var>(params),
                                                g.constant(stack_points(data, batch, n)), n, fw ? &*fw : nullptr);
            const auto loss = ad::softmax_cross_entropy(g, logits, labels);
            const double lv = g.value(loss)[0];
            if (!std::isfinite(lv)) throw std::runtime_error("classifier: non-finite loss at epoch " + std::to_string(m.epoch));
            row.loss += lv;
            for (std::size_t b = 0; b < batch.size(); ++b) correct += argmax_row(g.value(logits), b) == labels[b];
            g.backward(loss);
            std::vector<Tensor<float>> grads;
            for (auto v : params) grads.push_back(g.grad(v));
            adam_step(m.net.tensors, grads, m.opt, config.lr);
        }
        row.loss /= double(steps);
        row.train_acc = double(correct) / double(data.size());
        run.log.push_back(row);
    }
    return run;
}

Accuracy accuracy_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t classes) {
    if (truth.empty()) throw std::invalid_argument("accuracy: empty dataset");
    if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: prediction count mismatch");
    Accuracy a;
    std::vector<std::size_t> hit(classes, 0), total(classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || std::size_t(truth[i]) >= classes) throw std::invalid_argument("accuracy: label out of range");
        ++total[std::size_t(truth[i])];
        if (predicted[i] == truth[i]) {
            ++correct;
            ++hit[std::size_t(truth[i])];
        }
    }
    a.overall = double(correct) / double(truth.size());
    double sum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (total[c] == 0) {
            a.per_class.push_back(std::nullopt);
            continue;
        }
        const double r = double(hit[c]) / double(total[c]);
        a.per_class.push_back(r);
        sum += r;
        ++present;
    }
    a.avg_class = sum / double(present);
    return a;
}

Accuracy evaluate_classifier(const ClassifierModel& model, const std::vector<ClassSample>& data) {
    if (data.empty()) throw std::invalid_argument("evaluate_classifier: empty dataset");
    std::vector<int> truth;
    for (const auto& s : data) truth.push_back(s.label);
    return accuracy_from_predictions(model.predict(data), truth, model.config.classes);
}

std::vector<ClassSample> topk_dataset(const std::vector<ClassSample>& data,
                                      const std::vector<std::vector<double>>& saliency, std::size_t k) {
    if (saliency.size() != data.size()) throw std::invalid_argument("topk_dataset: one saliency map per cloud required");
    std::vector<ClassSample> out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (k > data[i].points.size())
            throw std::invalid_argument("topk_dataset: k=" + std::to_string(k) + " exceeds cloud size of '" +
                                        data[i].id + "'");
        ClassSample s{data[i].id, {}, data[i].label};
        s.points = topk_salient(data[i].points, saliency[i], k).points;
        out.push_back(std::move(s));
    }
    return out;
}

Accuracy salient_points_experiment(const std::vector<ClassSample>& train,
                                   const std::vector<std::vector<double>>& train_saliency,
                                   const std::vector<ClassSample>& test,
                                   const std::vector<std::vector<double>>& test_saliency, std::size_t k,
                                   ClassifierConfig config) {
    const auto tr = topk_dataset(train, train_saliency, k);
    const auto te = topk_dataset(test, test_saliency, k);
    config.points = k;
    config.weighted = false;
    const auto run = train_classifier(tr, config);
    return evaluate_classifier(run.model, te);
}

std::vector<std::vector<double>> random_saliency(const std::vector<ClassSample>& data, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::vector<double>> out;
    for (const auto& s : data) {
        std::vector<double> v(s.points.size());
        for (auto& x : v) x = u(rng);
        out.push_back(std::move(v));
    }
    return out;
}

std::string accuracy_csv(const std::vector<AccuracyRow>& rows, bool header) {
    std::string s;
    if (header) s += "run_id,method,k,overall_acc,avg_class_acc,epoch\n";
    for (const auto& r : rows)
        s += r.run_id + ',' + r.method + ',' + std::to_string(r.k) + ',' + format_double(r.overall_acc) + ',' +
             format_double(r.avg_class_acc) + ',' + std::to_string(r.epoch) + '\n';
    return s;
}

void write_accuracy(const std::filesystem::path& path, const std::vector<AccuracyRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << accuracy_csv(rows);
    if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace salfield
