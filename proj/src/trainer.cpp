#include "salfield/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "salfield/binio.hpp"
#include "salfield/csl.hpp"

namespace salfield {

namespace {

enum Stream : std::uint64_t { kDecoderInit = 1, kLatentInit = 2, kPointNetInit = 3, kBatching = 4 };

std::vector<float> draw_latent(std::size_t dim, double std_dev, Rng& rng) {
    std::normal_distribution<double> n(0.0, std_dev);
    std::vector<float> z(dim);
    for (auto& v : z) v = static_cast<float>(n(rng));
    return z;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
    decoder.validate();
    if (batch_size == 0 || points_per_shape == 0) throw std::invalid_argument("train: batch size and points must be > 0");
    if (!(lr_decoder > 0) || !(lr_latent > 0) || !(lr_classifier > 0))
        throw std::invalid_argument("train: learning rates must be positive");
    if (lr_period == 0) throw std::invalid_argument("train: lr_period must be > 0");
    if (!(gamma >= 0)) throw std::invalid_argument("train: gamma must be >= 0");
    if (!(latent_init_std >= 0)) throw std::invalid_argument("train: latent_init_std must be >= 0");
    if (mode == TrainMode::Issn && gamma > 0)
        throw std::invalid_argument("train: gamma > 0 requires mode csl (issn mode has no classification term)");
    if (mode == TrainMode::Csl && interest.empty())
        throw std::invalid_argument("train: mode csl requires an interest category");
    if (balanced && interest.empty())
        throw std::invalid_argument("train: balanced batches require an interest category");
    if (uses_balanced_batches() && batch_size % 2 != 0)
        throw std::invalid_argument("train: balanced batches need an even batch size");
    if (pointnet.input_dim != 4 || pointnet.outputs != 1)
        throw std::invalid_argument("train: contrastive PointNet must map 4 inputs to 1 output");
}

std::vector<std::string> TrainConfig::keys() {
    return {"epochs",     "batch_size", "points_per_shape", "lr_decoder",      "lr_latent",     "lr_classifier",
            "lr_period",  "gamma",      "latent_init_std",  "seed",            "mode",          "interest",
            "balanced",   "latent_dim", "hidden",           "layers",          "skip_layer",    "delta",
            "lambda",     "beta",       "pointnet_widths",  "pointnet_head"};
}

KeyValueConfig TrainConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("points_per_shape", std::to_string(points_per_shape));
    kv.set("lr_decoder", format_double(lr_decoder));
    kv.set("lr_latent", format_double(lr_latent));
    kv.set("lr_classifier", format_double(lr_classifier));
    kv.set("lr_period", std::to_string(lr_period));
    kv.set("gamma", format_double(gamma));
    kv.set("latent_init_std", format_double(latent_init_std));
    kv.set("seed", std::to_string(seed));
    kv.set("mode", mode == TrainMode::Csl ? "csl" : "issn");
    kv.set("interest", interest);
    kv.set("balanced", balanced ? "true" : "false");
    kv.set("latent_dim", std::to_string(decoder.latent_dim));
    kv.set("hidden", std::to_string(decoder.hidden));
    kv.set("layers", std::to_string(decoder.layers));
    kv.set("skip_layer", std::to_string(decoder.skip_layer));
    kv.set("delta", format_double(decoder.delta));
    kv.set("lambda", format_double(decoder.lambda));
    kv.set("beta", format_double(decoder.beta));
    kv.set("pointnet_widths", join_sizes(pointnet.point_widths));
    kv.set("pointnet_head", join_sizes(pointnet.head_widths));
    return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) { return from_kv(kv, TrainConfig{}); }

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv, TrainConfig c) {
    kv.require_known(keys());
    c.epochs = kv.get_uint("epochs", c.epochs);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.points_per_shape = kv.get_uint("points_per_shape", c.points_per_shape);
    c.lr_decoder = kv.get_double("lr_decoder", c.lr_decoder);
    c.lr_latent = kv.get_double("lr_latent", c.lr_latent);
    c.lr_classifier = kv.get_double("lr_classifier", c.lr_classifier);
    c.lr_period = kv.get_uint("lr_period", c.lr_period);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.latent_init_std = kv.get_double("latent_init_std", c.latent_init_std);
    c.seed = kv.get_uint("seed", c.seed);
    if (auto m = kv.get("mode")) {
        if (*m == "issn")
            c.mode = TrainMode::Issn;
        else if (*m == "csl")
            c.mode = TrainMode::Csl;
        else
            throw ConfigError("mode must be issn or csl, got '" + *m + "'");
    }
    c.interest = kv.get_string("interest", c.interest);
    c.balanced = kv.get_bool("balanced", c.balanced);
    c.decoder.latent_dim = kv.get_uint("latent_dim", c.decoder.latent_dim);
    c.decoder.hidden = kv.get_uint("hidden", c.decoder.hidden);
    c.decoder.layers = kv.get_uint("layers", c.decoder.layers);
    c.decoder.skip_layer = kv.get_uint("skip_layer", c.decoder.skip_layer);
    c.decoder.delta = kv.get_double("delta", c.decoder.delta);
    c.decoder.lambda = kv.get_double("lambda", c.decoder.lambda);
    c.decoder.beta = kv.get_double("beta", c.decoder.beta);
    if (auto w = kv.get("pointnet_widths")) c.pointnet.point_widths = parse_sizes(*w, "pointnet_widths");
    if (auto w = kv.get("pointnet_head")) c.pointnet.head_widths = w->empty() ? std::vector<std::size_t>{} : parse_sizes(*w, "pointnet_head");
    return c;
}

double lr_at(std::size_t epoch, double lr0, std::size_t period) {
    if (period == 0) throw std::invalid_argument("lr_at: period must be > 0");
    return lr0 / std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(epoch / period, 1000)));
}

// ---------------------------------------------------------------------------
// Logs

std::string train_log_csv(const std::vector<TrainLogRow>& rows, bool header) {
    std::string s;
    if (header) s += "epoch,lr_decoder,lr_latent,loss_total,loss_sdf,loss_sal_reg,loss_cls,cls_acc\n";
    for (const auto& r : rows) {
        s += std::to_string(r.epoch) + ',' + format_double(r.lr_decoder) + ',' + format_double(r.lr_latent) + ',' +
             format_double(r.loss_total) + ',' + format_double(r.loss_sdf) + ',' + format_double(r.loss_sal_reg) +
             ',' + format_double(r.loss_cls) + ',' + format_double(r.cls_acc) + '\n';
    }
    return s;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows, bool append) {
    const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << train_log_csv(rows, header);
    if (!out) throw IoError("write failed on " + path.string());
}

// ---------------------------------------------------------------------------
// State <-> checkpoint

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::operator==(const Checkpoint& o) const {
    auto same_opt = [](const AdamState<float>& a, const AdamState<float>& b) {
        return a.step == b.step && a.m == b.m && a.v == b.v && a.beta1 == b.beta1 && a.beta2 == b.beta2 &&
               a.eps == b.eps;
    };
    if (kind != o.kind || config.values() != o.config.values() || shape_ids != o.shape_ids || latents != o.latents ||
        epoch != o.epoch || rng_state != o.rng_state || tensors.size() != o.tensors.size() ||
        optimizers.size() != o.optimizers.size())
        return false;
    for (std::size_t i = 0; i < tensors.size(); ++i)
        if (tensors[i].name != o.tensors[i].name || !(tensors[i].value == o.tensors[i].value)) return false;
    for (std::size_t i = 0; i < optimizers.size(); ++i)
        if (optimizers[i].name != o.optimizers[i].name || !same_opt(optimizers[i].state, o.optimizers[i].state))
            return false;
    return true;
}

Checkpoint TrainState::to_checkpoint() const {
    Checkpoint c;
    c.kind = "issn";
    c.config = config.to_kv();
    for (std::size_t i = 0; i < decoder.tensors.size(); ++i)
        c.tensors.push_back({"decoder." + std::to_string(i), decoder.tensors[i]});
    if (pointnet)
        for (std::size_t i = 0; i < pointnet->tensors.size(); ++i)
            c.tensors.push_back({"pointnet." + std::to_string(i), pointnet->tensors[i]});
    c.shape_ids = shape_ids;
    c.latents = latents;
    c.optimizers.push_back({"decoder", decoder_opt});
    if (pointnet) c.optimizers.push_back({"pointnet", pointnet_opt});
    for (std::size_t i = 0; i < latent_opt.size(); ++i)
        c.optimizers.push_back({"latent." + std::to_string(i), latent_opt[i]});
    c.epoch = epoch;
    c.rng_state = rng_state(rng);
    return c;
}

namespace {
template <class P>
void take_tensors(const Checkpoint& c, const std::string& prefix, P& params) {
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const auto& t = c.tensor(prefix + std::to_string(i));
        if (t.shape() != params.tensors[i].shape())
            throw FormatError("checkpoint tensor " + prefix + std::to_string(i) + " has shape " + shape_str(t.shape()) +
                              ", config implies " + shape_str(params.tensors[i].shape()));
        params.tensors[i] = t;
    }
}

const AdamState<float>* find_opt(const Checkpoint& c, const std::string& name) {
    for (const auto& o : c.optimizers)
        if (o.name == name) return &o.state;
    return nullptr;
}
}  // namespace

TrainState TrainState::from_checkpoint(const Checkpoint& c) {
    if (c.kind != "issn") throw FormatError("checkpoint kind '" + c.kind + "' is not an ISSN model");
    TrainState s;
    s.config = TrainConfig::from_kv(c.config);
    s.decoder = DecoderParams<float>::init(s.config.decoder, 0);
    take_tensors(c, "decoder.", s.decoder);
    const bool has_pointnet = std::any_of(c.tensors.begin(), c.tensors.end(),
                                          [](const NamedTensor& t) { return t.name.rfind("pointnet.", 0) == 0; });
    if (has_pointnet) {
        s.pointnet = PointNetParams<float>::init(s.config.pointnet, 0);
        take_tensors(c, "pointnet.", *s.pointnet);
    }
    if (c.shape_ids.size() != c.latents.size()) throw FormatError("checkpoint latent table is inconsistent");
    for (const auto& z : c.latents)
        if (z.size() != s.config.decoder.latent_dim) throw FormatError("checkpoint latent has wrong dimension");
    s.shape_ids = c.shape_ids;
    s.latents = c.latents;
    if (auto o = find_opt(c, "decoder")) s.decoder_opt = *o;
    if (auto o = find_opt(c, "pointnet")) s.pointnet_opt = *o;
    s.latent_opt.resize(s.latents.size());
    for (std::size_t i = 0; i < s.latents.size(); ++i)
        if (auto o = find_opt(c, "latent." + std::to_string(i))) s.latent_opt[i] = *o;
    s.epoch = c.epoch;
    s.rng = c.rng_state.empty() ? Rng(derive_seed(s.config.seed, kBatching)) : rng_from_state(c.rng_state);
    return s;
}

const std::vector<float>& TrainState::latent(const std::string& shape_id) const {
    for (std::size_t i = 0; i < shape_ids.size(); ++i)
        if (shape_ids[i] == shape_id) return latents[i];
    throw std::out_of_range("no latent for shape '" + shape_id + "'");
}

// ---------------------------------------------------------------------------
// Training

TrainState init_train_state(const std::vector<TrainShape>& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    TrainState s;
    s.config = config;
    s.decoder = DecoderParams<float>::init(config.decoder, derive_seed(config.seed, kDecoderInit));
    if (config.mode == TrainMode::Csl)
        s.pointnet = PointNetParams<float>::init(config.pointnet, derive_seed(config.seed, kPointNetInit));
    Rng zr(derive_seed(config.seed, kLatentInit));
    for (const auto& sh : dataset) {
        if (sh.samples.size() == 0) throw std::invalid_argument("train: shape '" + sh.id + "' has no samples");
        sh.samples.validate();
        s.shape_ids.push_back(sh.id);
        s.latents.push_back(draw_latent(config.decoder.latent_dim, config.latent_init_std, zr));
    }
    s.latent_opt.resize(dataset.size());
    s.rng = Rng(derive_seed(config.seed, kBatching));
    return s;
}

namespace {

struct StepStats {
    double total = 0, sdf = 0, sal_reg = 0, cls = 0;
    std::size_t correct = 0, scored = 0;
};

StepStats train_step(TrainState& st, const std::vector<TrainShape>& data, const std::vector<std::size_t>& batch,
                     const std::vector<bool>& interest, double lr_dec, double lr_lat, double lr_cls) {
    const auto& cfg = st.config;
    const std::size_t P = cfg.points_per_shape, B = batch.size(), D = cfg.decoder.latent_dim;
    ad::Graph<float> g;
    const auto dvars = bind_params(g, st.decoder.tensors, true);

    std::vector<ad::Var> zvars, reps;
    Tensor<float> pts(Shape{B * P, 3});
    std::vector<float> gt(B * P);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& samples = data[batch[b]].samples;
        std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
        for (std::size_t k = 0; k < P; ++k) {
            const auto i = pick(st.rng);
            const auto row = b * P + k;
            for (int c = 0; c < 3; ++c) pts[row * 3 + c] = samples.points[i][c];
            gt[row] = samples.sdf[i];
        }
        zvars.push_back(g.variable(Tensor<float>(Shape{1, D}, st.latents[batch[b]])));
        reps.push_back(ad::repeat_rows(g, zvars.back(), P));
    }
    const ad::Var pv = g.constant(std::move(pts));
    const FieldVars f = decode(g, cfg.decoder, dvars, ad::concat_rows(g, std::span<const ad::Var>(reps)), pv);
    const IssnLossVars loss = issn_loss(g, f, gt, zvars, cfg.decoder);

    StepStats out;
    ad::Var total = loss.total;
    std::vector<ad::Var> pvars;
    if (cfg.mode == TrainMode::Csl) {
        pvars = bind_params(g, st.pointnet->tensors, cfg.gamma > 0);
        std::vector<float> labels(B);
        for (std::size_t b = 0; b < B; ++b) labels[b] = interest[batch[b]] ? 1.0f : 0.0f;
        const ad::Var q = build_q(g, pv, f.sdf);
        const ad::Var prob = classify(g, cfg.pointnet, pvars, q, f.saliency, P);
        const ad::Var cls = bce_loss(g, prob, labels);
        total = csl_loss(g, loss.total, cls, cfg.gamma);
        out.cls = g.value(cls)[0];
        for (std::size_t b = 0; b < B; ++b) {
            const bool predicted = g.value(prob)[b] > 0.5f;
            out.correct += predicted == (labels[b] > 0.5f);
        }
        out.scored = B;
    }
    out.total = g.value(total)[0];
    out.sdf = g.value(loss.sdf_term)[0];
    out.sal_reg = loss.sal_reg.valid() ? double(g.value(loss.sal_reg)[0]) : 0.0;
    if (!std::isfinite(out.total))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(st.epoch));

    g.backward(total);
    std::vector<Tensor<float>> grads;
    for (auto v : dvars) grads.push_back(g.grad(v));
    adam_step(st.decoder.tensors, grads, st.decoder_opt, lr_dec);
    if (cfg.mode == TrainMode::Csl && cfg.gamma > 0) {
        grads.clear();
        for (auto v : pvars) grads.push_back(g.grad(v));
        adam_step(st.pointnet->tensors, grads, st.pointnet_opt, lr_cls);
    }
    // A shape drawn twice in one balanced batch gets both gradient rows summed, updated once.
    std::vector<std::size_t> done;
    for (std::size_t b = 0; b < B; ++b) {
        const auto idx = batch[b];
        if (std::find(done.begin(), done.end(), idx) != done.end()) continue;
        done.push_back(idx);
        Tensor<float> gz = g.grad(zvars[b]);
        for (std::size_t b2 = b + 1; b2 < B; ++b2)
            if (batch[b2] == idx)
                for (std::size_t k = 0; k < D; ++k) gz[k] += g.grad(zvars[b2])[k];
        std::vector<Tensor<float>> zp{Tensor<float>(Shape{1, D}, st.latents[idx])};
        adam_step(zp, {gz}, st.latent_opt[idx], lr_lat);
        st.latents[idx] = zp[0].storage();
    }
    return out;
}

}  // namespace

std::vector<TrainLogRow> train_epochs(TrainState& st, const std::vector<TrainShape>& data, std::size_t until_epoch,
                                      const EpochCallback& on_epoch) {
    const auto& cfg = st.config;
    cfg.validate();
    if (data.size() != st.latents.size()) throw std::invalid_argument("train: dataset does not match the latent table");
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i].id != st.shape_ids[i])
            throw std::invalid_argument("train: dataset order does not match checkpoint (shape " + data[i].id + ")");
    std::vector<bool> interest(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) interest[i] = data[i].category == cfg.interest;
    if (cfg.mode == TrainMode::Csl) {
        std::vector<std::string> cats;
        for (const auto& d : data) cats.push_back(d.category);
        std::sort(cats.begin(), cats.end());
        if (std::unique(cats.begin(), cats.end()) - cats.begin() < 2)
            throw std::invalid_argument("train csl: need at least two categories");
        if (std::find(interest.begin(), interest.end(), true) == interest.end())
            throw std::invalid_argument("train csl: no shapes of interest category '" + cfg.interest + "'");
        if (!st.pointnet) throw std::invalid_argument("train csl: state has no classifier");
    }

    std::vector<TrainLogRow> log;
    const std::size_t steps = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (; st.epoch < until_epoch;) {
        const auto epoch = st.epoch;
        TrainLogRow row;
        row.epoch = epoch;
        row.lr_decoder = lr_at(epoch, cfg.lr_decoder, cfg.lr_period);
        row.lr_latent = lr_at(epoch, cfg.lr_latent, cfg.lr_period);
        const double lr_cls = lr_at(epoch, cfg.lr_classifier, cfg.lr_period);

        std::vector<std::vector<std::size_t>> batches;
        if (cfg.uses_balanced_batches()) {
            BalancedSampler sampler(interest);
            for (std::size_t s = 0; s < steps; ++s) batches.push_back(sampler.next(cfg.batch_size, st.rng));
        } else {
            std::vector<std::size_t> perm(data.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), st.rng);
            for (std::size_t s = 0; s < perm.size(); s += cfg.batch_size)
                batches.emplace_back(perm.begin() + s, perm.begin() + std::min(perm.size(), s + cfg.batch_size));
        }
        std::size_t correct = 0, scored = 0;
        for (const auto& batch : batches) {
            const auto r = train_step(st, data, batch, interest, row.lr_decoder, row.lr_latent, lr_cls);
            row.loss_total += r.total;
            row.loss_sdf += r.sdf;
            row.loss_sal_reg += r.sal_reg;
            row.loss_cls += r.cls;
            correct += r.correct;
            scored += r.scored;
        }
        const double n = double(batches.size());
        row.loss_total /= n;
        row.loss_sdf /= n;
        row.loss_sal_reg /= n;
        row.loss_cls /= n;
        row.cls_acc = scored ? double(correct) / double(scored) : 0.0;
        st.epoch = epoch + 1;
        log.push_back(row);
        if (on_epoch && !on_epoch(row, st)) break;
    }
    return log;
}

TrainResult train_issn(const std::vector<TrainShape>& dataset, const TrainConfig& config) {
    if (config.mode != TrainMode::Issn) throw std::invalid_argument("train_issn: config mode must be issn");
    TrainResult r{init_train_state(dataset, config), {}};
    r.log = train_epochs(r.state, dataset, config.epochs);
    return r;
}

TrainResult train_csl(const std::vector<TrainShape>& dataset, const TrainConfig& config) {
    if (config.mode != TrainMode::Csl) throw std::invalid_argument("train_csl: config mode must be csl");
    TrainResult r{init_train_state(dataset, config), {}};
    r.log = train_epochs(r.state, dataset, config.epochs);
    return r;
}

// ---------------------------------------------------------------------------
// Inference helpers

FieldPrediction<float> evaluate_field(const DecoderParams<float>& decoder, std::span<const float> z,
                                      std::span<const std::array<float, 3>> points, std::size_t chunk) {
    FieldPrediction<float> out;
    out.sdf.reserve(points.size());
    out.saliency.reserve(points.size());
    for (std::size_t s = 0; s < points.size(); s += chunk) {
        const std::size_t n = std::min(chunk, points.size() - s);
        Tensor<float> p(Shape{n, 3});
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) p[i * 3 + c] = points[s + i][c];
        const auto f = decode(decoder, z, p);
        out.sdf.insert(out.sdf.end(), f.sdf.begin(), f.sdf.end());
        out.saliency.insert(out.saliency.end(), f.saliency.begin(), f.saliency.end());
    }
    return out;
}

double mean_clamped_l1(const DecoderParams<float>& decoder, std::span<const float> z, const SdfSampleSet& samples) {
    if (samples.size() == 0) throw std::invalid_argument("mean_clamped_l1: empty sample set");
    const auto f = evaluate_field(decoder, z, samples.points);
    const float delta = static_cast<float>(decoder.config.delta);
    double s = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) s += clamped_l1(f.sdf[i], samples.sdf[i], delta);
    return s / double(samples.size());
}

LatentFit optimize_latent(const DecoderParams<float>& decoder, const SdfSampleSet& samples,
                          const LatentFitConfig& cfg) {
    if (samples.size() == 0) throw std::invalid_argument("optimize_latent: empty sample set");
    if (!(cfg.lr > 0) || cfg.points == 0) throw std::invalid_argument("optimize_latent: bad lr or point budget");
    const auto& dc = decoder.config;
    Rng rng(cfg.seed);
    LatentFit fit;
    fit.z = draw_latent(dc.latent_dim, cfg.init_std, rng);

    const std::size_t n = std::min(cfg.points, samples.size());
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (n < samples.size()) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n);
        std::sort(idx.begin(), idx.end());
    }
    Tensor<float> pts(Shape{n, 3});
    std::vector<float> gt(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (int c = 0; c < 3; ++c) pts[k * 3 + c] = samples.points[idx[k]][c];
        gt[k] = samples.sdf[idx[k]];
    }
    AdamState<float> opt;
    auto objective = [&](bool step) {
        ad::Graph<float> g;
        const auto dvars = bind_params(g, decoder.tensors, false);
        const ad::Var z = g.variable(Tensor<float>(Shape{1, dc.latent_dim}, fit.z));
        const FieldVars f = decode(g, dc, dvars, ad::repeat_rows(g, z, n), g.constant(pts));
        const auto loss = issn_loss(g, f, gt, std::span<const ad::Var>(&z, 1), dc);
        const double value = g.value(loss.total)[0];
        if (!std::isfinite(value)) throw std::runtime_error("optimize_latent: non-finite loss");
        if (step) {
            g.backward(loss.total);
            std::vector<Tensor<float>> zp{Tensor<float>(Shape{1, dc.latent_dim}, fit.z)};
            adam_step(zp, {g.grad(z)}, opt, cfg.lr);
            fit.z = zp[0].storage();
        }
        return value;
    };
    for (std::size_t s = 0; s < cfg.steps; ++s) fit.history.push_back(objective(true));
    fit.final_loss = objective(false);
    fit.initial_loss = fit.history.empty() ? fit.final_loss : fit.history.front();
    return fit;
}

}  // namespace salfield
