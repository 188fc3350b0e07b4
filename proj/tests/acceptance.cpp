// Acceptance runner: one PASS/FAIL line per criterion.
//   salfield_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "fd_oracle.hpp"
#include "salfield/adam.hpp"
#include "salfield/classify.hpp"
#include "salfield/csl.hpp"
#include "salfield/dataset.hpp"
#include "salfield/parallel.hpp"
#include "salfield/primitives.hpp"
#include "salfield/reconstruct.hpp"
#include "salfield/saliency_eval.hpp"
#include "salfield/trainer.hpp"

using namespace salfield;
namespace fs = std::filesystem;
using salfield::testing::fd_derivative;
using salfield::testing::rel_err;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "salfield_acceptance";
    fs::create_directories(dir);
    return dir / name;
}

// Compact desk profile shared by the training criteria.
TrainConfig desk_config(std::uint64_t seed) {
    TrainConfig c;
    c.decoder.latent_dim = 16;
    c.decoder.hidden = 64;
    c.decoder.layers = 4;
    c.decoder.skip_layer = 2;
    c.points_per_shape = 1024;
    c.batch_size = 2;
    c.epochs = 200;
    c.seed = seed;
    return c;
}

TrainConfig desk_csl_config(std::uint64_t seed, const std::string& interest, double lambda, double gamma) {
    TrainConfig c = desk_config(seed);
    c.mode = TrainMode::Csl;
    c.interest = interest;
    c.decoder.lambda = lambda;
    c.gamma = gamma;
    c.pointnet.point_widths = {32, 64, 128};
    c.pointnet.head_widths = {32};
    return c;
}

std::vector<TrainShape> train_shapes(const std::vector<ShapeRecord>& shapes, std::uint64_t seed, std::size_t n = 8000) {
    std::vector<TrainShape> out(shapes.size());
    SdfSamplingConfig sc;
    sc.n_total = n;
    parallel_for(shapes.size(), [&](std::size_t i) {
        out[i] = {shapes[i].id, shapes[i].category, sample_sdf(shapes[i].mesh, sc, derive_seed(seed, i), shapes[i].id)};
    });
    return out;
}

std::vector<ShapeRecord> make_set(const std::vector<std::string>& specs, std::size_t per_category, std::uint64_t seed) {
    std::vector<ShapeRecord> out;
    for (std::size_t c = 0; c < specs.size(); ++c)
        for (auto& s : generate_synthetic_category(builtin_spec(specs[c]), per_category, derive_seed(seed, c)))
            out.push_back(std::move(s));
    return out;
}

std::vector<LabelledCloud> clouds_of(const std::vector<ShapeRecord>& shapes, std::size_t n, std::uint64_t seed) {
    std::vector<LabelledCloud> out(shapes.size());
    parallel_for(shapes.size(), [&](std::size_t i) { out[i] = fps_labelled_surface(shapes[i], n, derive_seed(seed, i)); });
    return out;
}

// Mean normalized saliency over points whose predicate holds, averaged over shapes.
double masked_mean(const std::vector<LabelledCloud>& clouds, const std::vector<SaliencyMap>& maps,
                   const std::function<bool(std::size_t shape, std::size_t point)>& keep) {
    std::vector<double> per_shape;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        double s = 0;
        std::size_t n = 0;
        for (std::size_t p = 0; p < clouds[i].points.size(); ++p)
            if (keep(i, p)) s += maps[i].normalized[p], ++n;
        if (n) per_shape.push_back(s / double(n));
    }
    return mean_of(per_shape);
}

std::vector<SaliencyMap> issn_maps(const TrainState& st, const std::vector<ShapeRecord>& shapes,
                                   const std::vector<LabelledCloud>& clouds) {
    std::vector<SaliencyMap> maps(shapes.size());
    parallel_for(shapes.size(),
                 [&](std::size_t i) { maps[i] = issn_saliency(st.decoder, st.latent(shapes[i].id), clouds[i].points); });
    return maps;
}

// Synthetic world shared by criteria 5, 6 and 9: three categories with a
// per-category ISSN model, FPS clouds, and a classifier for the gradient baseline.
struct World {
    std::vector<std::string> categories{"table", "chair", "rocket"};
    std::vector<ShapeRecord> shapes;
    std::vector<LabelledCloud> clouds;
    std::map<std::string, TrainState> issn;
    ClassifierModel classifier;
};

const World& world() {
    static const World w = [] {
        World w;
        w.shapes = make_set(w.categories, 8, 7);
        w.clouds = clouds_of(w.shapes, 1024, 8);
        for (const auto& cat : w.categories) {
            std::vector<ShapeRecord> sub;
            for (const auto& s : w.shapes)
                if (s.category == cat) sub.push_back(s);
            w.issn.emplace(cat, train_issn(train_shapes(sub, 9), desk_config(10)).state);
        }
        ClassifierConfig cc;
        cc.classes = 3;
        cc.points = 1024;
        cc.epochs = 40;
        cc.seed = 11;
        std::vector<ClassSample> data;
        for (std::size_t i = 0; i < w.shapes.size(); ++i)
            data.push_back({w.shapes[i].id, w.clouds[i].points, int(i / 8)});
        w.classifier = train_classifier(data, cc).model;
        return w;
    }();
    return w;
}

std::vector<SaliencyMap> world_issn_maps() {
    const auto& w = world();
    std::vector<SaliencyMap> maps(w.shapes.size());
    parallel_for(w.shapes.size(), [&](std::size_t i) {
        const auto& st = w.issn.at(w.shapes[i].category);
        maps[i] = issn_saliency(st.decoder, st.latent(w.shapes[i].id), w.clouds[i].points);
    });
    return maps;
}

std::vector<SaliencyMap> world_grad_maps() {
    const auto& w = world();
    std::vector<SaliencyMap> maps(w.shapes.size());
    parallel_for(w.shapes.size(),
                 [&](std::size_t i) { maps[i] = gradient_saliency(w.classifier.net, w.clouds[i].points); });
    return maps;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient checks

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo, double hi, const std::vector<double>& kinks) {
    Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) {
        do v = u(rng);
        while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < 1e-2; }));
    }
    return t;
}

struct OpCase {
    std::string name;
    std::vector<Shape> inputs;
    double lo = -1, hi = 1;
    std::vector<double> kinks;
    std::function<ad::Var(ad::Graph<double>&, const std::vector<ad::Var>&)> build;
};

// Max relative error of d sum(op(x) * R) / dx over all inputs and entries.
double op_error(const OpCase& c, Rng& rng) {
    std::vector<Tensor<double>> xs;
    for (const auto& s : c.inputs) xs.push_back(random_tensor(s, rng, c.lo, c.hi, c.kinks));
    ad::Graph<double> probe;
    std::vector<ad::Var> pv;
    for (const auto& x : xs) pv.push_back(probe.constant(x));
    const auto weights = random_tensor(probe.value(c.build(probe, pv)).shape(), rng, -1, 1, {});

    auto value = [&](const std::vector<Tensor<double>>& in) {
        ad::Graph<double> g;
        std::vector<ad::Var> v;
        for (const auto& x : in) v.push_back(g.constant(x));
        const auto& y = g.value(c.build(g, v));
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
        return s;
    };
    ad::Graph<double> g;
    std::vector<ad::Var> vars;
    for (const auto& x : xs) vars.push_back(g.variable(x));
    g.backward(ad::sum(g, ad::mul(g, c.build(g, vars), g.constant(weights))));
    double worst = 0;
    for (std::size_t k = 0; k < xs.size(); ++k)
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            auto f = [&](double x) {
                auto in = xs;
                in[k][i] = x;
                return value(in);
            };
            worst = std::max(worst, rel_err(g.grad(vars[k])[i], fd_derivative(f, xs[k][i], 1e-6), 1e-6));
        }
    return worst;
}

std::vector<OpCase> op_cases() {
    using G = ad::Graph<double>;
    using V = std::vector<ad::Var>;
    const Shape m{4, 3};
    return {
        {"affine", {{4, 3}, {3, 2}, {2}}, -1, 1, {}, [](G& g, const V& v) { return ad::affine(g, v[0], v[1], v[2]); }},
        {"relu", {m}, -1, 1, {0}, [](G& g, const V& v) { return ad::relu(g, v[0]); }},
        {"tanh", {m}, -2, 2, {}, [](G& g, const V& v) { return ad::tanh(g, v[0]); }},
        {"sigmoid", {m}, -3, 3, {}, [](G& g, const V& v) { return ad::sigmoid(g, v[0]); }},
        {"log", {m}, 0.2, 2, {}, [](G& g, const V& v) { return ad::log(g, v[0]); }},
        {"neg", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::neg(g, v[0]); }},
        {"abs", {m}, -1, 1, {0}, [](G& g, const V& v) { return ad::abs(g, v[0]); }},
        {"mul_scalar", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::mul_scalar(g, v[0], -1.7); }},
        {"clamp_stopgrad", {m}, -0.3, 0.3, {-0.1, 0.1}, [](G& g, const V& v) { return ad::clamp_stopgrad(g, v[0], 0.1); }},
        {"add", {m, m}, -1, 1, {}, [](G& g, const V& v) { return ad::add(g, v[0], v[1]); }},
        {"sub", {m, m}, -1, 1, {}, [](G& g, const V& v) { return ad::sub(g, v[0], v[1]); }},
        {"mul", {m, m}, -1, 1, {}, [](G& g, const V& v) { return ad::mul(g, v[0], v[1]); }},
        {"max_over_segments", {{6, 3}}, -1, 1, {}, [](G& g, const V& v) { return ad::max_over_segments(g, v[0], 3); }},
        {"max_over_points", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::max_over_points(g, v[0]); }},
        {"concat_columns", {{4, 2}, m}, -1, 1, {}, [](G& g, const V& v) { return ad::concat_columns(g, v[0], v[1]); }},
        {"concat_rows", {{2, 3}, m}, -1, 1, {},
         [](G& g, const V& v) { return ad::concat_rows(g, std::span<const ad::Var>(v)); }},
        {"repeat_rows", {{1, 3}}, -1, 1, {}, [](G& g, const V& v) { return ad::repeat_rows(g, v[0], 5); }},
        {"column", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::column(g, v[0], 1); }},
        {"scale_rows", {m, {4, 1}}, -1, 1, {}, [](G& g, const V& v) { return ad::scale_rows(g, v[0], v[1]); }},
        {"sum", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::sum(g, v[0]); }},
        {"mean", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::mean(g, v[0]); }},
        {"sum_squares", {m}, -1, 1, {}, [](G& g, const V& v) { return ad::sum_squares(g, v[0]); }},
        {"binary_cross_entropy", {{5, 1}}, 0.05, 0.95, {},
         [](G& g, const V& v) { return ad::binary_cross_entropy(g, v[0], {1.0, 0.0, 0.0, 1.0, 1.0}); }},
        {"softmax_cross_entropy", {m}, -2, 2, {},
         [](G& g, const V& v) { return ad::softmax_cross_entropy(g, v[0], {0, 2, 1, 2}); }},
    };
}

// Gradient-only ops: identity forward, so their oracle is the forward derivative
// (1) times the prescribed backward factor.
double gradient_only_error(Rng& rng) {
    const auto x0 = random_tensor({4, 3}, rng, -1, 1, {});
    const auto r = random_tensor({4, 3}, rng, -1, 1, {});
    const std::vector<double> w{0.5, 0.0, 2.0, 1.0};
    double worst = 0;
    ad::Graph<double> g;
    const auto x = g.variable(x0);
    const auto y = ad::add(g, ad::scale_grad_rows(g, x, w), ad::mul_scalar(g, ad::detach(g, x), 3.0));
    g.backward(ad::sum(g, ad::mul(g, y, g.constant(r))));
    for (std::size_t i = 0; i < x0.size(); ++i) worst = std::max(worst, rel_err(g.grad(x)[i], w[i / 3] * r[i], 1e-12));
    return worst;
}

struct LossProbe {
    DecoderParams<double> dec;
    PointNetParams<double> pn;
    std::vector<std::vector<double>> z;
    Tensor<double> pts;
    std::vector<double> gt;
    std::vector<double> frozen_sdf;
};

// Eq. 1 batch loss, or Eq. 4 when `csl`; the Q sdf column is held at its unperturbed values.
ad::Var probe_loss(LossProbe& p, bool csl, ad::Graph<double>& g, std::vector<ad::Var>& dv, std::vector<ad::Var>& pv,
                   std::vector<ad::Var>& zv) {
    dv = bind_params(g, p.dec.tensors, true);
    pv = bind_params(g, p.pn.tensors, true);
    zv.clear();
    std::vector<ad::Var> reps;
    const std::size_t per = p.pts.rows() / p.z.size();
    for (const auto& z : p.z) {
        zv.push_back(g.variable(Tensor<double>(Shape{1, z.size()}, z)));
        reps.push_back(ad::repeat_rows(g, zv.back(), per));
    }
    const auto pts = g.constant(p.pts);
    const auto f = decode(g, p.dec.config, dv, ad::concat_rows(g, std::span<const ad::Var>(reps)), pts);
    const auto issn = issn_loss(g, f, p.gt, zv, p.dec.config);
    if (!csl) return issn.total;
    if (p.frozen_sdf.empty()) p.frozen_sdf = g.value(f.sdf).storage();
    const auto sdf_col = g.constant(Tensor<double>(Shape{p.pts.rows(), 1}, p.frozen_sdf));
    const auto prob = classify(g, p.pn.config, pv, build_q(g, pts, sdf_col), f.saliency, per);
    return csl_loss(g, issn.total, bce_loss(g, prob, {1.0, 0.0}), 0.7);
}

double full_loss_error(bool csl, std::uint64_t seed) {
    Rng rng(seed);
    DecoderConfig dc;
    dc.latent_dim = 3;
    dc.hidden = 8;
    dc.layers = 3;
    dc.skip_layer = 2;
    dc.lambda = 1e-2;
    PointNetConfig pc;
    pc.point_widths = {8, 8};
    pc.head_widths = {6};
    LossProbe p{DecoderParams<double>::init(dc, seed + 1), PointNetParams<double>::init(pc, seed + 2),
                {}, random_tensor({10, 3}, rng, -0.6, 0.6, {}), {}, {}};
    std::normal_distribution<double> n01(0, 0.1);
    for (int b = 0; b < 2; ++b) p.z.push_back({n01(rng), n01(rng), n01(rng)});
    for (std::size_t i = 0; i < 10; ++i) p.gt.push_back(std::sqrt(p.pts[3 * i] * p.pts[3 * i] + 0.05) - 0.3);

    ad::Graph<double> g;
    std::vector<ad::Var> dv, pv, zv;
    g.backward(probe_loss(p, csl, g, dv, pv, zv));
    // One random entry of a random trainable tensor (decoder, latents, and classifier for CSL).
    const std::size_t groups = csl ? 3 : 2;
    const std::size_t group = std::uniform_int_distribution<std::size_t>(0, groups - 1)(rng);
    double* slot = nullptr;
    double analytic = 0;
    if (group == 0) {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, p.dec.tensors.size() - 1)(rng);
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.dec.tensors[t].size() - 1)(rng);
        slot = &p.dec.tensors[t][i];
        analytic = g.grad(dv[t])[i];
    } else if (group == 1) {
        const std::size_t b = rng() % 2, i = rng() % 3;
        slot = &p.z[b][i];
        analytic = g.grad(zv[b])[i];
    } else {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, p.pn.tensors.size() - 1)(rng);
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.pn.tensors[t].size() - 1)(rng);
        slot = &p.pn.tensors[t][i];
        analytic = g.grad(pv[t])[i];
    }
    auto f = [&](double x) {
        const double keep = *slot;
        *slot = x;
        ad::Graph<double> g2;
        std::vector<ad::Var> a, b, c;
        const double v = g2.value(probe_loss(p, csl, g2, a, b, c))[0];
        *slot = keep;
        return v;
    };
    return rel_err(analytic, fd_derivative(f, *slot, 1e-6), 1e-6);
}

Outcome criterion1() {
    std::map<std::string, double> worst;
    for (std::uint64_t probe = 0; probe < 20; ++probe) {
        Rng rng(derive_seed(101, probe));
        for (const auto& c : op_cases()) worst[c.name] = std::max(worst[c.name], op_error(c, rng));
        worst["scale_grad_rows+detach"] = std::max(worst["scale_grad_rows+detach"], gradient_only_error(rng));
        worst["issn_loss"] = std::max(worst["issn_loss"], full_loss_error(false, derive_seed(102, probe)));
        worst["csl_loss"] = std::max(worst["csl_loss"], full_loss_error(true, derive_seed(103, probe)));
    }
    double max_err = 0;
    std::string name;
    for (const auto& [k, v] : worst)
        if (v >= max_err) max_err = v, name = k;
    return {max_err < 1e-3, std::to_string(worst.size()) + " checks x 20 probes, max rel err " + fmt(max_err, 3) + " (" +
                                name + "), need < 1e-3"};
}

// ---------------------------------------------------------------------------
// 2. Saliency head optimum under frozen residuals

// Golden-section minimum of L*s - lambda*log(s) on (0, 1].
double numeric_optimum(double L, double lambda) {
    auto f = [&](double s) { return L * s - lambda * std::log(s); };
    double a = 1e-9, b = 1.0;
    const double r = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 200; ++it) {
        const double c = b - r * (b - a), d = a + r * (b - a);
        (f(c) < f(d) ? b : a) = (f(c) < f(d) ? d : c);
    }
    return (a + b) / 2;
}

Outcome criterion2() {
    const double lambda = 1e-3;
    DecoderConfig dc;
    dc.latent_dim = 4;
    dc.hidden = 32;
    dc.layers = 3;
    dc.skip_layer = 2;
    dc.lambda = lambda;
    bool pass = true;
    std::string detail;
    for (double L : {0.01, 0.05, 0.2}) {
        auto dec = DecoderParams<float>::init(dc, 5);
        Rng rng(6);
        Tensor<float> pts(Shape{64, 3});
        std::uniform_real_distribution<double> u(-1, 1);
        for (auto& v : pts.values()) v = float(u(rng));
        // Prediction and target straddle zero so the clamped residual is L everywhere.
        const std::vector<float> gt(64, float(-L / 2));
        const Tensor<float> frozen_sdf(Shape{64, 1}, std::vector<float>(64, float(L / 2)));
        const std::vector<float> z(4, 0.0f);
        AdamState<float> opt;
        std::vector<float> sal;
        for (int step = 0; step < 3000; ++step) {
            ad::Graph<float> g;
            const auto vars = bind_params(g, dec.tensors, true);
            const auto zrow = g.constant(Tensor<float>(Shape{1, 4}, z));
            const auto f = decode(g, dc, vars, ad::repeat_rows(g, zrow, 64), g.constant(pts));
            const FieldVars frozen{g.constant(frozen_sdf), f.saliency};
            g.backward(issn_loss(g, frozen, gt, std::span<const ad::Var>(&zrow, 1), dc).total);
            std::vector<Tensor<float>> grads;
            for (auto v : vars) grads.push_back(g.grad(v));
            adam_step(dec.tensors, grads, opt, 1e-2);
        }
        sal = decode(dec, std::span<const float>(z), pts).saliency;
        const double target = numeric_optimum(L, lambda);
        double dev = 0;
        for (float s : sal) dev = std::max(dev, std::abs(double(s) - target));
        pass = pass && dev < 0.02;
        detail += "L=" + fmt(L) + ": target " + fmt(target) + " max |s - target| " + fmt(dev, 3) + "; ";
    }
    return {pass, detail + "need < 0.02"};
}

// ---------------------------------------------------------------------------
// 3. lambda = 0 reduces to clamped L1 + latent L2

Outcome criterion3() {
    double worst = 0;
    for (std::uint64_t b = 0; b < 20; ++b) {
        Rng rng(derive_seed(301, b));
        std::uniform_real_distribution<double> u(-0.3, 0.3), us(0.01, 0.99);
        std::normal_distribution<double> nz(0, 0.05);
        const std::size_t shapes = 1 + b % 3, per = 50;
        DecoderConfig dc;
        dc.lambda = 0;
        dc.latent_dim = 8;
        std::vector<float> f(shapes * per), s(shapes * per), gt(shapes * per);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = float(u(rng)), s[i] = float(us(rng)), gt[i] = float(u(rng));
        std::vector<std::vector<float>> z(shapes, std::vector<float>(8));
        for (auto& zz : z)
            for (auto& v : zz) v = float(nz(rng));

        ad::Graph<float> g;
        const FieldVars fv{g.constant(Tensor<float>(Shape{f.size(), 1}, f)), g.constant(Tensor<float>(Shape{f.size(), 1}, s))};
        std::vector<ad::Var> zv;
        for (const auto& zz : z) zv.push_back(g.constant(Tensor<float>(Shape{1, 8}, zz)));
        const double got = g.value(issn_loss(g, fv, gt, zv, dc).total)[0];

        double l1 = 0, zn = 0;
        for (std::size_t i = 0; i < f.size(); ++i)
            l1 += std::abs(std::clamp(double(f[i]), -0.1, 0.1) - std::clamp(double(gt[i]), -0.1, 0.1));
        for (const auto& zz : z)
            for (float v : zz) zn += double(v) * double(v);
        const double expected = l1 / double(f.size()) + dc.beta * zn / double(shapes);
        worst = std::max(worst, std::abs(got - expected));
    }
    return {worst < 1e-7, "20 random batches, max |loss - (clamped L1 + beta |z|^2)| " + fmt(worst, 3) + ", need < 1e-7"};
}

// ---------------------------------------------------------------------------
// 4. Common parts of a category are more salient than instance parts

Outcome criterion4() {
    double worst = 1e9;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto shapes = generate_synthetic_category(builtin_spec("table"), 8, seed);
        const auto run = train_issn(train_shapes(shapes, seed), desk_config(seed));
        const auto clouds = clouds_of(shapes, 1024, derive_seed(seed, 50));
        const auto maps = issn_maps(run.state, shapes, clouds);
        const double c = masked_mean(clouds, maps, [&](auto i, auto p) { return clouds[i].common[p] != 0; });
        const double s = masked_mean(clouds, maps, [&](auto i, auto p) { return clouds[i].common[p] == 0; });
        worst = std::min(worst, c / s);
        detail += "seed " + std::to_string(seed) + " common/specific " + fmt(c) + "/" + fmt(s) + " = " + fmt(c / s) + "; ";
    }
    return {worst >= 1.2, detail + "min ratio " + fmt(worst) + ", need >= 1.2"};
}

// ---------------------------------------------------------------------------
// 5. Smoothness ordering ISSN < PCA < gradient

Outcome criterion5() {
    const auto& w = world();
    const auto issn = world_issn_maps();
    const auto grad = world_grad_maps();
    std::vector<double> a, b, c;
    for (std::size_t i = 0; i < w.shapes.size(); ++i) {
        a.push_back(ssr(w.clouds[i].points, issn[i].normalized));
        b.push_back(ssr(w.clouds[i].points, pca_saliency(w.clouds[i].points).normalized));
        c.push_back(ssr(w.clouds[i].points, grad[i].normalized));
    }
    const double si = mean_of(a), sp = mean_of(b), sg = mean_of(c);
    const double gap1 = (sp - si) / sp, gap2 = (sg - sp) / sg;
    return {gap1 >= 0.1 && gap2 >= 0.1, "mean SSR issn " + fmt(si) + " pca " + fmt(sp) + " grad " + fmt(sg) +
                                            "; relative gaps " + fmt(gap1, 3) + ", " + fmt(gap2, 3) + ", need >= 0.1"};
}

// ---------------------------------------------------------------------------
// 6. Symmetry

Outcome criterion6() {
    const auto& w = world();
    const auto issn = world_issn_maps();
    const auto grad = world_grad_maps();
    std::vector<double> di, dg;
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < w.shapes.size(); ++i) {
        const auto ri = symmetry_report(w.clouds[i].points, issn[i].normalized);
        const auto rg = symmetry_report(w.clouds[i].points, grad[i].normalized);
        if (!ri.is_symmetric) continue;
        ++flagged;
        di.push_back(*ri.d_sym);
        dg.push_back(*rg.d_sym);
    }
    std::size_t asym = 0;
    const std::size_t trials = 100;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(derive_seed(601, t));
        std::uniform_real_distribution<double> u(-1, 1);
        std::vector<Vec3> pts(1024);
        for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
        asym += !find_symmetry_plane(pts).is_symmetric;
    }
    const double mi = di.empty() ? 1.0 : mean_of(di), mg = dg.empty() ? 0.0 : mean_of(dg);
    const bool pass = flagged == w.shapes.size() && mi < 0.10 && mi < mg && asym >= 95;
    return {pass, std::to_string(flagged) + "/" + std::to_string(w.shapes.size()) + " built-in shapes symmetric; mean d_sym issn " +
                      fmt(mi) + " grad " + fmt(mg) + " (need issn < 0.10 and < grad); random clouds asymmetric " +
                      std::to_string(asym) + "/" + std::to_string(trials) + " (need >= 95)"};
}

// ---------------------------------------------------------------------------
// 7. Contrastive saliency picks the discriminative part

// Fraction of shapes whose classifier score lands on the right side of 0.5.
double csl_train_accuracy(const TrainState& st, const std::vector<TrainShape>& data) {
    std::size_t right = 0;
    Rng rng(derive_seed(st.config.seed, 700));
    for (const auto& s : data) {
        const std::size_t n = st.config.points_per_shape;
        Tensor<float> pts(Shape{n, 3});
        for (std::size_t r = 0; r < n; ++r) {
            const auto& p = s.samples.points[std::uniform_int_distribution<std::size_t>(0, s.samples.size() - 1)(rng)];
            for (int k = 0; k < 3; ++k) pts[3 * r + k] = p[k];
        }
        ad::Graph<float> g;
        const auto dv = bind_params(g, st.decoder.tensors, false);
        const auto pv = bind_params(g, st.pointnet->tensors, false);
        const auto& z = st.latent(s.id);
        const auto zrow = g.constant(Tensor<float>(Shape{1, z.size()}, z));
        const auto pvar = g.constant(pts);
        const auto f = decode(g, st.decoder.config, dv, ad::repeat_rows(g, zrow, n), pvar);
        const auto prob = classify(g, st.pointnet->config, pv, build_q(g, pvar, f.sdf), f.saliency, n);
        right += (g.value(prob)[0] > 0.5f) == (s.category == st.config.interest);
    }
    return double(right) / double(data.size());
}

Outcome criterion7() {
    const auto shapes = make_set({"chair", "table"}, 8, 71);
    const auto data = train_shapes(shapes, 72);
    const auto run = train_csl(data, desk_csl_config(73, "chair", 0.0, 1.0));
    std::vector<ShapeRecord> chairs(shapes.begin(), shapes.begin() + 8);
    const auto clouds = clouds_of(chairs, 1024, 74);
    const auto maps = issn_maps(run.state, chairs, clouds);
    auto part_is = [&](const std::string& name) {
        return [&, name](std::size_t i, std::size_t p) { return chairs[i].parts[clouds[i].part[p]].name == name; };
    };
    const double back = masked_mean(clouds, maps, part_is("back"));
    const double top = masked_mean(clouds, maps, part_is("top"));
    const double acc = csl_train_accuracy(run.state, data);
    return {back / top >= 1.2 && acc > 0.95, "chair back/top saliency " + fmt(back) + "/" + fmt(top) + " = " +
                                                 fmt(back / top) + " (need >= 1.2); train accuracy " + fmt(acc) +
                                                 " (need > 0.95)"};
}

// ---------------------------------------------------------------------------
// 8. Sphere reconstruction

SdfSampleSet analytic_sphere_samples(std::size_t n, std::uint64_t seed) {
    SdfSampleSet s;
    s.shape_id = "sphere";
    Rng rng(seed);
    std::normal_distribution<double> n01(0, 1);
    std::uniform_real_distribution<double> u(-1.1, 1.1);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 p;
        if (i % 5 == 4) {
            do p = Vec3(u(rng), u(rng), u(rng));
            while (p.norm() > 1.1);
        } else {
            Vec3 d(n01(rng), n01(rng), n01(rng));
            p = d.normalized() * (0.5 + (i % 2 ? 0.025 : 0.0025) * n01(rng));
        }
        const std::array<float, 3> pf{float(p.x()), float(p.y()), float(p.z())};
        s.points.push_back(pf);
        s.sdf.push_back(float(Vec3(pf[0], pf[1], pf[2]).norm() - 0.5));
    }
    return s;
}

Outcome criterion8() {
    TrainConfig cfg = desk_config(81);
    cfg.decoder.hidden = 128;
    cfg.batch_size = 1;
    cfg.epochs = 800;
    cfg.lr_decoder = 1e-3;
    cfg.lr_period = 300;
    const auto run = train_issn({{"sphere", "sphere", analytic_sphere_samples(20000, 82)}}, cfg);
    const auto grid = evaluate_grid(run.state.decoder, run.state.latent("sphere"), 64);
    const auto mesh = marching_cubes(grid);
    double err = 0;
    for (const auto& v : mesh.mesh.vertices) err += std::abs(v.norm() - 0.5);
    err /= double(std::max<std::size_t>(mesh.mesh.vertices.size(), 1));

    // Constant saliency must come through interpolation unchanged.
    const float c = 0.3125f;
    const auto cgrid = evaluate_grid(
        [&](std::span<const std::array<float, 3>> p, std::span<float> sdf, std::span<float> sal) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                sdf[i] = std::sqrt(p[i][0] * p[i][0] + p[i][1] * p[i][1] + p[i][2] * p[i][2]) - 0.5f;
                sal[i] = c;
            }
        },
        64);
    const auto cm = marching_cubes(cgrid);
    const bool exact =
        !cm.empty() && std::all_of(cm.saliency.begin(), cm.saliency.end(), [&](double s) { return s == double(c); });
    return {!mesh.empty() && err < 0.02 && exact,
            std::to_string(mesh.mesh.vertices.size()) + " vertices, mean |r - 0.5| " + fmt(err, 3) +
                " (need < 0.02); constant saliency exact on " + std::to_string(cm.saliency.size()) + " vertices: " +
                (exact ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 9. Part extraction on a trained table

// Share of triangle area whose centroid lies within `tol` of the reference faces.
double area_near(const TriangleMesh& m, const MeshDistance& ref, double tol) {
    double near = 0, total = 0;
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const auto& t = m.faces[f];
        const Vec3 c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
        const double a = m.face_area(f);
        total += a;
        if (ref.unsigned_distance(c) < tol) near += a;
    }
    return total > 0 ? near / total : 0.0;
}

TriangleMesh face_subset(const ShapeRecord& s, bool common) {
    TriangleMesh out;
    out.vertices = s.mesh.vertices;
    for (std::size_t f = 0; f < s.mesh.faces.size(); ++f)
        if (s.face_common(f) == common) out.faces.push_back(s.mesh.faces[f]);
    return out;
}

Outcome criterion9() {
    const auto& w = world();
    const auto& st = w.issn.at("table");
    double sal_near = 0, sal_total = 0, spec_near = 0, spec_total = 0, full_spec = 0, full_area = 0, spec_area_b = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        const auto& shape = w.shapes[i];
        const auto grid = evaluate_grid(st.decoder, st.latent(shape.id), 64);
        const MeshDistance common(face_subset(shape, true)), specific(face_subset(shape, false));
        const auto a = extract_parts(grid, 0.5, PartMode::Salient);
        const auto b = extract_parts(grid, 0.5, PartMode::Specific);
        const auto full = marching_cubes(grid);
        full_spec += area_near(full.mesh, specific, 0.05) * full.mesh.area() / 8;
        full_area += full.mesh.area() / 8;
        spec_area_b += b.mesh.area() / 8;
        sal_near += area_near(a.mesh, common, 0.05) * a.mesh.area();
        sal_total += a.mesh.area();
        spec_near += area_near(b.mesh, specific, 0.05) * b.mesh.area();
        spec_total += b.mesh.area();
    }
    const double fs = sal_total > 0 ? sal_near / sal_total : 0, fp = spec_total > 0 ? spec_near / spec_total : 0;
    return {fs >= 0.7 && fp >= 0.6,
            "salient area near common faces " + fmt(fs) + " (need >= 0.7); specific area near specific faces " +
                fmt(fp) + " (need >= 0.6); mean mesh area " + fmt(full_area) + ", of which near specific faces " +
                fmt(full_spec) + ", specific-mode area " + fmt(spec_area_b)};
}

// ---------------------------------------------------------------------------
// 10. Salient-point classification

Outcome criterion10() {
    const std::vector<std::string> cats{"table", "chair", "rocket"};
    const std::size_t per = 16;
    const auto shapes = make_set(cats, per, 1001);
    const auto data = train_shapes(shapes, 1002);
    const auto clouds = clouds_of(shapes, 1024, 1003);
    std::vector<SaliencyMap> csl(shapes.size());
    for (std::size_t c = 0; c < cats.size(); ++c) {
        auto cfg = desk_csl_config(1004 + c, cats[c], 0.0, 1.0);
        cfg.batch_size = 8;
        cfg.epochs = 100;
        const auto run = train_csl(data, cfg);
        for (std::size_t i = c * per; i < (c + 1) * per; ++i)
            csl[i] = issn_saliency(run.state.decoder, run.state.latent(shapes[i].id), clouds[i].points);
    }
    std::vector<ClassSample> train, test;
    std::vector<std::vector<double>> train_csl, test_csl, train_pca, test_pca;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const bool held = (i % per) % 4 == 3;
        (held ? test : train).push_back({shapes[i].id, clouds[i].points, int(i / per)});
        (held ? test_csl : train_csl).push_back(csl[i].normalized);
        (held ? test_pca : train_pca).push_back(pca_saliency(clouds[i].points).normalized);
    }
    ClassifierConfig cc;
    cc.classes = 3;
    cc.point_widths = {32, 64, 128};
    cc.head_widths = {64};
    cc.epochs = 40;
    double a_csl = 0, a_pca = 0, a_rnd = 0;
    const int seeds = 3;
    for (int s = 0; s < seeds; ++s) {
        cc.seed = 1010 + s;
        a_csl += salient_points_experiment(train, train_csl, test, test_csl, 64, cc).overall / seeds;
        a_pca += salient_points_experiment(train, train_pca, test, test_pca, 64, cc).overall / seeds;
        a_rnd += salient_points_experiment(train, random_saliency(train, 1020 + s), test, random_saliency(test, 1030 + s),
                                           64, cc)
                     .overall /
                 seeds;
    }
    const double floor = 1.0 / 3.0;
    return {a_csl >= a_pca && a_pca >= floor && a_csl >= a_rnd,
            "top-64 accuracy csl " + fmt(a_csl) + " pca " + fmt(a_pca) + " random " + fmt(a_rnd) + " (need csl >= pca >= " +
                fmt(floor) + ", csl >= random)"};
}

// ---------------------------------------------------------------------------
// 11. Hyperparameter regimes

Outcome criterion11() {
    const auto tables = generate_synthetic_category(builtin_spec("table"), 8, 1101);
    const auto tdata = train_shapes(tables, 1102);
    auto cfg = desk_config(1103);
    cfg.decoder.lambda = 0.1;
    const auto hi = train_issn(tdata, cfg);
    const auto clouds = clouds_of(tables, 1024, 1104);
    const auto maps = issn_maps(hi.state, tables, clouds);
    std::size_t flat = 0;
    double raw_lo = 1, raw_mean = 0;
    for (const auto& m : maps) {
        raw_lo = std::min(raw_lo, *std::min_element(m.raw.begin(), m.raw.end()));
        raw_mean += mean_of(m.raw) / double(maps.size());
        const double mu = mean_of(m.normalized);
        double var = 0;
        for (double v : m.normalized) var += (v - mu) * (v - mu);
        flat += std::sqrt(var / double(m.normalized.size())) < 0.05;
    }
    const double frac = double(flat) / double(maps.size());

    const auto shapes = make_set({"chair", "table"}, 8, 1105);
    const auto data = train_shapes(shapes, 1106);
    auto base_cfg = desk_csl_config(1107, "chair", 1e-3, 0.0);
    const auto base = train_csl(data, base_cfg);
    const auto heavy = train_csl(data, desk_csl_config(1107, "chair", 1e-3, 1.0));
    auto recon = [&](const TrainState& st) {
        double e = 0;
        for (const auto& s : data) e += mean_clamped_l1(st.decoder, st.latent(s.id), s.samples);
        return e / double(data.size());
    };
    const double lb = recon(base.state), lh = recon(heavy.state);
    return {frac >= 0.8 && lh > 3 * lb,
            "lambda=0.1: " + std::to_string(flat) + "/" + std::to_string(maps.size()) +
                " maps with std < 0.05 (need >= 80%), raw saliency mean " + fmt(raw_mean) + " min " + fmt(raw_lo) +
                "; gamma/lambda=1000 clamped L1 " + fmt(lh) + " vs gamma=0 " + fmt(lb) + " = " + fmt(lh / lb) +
                "x (need > 3x)"};
}

// ---------------------------------------------------------------------------
// 12. Determinism and persistence

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion12() {
    const auto shapes = make_set({"table", "chair"}, 3, 1201);
    const auto data = train_shapes(shapes, 1202, 3000);
    auto cfg = desk_csl_config(1203, "table", 1e-3, 0.1);
    cfg.epochs = 6;
    const auto a = train_csl(data, cfg), b = train_csl(data, cfg);
    const bool logs = train_log_csv(a.log) == train_log_csv(b.log);

    save_checkpoint(scratch("a.ckpt"), a.state.to_checkpoint());
    save_checkpoint(scratch("b.ckpt"), b.state.to_checkpoint());
    const auto loaded = load_checkpoint(scratch("a.ckpt"));
    save_checkpoint(scratch("a2.ckpt"), loaded);
    const bool ckpt = loaded == a.state.to_checkpoint() && slurp(scratch("a.ckpt")) == slurp(scratch("b.ckpt")) &&
                      slurp(scratch("a.ckpt")) == slurp(scratch("a2.ckpt"));

    write_samples(scratch("s.sdfs"), data[0].samples);
    auto back = read_samples(scratch("s.sdfs"));
    back.shape_id = data[0].samples.shape_id;
    write_samples(scratch("s2.sdfs"), back);
    const bool sdfs = back == data[0].samples && slurp(scratch("s.sdfs")) == slurp(scratch("s2.sdfs"));

    auto half = cfg;
    half.epochs = 3;
    const auto first = train_csl(data, half);
    save_checkpoint(scratch("half.ckpt"), first.state.to_checkpoint());
    auto resumed = TrainState::from_checkpoint(load_checkpoint(scratch("half.ckpt")));
    resumed.config.epochs = cfg.epochs;
    auto rest = train_epochs(resumed, data, cfg.epochs);
    auto log = first.log;
    log.insert(log.end(), rest.begin(), rest.end());
    const bool resume = train_log_csv(log) == train_log_csv(a.log) && resumed.to_checkpoint() == a.state.to_checkpoint();
    return {logs && ckpt && sdfs && resume, std::string("logs identical: ") + (logs ? "yes" : "no") +
                                                "; checkpoint round trip bit-exact: " + (ckpt ? "yes" : "no") +
                                                "; SDFS round trip bit-exact: " + (sdfs ? "yes" : "no") +
                                                "; resume trajectory identical: " + (resume ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
        {1, {"gradient correctness", criterion1}},
        {2, {"closed-form saliency optimum", criterion2}},
        {3, {"lambda=0 degradation", criterion3}},
        {4, {"category-common parts more salient", criterion4}},
        {5, {"smoothness ordering", criterion5}},
        {6, {"symmetry", criterion6}},
        {7, {"contrastive discrimination", criterion7}},
        {8, {"reconstruction fidelity", criterion8}},
        {9, {"part extraction", criterion9}},
        {10, {"salient-point classification", criterion10}},
        {11, {"hyperparameter regimes", criterion11}},
        {12, {"determinism and persistence", criterion12}},
    };
    std::vector<int> chosen;
    for (int i = 1; i < argc; ++i) chosen.push_back(std::atoi(argv[i]));
    if (chosen.empty())
        for (const auto& [k, v] : criteria) chosen.push_back(k);
    int failed = 0;
    for (int k : chosen) {
        const auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << k << "\n";
            return 2;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "criterion " << k << " " << (o.pass ? "PASS" : "FAIL") << " [" << it->second.first << "] "
                  << o.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
