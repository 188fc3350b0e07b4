#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "salfield/binio.hpp"
#include "salfield/csl.hpp"
#include "salfield/primitives.hpp"
#include "salfield/trainer.hpp"

using namespace salfield;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "salfield_test_trainer";
    fs::create_directories(dir);
    return dir / name;
}

TrainConfig small_config() {
    TrainConfig c;
    c.decoder.latent_dim = 8;
    c.decoder.hidden = 32;
    c.decoder.layers = 4;
    c.decoder.skip_layer = 2;
    c.batch_size = 2;
    c.points_per_shape = 256;
    c.epochs = 4;
    c.pointnet.point_widths = {16, 32};
    c.pointnet.head_widths = {16};
    c.seed = 3;
    return c;
}

std::vector<TrainShape> tiny_dataset(std::size_t per_category = 2) {
    std::vector<TrainShape> out;
    SdfSamplingConfig sc;
    sc.n_total = 1500;
    for (const auto* name : {"table", "chair"}) {
        for (const auto& s : generate_synthetic_category(builtin_spec(name), per_category, 1))
            out.push_back({s.id, s.category, sample_sdf(s.mesh, sc, 7, s.id)});
    }
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(LrSchedule, HalvesEveryPeriod) {
    EXPECT_DOUBLE_EQ(lr_at(0, 5e-4, 200), 5e-4);
    EXPECT_DOUBLE_EQ(lr_at(200, 5e-4, 200), 2.5e-4);
    EXPECT_DOUBLE_EQ(lr_at(399, 5e-4, 200), 2.5e-4);
    EXPECT_DOUBLE_EQ(lr_at(400, 5e-4, 200), 1.25e-4);
    EXPECT_THROW(lr_at(3, 1.0, 0), std::invalid_argument);
}

TEST(TrainConfig, KeyValueRoundTripAndValidation) {
    auto c = small_config();
    c.mode = TrainMode::Csl;
    c.interest = "chair";
    c.gamma = 0.25;
    c.decoder.lambda = 0.0;
    const auto back = TrainConfig::from_kv(c.to_kv());
    EXPECT_EQ(back.to_kv().values(), c.to_kv().values());
    EXPECT_EQ(back.pointnet.point_widths, (std::vector<std::size_t>{16, 32}));

    TrainConfig bad;
    bad.gamma = 0.5;  // issn mode cannot take a classification weight
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad.gamma = 0;
    bad.mode = TrainMode::Csl;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad.interest = "chair";
    bad.batch_size = 3;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    EXPECT_THROW(TrainConfig::from_kv(KeyValueConfig::parse("nonsense=1\n")), ConfigError);
    EXPECT_THROW(TrainConfig::from_kv(KeyValueConfig::parse("mode=gan\n")), ConfigError);
}

TEST(TrainConfig, DefaultsMatchDeskProfile) {
    const TrainConfig c;
    EXPECT_EQ(c.epochs, 200u);
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_EQ(c.points_per_shape, 2048u);
    EXPECT_DOUBLE_EQ(c.lr_decoder, 5e-4);
    EXPECT_DOUBLE_EQ(c.lr_latent, 1e-3);
    EXPECT_EQ(c.lr_period, 200u);
    EXPECT_EQ(c.decoder.latent_dim, 64u);
    EXPECT_EQ(c.decoder.hidden, 256u);
    EXPECT_EQ(c.decoder.layers, 8u);
    EXPECT_EQ(c.decoder.skip_layer, 4u);
    EXPECT_DOUBLE_EQ(c.decoder.delta, 0.1);
    EXPECT_DOUBLE_EQ(c.decoder.beta, 0.1);
    EXPECT_DOUBLE_EQ(c.decoder.lambda, 1e-3);
}

TEST(TrainIssn, SingleSphereFits) {
    SdfSamplingConfig sc;
    sc.n_total = 4000;
    const auto sphere = make_icosphere(0.5, 3);
    std::vector<TrainShape> data{{"sphere", "sphere", sample_sdf(sphere, sc, 1, "sphere")}};
    auto cfg = small_config();
    cfg.epochs = 50;
    cfg.batch_size = 1;
    cfg.points_per_shape = 2048;
    cfg.decoder.hidden = 128;
    cfg.lr_decoder = 3e-3;
    cfg.lr_latent = 3e-3;
    cfg.lr_period = 20;
    cfg.seed = 4;
    const auto r = train_issn(data, cfg);
    ASSERT_EQ(r.log.size(), 50u);
    EXPECT_LT(mean_clamped_l1(r.state.decoder, r.state.latents[0], data[0].samples), 0.01);
}

TEST(TrainIssn, DeterministicLogs) {
    const auto data = tiny_dataset();
    const auto a = train_issn(data, small_config());
    const auto b = train_issn(data, small_config());
    EXPECT_EQ(train_log_csv(a.log), train_log_csv(b.log));
    EXPECT_TRUE(a.state.to_checkpoint() == b.state.to_checkpoint());
    for (const auto& row : a.log) {
        EXPECT_TRUE(std::isfinite(row.loss_total));
        EXPECT_EQ(row.loss_cls, 0.0);
    }
}

TEST(TrainIssn, OnlyBatchLatentsMove) {
    const auto data = tiny_dataset();
    auto cfg = small_config();
    auto st = init_train_state(data, cfg);
    const auto before = st.latents;
    // With batch 2 over 4 shapes, stopping inside the first epoch is not
    // possible through train_epochs; use one shape per batch and inspect opt steps.
    cfg.batch_size = 1;
    st.config = cfg;
    train_epochs(st, data, 1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(st.latent_opt[i].step, 1u);
        EXPECT_NE(st.latents[i], before[i]);
    }
}

TEST(TrainIssn, ResumeIsBitIdentical) {
    const auto data = tiny_dataset();
    auto cfg = small_config();
    cfg.epochs = 6;
    const auto full = train_issn(data, cfg);

    auto st = init_train_state(data, cfg);
    auto first = train_epochs(st, data, 3);
    const auto path = scratch("resume.ckpt");
    save_checkpoint(path, st.to_checkpoint());
    auto resumed = TrainState::from_checkpoint(load_checkpoint(path));
    const auto rest = train_epochs(resumed, data, 6);
    first.insert(first.end(), rest.begin(), rest.end());
    EXPECT_EQ(train_log_csv(first), train_log_csv(full.log));
    EXPECT_TRUE(resumed.to_checkpoint() == full.state.to_checkpoint());
}

TEST(Checkpoint, RoundTripAndErrors) {
    const auto data = tiny_dataset(1);
    auto cfg = small_config();
    cfg.mode = TrainMode::Csl;
    cfg.interest = "chair";
    cfg.gamma = 1.0;
    const auto r = train_csl(data, cfg);
    const auto ck = r.state.to_checkpoint();
    const auto path = scratch("rt.ckpt");
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    EXPECT_TRUE(back == ck);
    const auto path2 = scratch("rt2.ckpt");
    save_checkpoint(path2, back);
    EXPECT_EQ(read_file(path), read_file(path2));

    // Decoding after reload gives the same field.
    const auto st = TrainState::from_checkpoint(back);
    const auto f0 = evaluate_field(r.state.decoder, r.state.latents[0], data[0].samples.points);
    const auto f1 = evaluate_field(st.decoder, st.latents[0], data[0].samples.points);
    EXPECT_EQ(f0.sdf, f1.sdf);
    EXPECT_EQ(f0.saliency, f1.saliency);

    {
        std::fstream f(path2, std::ios::in | std::ios::out | std::ios::binary);
        f.write("NSSI", 4);
    }
    EXPECT_THROW(load_checkpoint(path2), FormatError);
    save_checkpoint(path2, back);
    fs::resize_file(path2, fs::file_size(path2) - 5);
    EXPECT_THROW(load_checkpoint(path2), FormatError);
    save_checkpoint(path2, back);
    {
        std::fstream f(path2, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const std::uint32_t v = 99;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    EXPECT_THROW(load_checkpoint(path2), FormatError);
}

TEST(TrainCsl, GammaZeroMatchesIssnWithBalancedBatches) {
    const auto data = tiny_dataset();
    auto issn = small_config();
    issn.balanced = true;
    issn.interest = "chair";
    auto csl = issn;
    csl.mode = TrainMode::Csl;
    csl.interest = "chair";
    csl.gamma = 0.0;
    const auto a = train_issn(data, issn);
    const auto b = train_csl(data, csl);
    EXPECT_EQ(a.state.decoder.tensors, b.state.decoder.tensors);
    EXPECT_EQ(a.state.latents, b.state.latents);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].loss_total, b.log[i].loss_total);
        EXPECT_EQ(a.log[i].loss_sdf, b.log[i].loss_sdf);
    }
}

TEST(TrainCsl, RequiresTwoCategories) {
    auto data = tiny_dataset();
    data.resize(2);  // tables only
    auto cfg = small_config();
    cfg.mode = TrainMode::Csl;
    cfg.interest = "table";
    EXPECT_THROW(train_csl(data, cfg), std::invalid_argument);
    EXPECT_THROW(train_issn(data, cfg), std::invalid_argument);
}

TEST(TrainCsl, LogsClassificationTerms) {
    const auto data = tiny_dataset();
    auto cfg = small_config();
    cfg.mode = TrainMode::Csl;
    cfg.interest = "chair";
    cfg.gamma = 1.0;
    cfg.decoder.lambda = 0.0;
    const auto r = train_csl(data, cfg);
    for (const auto& row : r.log) {
        EXPECT_GT(row.loss_cls, 0.0);
        EXPECT_EQ(row.loss_sal_reg, 0.0);
        EXPECT_GE(row.cls_acc, 0.0);
        EXPECT_LE(row.cls_acc, 1.0);
        EXPECT_NEAR(row.loss_total, row.loss_sdf + row.loss_cls, 0.05);
    }
}

TEST(TrainLog, CsvSchema) {
    TrainLogRow r;
    r.epoch = 2;
    r.lr_decoder = 5e-4;
    const auto csv = train_log_csv({r});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr_decoder,lr_latent,loss_total,loss_sdf,loss_sal_reg,loss_cls,cls_acc");
    EXPECT_NE(csv.find("2,5e-04,0,"), std::string::npos);
    const auto p = scratch("log.csv");
    write_train_log(p, {r});
    write_train_log(p, {r}, true);
    EXPECT_EQ(read_file(p), csv + train_log_csv({r}, false));
}

TEST(OptimizeLatent, ZeroStepsAndDescent) {
    const auto data = tiny_dataset(1);
    auto cfg = small_config();
    cfg.epochs = 10;
    const auto r = train_issn(data, cfg);
    LatentFitConfig lf;
    lf.steps = 0;
    lf.seed = 5;
    const auto z0 = optimize_latent(r.state.decoder, data[0].samples, lf);
    Rng rng(5);
    std::normal_distribution<double> n(0.0, 0.01);
    for (float v : z0.z) EXPECT_EQ(v, static_cast<float>(n(rng)));
    lf.steps = 200;
    lf.lr = 1e-2;
    lf.points = 1000;
    const auto fit = optimize_latent(r.state.decoder, data[0].samples, lf);
    ASSERT_EQ(fit.history.size(), 200u);
    EXPECT_LE(fit.final_loss, fit.initial_loss);
}
