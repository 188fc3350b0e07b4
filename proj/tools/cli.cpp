#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "salfield/binio.hpp"
#include "salfield/classify.hpp"
#include "salfield/config.hpp"
#include "salfield/dataset.hpp"
#include "salfield/parallel.hpp"
#include "salfield/reconstruct.hpp"
#include "salfield/saliency_eval.hpp"
#include "salfield/trainer.hpp"

namespace salfield::cli {

namespace {

/// Bad flag values or contradictory configuration; reported as a usage error.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& s : items) {
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

/// --set key=value pairs on top of an optional config file.
KeyValueConfig resolve_config(const std::string& file, const std::vector<std::string>& sets, KeyValueConfig flags) {
    KeyValueConfig kv = file.empty() ? KeyValueConfig{} : KeyValueConfig::load(file);
    KeyValueConfig cli;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
        cli.set(s.substr(0, eq), s.substr(eq + 1));
    }
    cli.merge(flags);
    kv.merge(cli);
    return kv;
}

void ensure_parent(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

std::filesystem::path dir_of(const std::filesystem::path& file) {
    return file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed on " + path.string());
}

// ---------------------------------------------------------------------------
// Latent files: key=value text

void write_latent(const std::filesystem::path& path, const std::string& shape_id, const LatentFit& fit) {
    KeyValueConfig kv;
    kv.set("shape_id", shape_id);
    kv.set("latent_dim", std::to_string(fit.z.size()));
    std::string z;
    for (std::size_t i = 0; i < fit.z.size(); ++i) z += (i ? "," : "") + format_double(fit.z[i]);
    kv.set("z", z);
    kv.set("initial_loss", format_double(fit.initial_loss));
    kv.set("final_loss", format_double(fit.final_loss));
    write_text(path, kv.to_string());
}

std::vector<float> read_latent(const std::filesystem::path& path) {
    const auto kv = KeyValueConfig::load(path);
    const auto z = kv.get("z");
    if (!z) throw FormatError(path.string() + ": no z entry");
    std::vector<float> out;
    std::stringstream ss(*z);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stof(tok));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": bad latent value '" + tok + "'");
        }
    }
    if (out.size() != kv.get_uint("latent_dim", out.size())) throw FormatError(path.string() + ": latent_dim mismatch");
    return out;
}

// ---------------------------------------------------------------------------
// Model lookup shared by eval-saliency and classify

struct LoadedModel {
    std::string path;
    TrainState state;
};

std::vector<LoadedModel> load_models(const std::vector<std::string>& paths) {
    std::vector<LoadedModel> out;
    for (const auto& p : paths) out.push_back({p, TrainState::from_checkpoint(load_checkpoint(p))});
    return out;
}

/// Model whose latent table holds the shape; CSL models whose interest is the
/// shape's category win over others.
const LoadedModel& model_for(const std::vector<LoadedModel>& models, const std::string& shape_id,
                             const std::string& category, bool csl) {
    const LoadedModel* fallback = nullptr;
    for (const auto& m : models) {
        const auto& ids = m.state.shape_ids;
        if (std::find(ids.begin(), ids.end(), shape_id) == ids.end()) continue;
        if (csl && m.state.config.mode != TrainMode::Csl) continue;
        if (!csl || m.state.config.interest == category) return m;
        if (!fallback) fallback = &m;
    }
    if (fallback) return *fallback;
    throw std::runtime_error("no " + std::string(csl ? "csl" : "issn") + " checkpoint contains shape '" + shape_id + "'");
}

enum class Method { Issn, Csl, Pca, Grad, Random, None };

Method parse_method(const std::string& s) {
    if (s == "issn") return Method::Issn;
    if (s == "csl") return Method::Csl;
    if (s == "pca") return Method::Pca;
    if (s == "grad") return Method::Grad;
    if (s == "random") return Method::Random;
    if (s == "none") return Method::None;
    throw UsageError("unknown method '" + s + "'");
}

struct ShapeCloud {
    std::string id;
    std::string category;
    std::vector<Vec3> points;
};

std::vector<ShapeCloud> manifest_clouds(const Manifest& m, std::size_t n, std::uint64_t seed) {
    std::vector<ShapeCloud> out(m.rows.size());
    parallel_for(m.rows.size(), [&](std::size_t i) {
        const auto shape = load_shape(m, m.rows[i]);
        out[i] = {shape.id, shape.category, fps_labelled_surface(shape, n, derive_seed(seed, i)).points};
    });
    return out;
}

std::vector<SaliencyMap> saliency_maps(const std::vector<ShapeCloud>& clouds, Method method,
                                       const std::vector<std::string>& ckpts, std::uint64_t seed) {
    std::vector<LoadedModel> models;
    std::optional<ClassifierModel> classifier;
    if (method == Method::Issn || method == Method::Csl) {
        if (ckpts.empty()) throw UsageError("method issn/csl needs --ckpt");
        models = load_models(ckpts);
    } else if (method == Method::Grad) {
        if (ckpts.size() != 1) throw UsageError("method grad needs exactly one classifier --ckpt");
        classifier = ClassifierModel::from_checkpoint(load_checkpoint(ckpts[0]));
    }
    std::vector<SaliencyMap> maps(clouds.size());
    parallel_for(clouds.size(), [&](std::size_t i) {
        const auto& c = clouds[i];
        switch (method) {
            case Method::Issn:
            case Method::Csl: {
                const auto& m = model_for(models, c.id, c.category, method == Method::Csl);
                maps[i] = issn_saliency(m.state.decoder, m.state.latent(c.id), c.points);
                break;
            }
            case Method::Pca: maps[i] = pca_saliency(c.points); break;
            case Method::Grad: maps[i] = gradient_saliency(classifier->net, c.points); break;
            case Method::Random: {
                Rng rng(derive_seed(seed, 1000 + i));
                std::uniform_real_distribution<double> u(0, 1);
                std::vector<double> v(c.points.size());
                for (auto& x : v) x = u(rng);
                maps[i] = SaliencyMap::from_raw(std::move(v));
                break;
            }
            case Method::None: maps[i] = SaliencyMap::from_raw(std::vector<double>(c.points.size(), 1.0)); break;
        }
    });
    return maps;
}

// ---------------------------------------------------------------------------

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::vector<std::string> argv;
};

RunManifest begin(const Context& ctx, const std::string& command, const std::filesystem::path& out_dir,
                  const std::string& config_path, const KeyValueConfig& config, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.argv = ctx.argv;
    m.config_path = config_path;
    m.config = config.values();
    m.seed = seed;
    m.output_dir = out_dir.string();
    m.started_at = utc_now();
    std::filesystem::create_directories(out_dir);
    m.write();
    return m;
}

void finish(RunManifest& m) {
    m.finished_at = utc_now();
    m.write();
}

}  // namespace

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config_path"] = config_path;
    j["config"] = config;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["outputs"] = outputs;
    return j.dump(2) + "\n";
}

std::filesystem::path RunManifest::path() const {
    return std::filesystem::path(output_dir.empty() ? "." : output_dir) / ("run." + command + ".json");
}

void RunManifest::write() const { write_text(path(), to_json()); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx{out, err, args};
    CLI::App app{"salfield: implicit shape saliency fields"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every command");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate synthetic part-labelled categories and a manifest");
    std::vector<std::string> gen_specs;
    std::size_t gen_count = 0;
    std::string gen_out, gen_interest;
    std::uint64_t gen_seed = 0;
    gen->add_option("--spec", gen_specs, "Built-in category spec(s), comma separated")->required();
    gen->add_option("--count", gen_count, "Instances per category")->required()->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--interest", gen_interest, "Category flagged is_interest (default: first spec)");

    // sample-sdf
    auto* smp = app.add_subcommand("sample-sdf", "Write SDF sample sets for every manifest shape");
    std::string smp_manifest, smp_out;
    std::size_t smp_samples = 25000;
    double smp_near = 0.95;
    std::uint64_t smp_seed = 0;
    smp->add_option("--manifest", smp_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    smp->add_option("--samples", smp_samples, "Samples per shape")->check(CLI::PositiveNumber);
    smp->add_option("--near-frac", smp_near, "Near-surface fraction")->check(CLI::Range(0.0, 1.0));
    smp->add_option("--seed", smp_seed, "Random seed");
    smp->add_option("--out", smp_out, "Sample directory (default: <manifest dir>/samples)");

    // train
    auto* trn = app.add_subcommand("train", "Train an ISSN or ISSN-CSL model");
    std::string trn_mode = "issn", trn_manifest, trn_config, trn_out, trn_resume, trn_interest;
    std::vector<std::string> trn_sets;
    std::optional<std::size_t> trn_epochs;
    std::optional<std::uint64_t> trn_seed;
    std::optional<double> trn_gamma, trn_lambda;
    std::size_t trn_save_every = 0;
    trn->add_option("--mode", trn_mode, "issn or csl")->check(CLI::IsMember({"issn", "csl"}));
    trn->add_option("--manifest", trn_manifest, "Dataset manifest with sample paths")->required()->check(CLI::ExistingFile);
    trn->add_option("--config", trn_config, "key=value config file")->check(CLI::ExistingFile);
    trn->add_option("--out", trn_out, "Output directory")->required();
    trn->add_option("--set", trn_sets, "Config override key=value (repeatable)");
    trn->add_option("--epochs", trn_epochs, "Epochs");
    trn->add_option("--seed", trn_seed, "Random seed");
    trn->add_option("--interest", trn_interest, "Category of interest (csl)");
    trn->add_option("--gamma", trn_gamma, "Classification loss weight (csl)");
    trn->add_option("--lambda", trn_lambda, "Saliency regularization weight");
    trn->add_option("--resume", trn_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    trn->add_option("--save-every", trn_save_every, "Also checkpoint every N epochs");

    // infer-latent
    auto* inf = app.add_subcommand("infer-latent", "Fit a latent code to a sample set with the decoder frozen");
    std::string inf_ckpt, inf_samples, inf_out;
    LatentFitConfig inf_cfg;
    inf->add_option("--ckpt", inf_ckpt, "ISSN checkpoint")->required()->check(CLI::ExistingFile);
    inf->add_option("--samples", inf_samples, "SDFS sample file")->required()->check(CLI::ExistingFile);
    inf->add_option("--steps", inf_cfg.steps, "Optimization steps");
    inf->add_option("--lr", inf_cfg.lr, "Learning rate");
    inf->add_option("--points", inf_cfg.points, "Fitting subset size");
    inf->add_option("--seed", inf_cfg.seed, "Random seed");
    inf->add_option("--out", inf_out, "Latent file (default: <samples>.latent)");

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "Marching-cubes mesh with per-vertex saliency");
    std::string rec_ckpt, rec_shape, rec_latent, rec_out, rec_grid;
    std::size_t rec_res = 64;
    rec->add_option("--ckpt", rec_ckpt, "ISSN checkpoint")->required()->check(CLI::ExistingFile);
    auto* rec_sid = rec->add_option("--shape-id", rec_shape, "Training shape id");
    auto* rec_lat = rec->add_option("--latent", rec_latent, "Latent file from infer-latent")->check(CLI::ExistingFile);
    rec_sid->excludes(rec_lat);
    rec->add_option("--res", rec_res, "Grid resolution per axis")->check(CLI::Range(2, 1024));
    rec->add_option("--out", rec_out, "Output PLY")->required();
    rec->add_option("--grid", rec_grid, "Also dump the evaluated grid");

    // extract-parts
    auto* ext = app.add_subcommand("extract-parts", "Keep only salient or only specific surface parts");
    std::string ext_ckpt, ext_shape, ext_latent, ext_mode = "salient", ext_out;
    double ext_threshold = 0.5;
    std::size_t ext_res = 64;
    ext->add_option("--ckpt", ext_ckpt, "ISSN checkpoint")->required()->check(CLI::ExistingFile);
    auto* ext_sid = ext->add_option("--shape-id", ext_shape, "Training shape id");
    auto* ext_lat = ext->add_option("--latent", ext_latent, "Latent file")->check(CLI::ExistingFile);
    ext_sid->excludes(ext_lat);
    ext->add_option("--threshold", ext_threshold, "Saliency threshold in [0,1]")->check(CLI::Range(0.0, 1.0));
    ext->add_option("--mode", ext_mode, "salient or specific")->check(CLI::IsMember({"salient", "specific"}));
    ext->add_option("--res", ext_res, "Grid resolution per axis")->check(CLI::Range(2, 1024));
    ext->add_option("--out", ext_out, "Output PLY")->required();

    // eval-saliency
    auto* ev = app.add_subcommand("eval-saliency", "SSR and symmetry distance per shape");
    std::string ev_manifest, ev_method = "issn", ev_metrics, ev_maps;
    std::vector<std::string> ev_ckpts;
    std::size_t ev_points = 1024;
    std::uint64_t ev_seed = 0;
    double ev_tol = kSymmetryTolerance;
    ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--method", ev_method, "issn, csl, pca or grad")->check(CLI::IsMember({"issn", "csl", "pca", "grad"}));
    ev->add_option("--metrics", ev_metrics, "Metrics CSV")->required();
    ev->add_option("--ckpt", ev_ckpts, "Model checkpoint(s) (issn/csl) or classifier checkpoint (grad)");
    ev->add_option("--points", ev_points, "FPS points per shape")->check(CLI::PositiveNumber);
    ev->add_option("--seed", ev_seed, "Random seed");
    ev->add_option("--maps", ev_maps, "Also write per-point saliency maps CSV");
    ev->add_option("--tolerance", ev_tol, "Symmetry tolerance");

    // classify
    auto* cls = app.add_subcommand("classify", "Point cloud classification experiments");
    std::string cls_manifest, cls_method = "none", cls_out, cls_config, cls_run = "run", cls_model;
    std::vector<std::string> cls_ckpts, cls_sets;
    std::vector<std::size_t> cls_topk;
    bool cls_weighted = false;
    std::size_t cls_test_every = 4;
    std::optional<std::uint64_t> cls_seed;
    cls->add_option("--manifest", cls_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    cls->add_flag("--weighted", cls_weighted, "Saliency-weighted gradient training");
    cls->add_option("--topk", cls_topk, "Train/test on the k most salient points (repeatable)");
    cls->add_option("--method", cls_method, "Saliency source: issn, csl, pca, grad, random or none")
        ->check(CLI::IsMember({"issn", "csl", "pca", "grad", "random", "none"}));
    cls->add_option("--out", cls_out, "Accuracy CSV")->required();
    cls->add_option("--ckpt", cls_ckpts, "Saliency model checkpoint(s)");
    cls->add_option("--config", cls_config, "Classifier key=value config")->check(CLI::ExistingFile);
    cls->add_option("--set", cls_sets, "Config override key=value (repeatable)");
    cls->add_option("--seed", cls_seed, "Random seed");
    cls->add_option("--test-every", cls_test_every, "Every n-th shape of a category is held out")->check(CLI::Range(2, 1000000));
    cls->add_option("--run-id", cls_run, "run_id column value");
    cls->add_option("--save-model", cls_model, "Write the full-cloud classifier checkpoint here");

    std::vector<const char*> cargv{"salfield"};
    for (const auto& a : args) cargv.push_back(a.c_str());
    try {
        app.parse(int(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        if (subs.empty()) err << app.help();
        for (auto* sub : subs) err << sub->help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            const auto specs = split_list(gen_specs);
            std::vector<SyntheticCategorySpec> resolved;
            for (const auto& s : specs) {
                try {
                    resolved.push_back(builtin_spec(s));
                } catch (const std::exception& e) {
                    throw UsageError(e.what());
                }
            }
            const std::string interest = gen_interest.empty() ? specs.front() : gen_interest;
            if (std::find(specs.begin(), specs.end(), interest) == specs.end())
                throw UsageError("--interest '" + interest + "' is not among the generated specs");
            KeyValueConfig kv;
            std::string joined;
            for (std::size_t i = 0; i < specs.size(); ++i) joined += (i ? "," : "") + specs[i];
            kv.set("spec", joined);
            kv.set("count", std::to_string(gen_count));
            kv.set("interest", interest);
            auto rm = begin(ctx, "gen-data", gen_out, "", kv, gen_seed);
            Manifest man;
            man.dir = gen_out;
            for (std::size_t c = 0; c < resolved.size(); ++c) {
                const auto shapes = generate_synthetic_category(resolved[c], gen_count, derive_seed(gen_seed, c));
                for (const auto& s : shapes) {
                    const std::string rel = "meshes/" + s.id + ".off";
                    const auto path = std::filesystem::path(gen_out) / rel;
                    ensure_parent(path);
                    write_off(path, s.mesh);
                    write_face_labels(path.string() + ".labels", s);
                    man.rows.push_back({s.id, s.category, rel, "", s.category == interest});
                    rm.outputs.push_back(rel);
                    rm.outputs.push_back(rel + ".labels");
                }
            }
            write_manifest(std::filesystem::path(gen_out) / "manifest.csv", man);
            rm.outputs.push_back("manifest.csv");
            finish(rm);
            out << "wrote " << man.rows.size() << " shapes to " << gen_out << "\n";
        } else if (smp->parsed()) {
            auto man = read_manifest(smp_manifest);
            const std::filesystem::path sdir = smp_out.empty() ? man.dir / "samples" : std::filesystem::path(smp_out);
            SdfSamplingConfig sc;
            sc.n_total = smp_samples;
            sc.near_fraction = smp_near;
            KeyValueConfig kv;
            kv.set("samples", std::to_string(smp_samples));
            kv.set("near_frac", format_double(smp_near));
            kv.set("manifest", smp_manifest);
            auto rm = begin(ctx, "sample-sdf", sdir, "", kv, smp_seed);
            std::vector<std::string> rel(man.rows.size());
            parallel_for(man.rows.size(), [&](std::size_t i) {
                const auto shape = load_shape(man, man.rows[i]);
                const auto set = sample_sdf(shape.mesh, sc, derive_seed(smp_seed, i), shape.id);
                const auto path = sdir / (shape.id + ".sdfs");
                write_samples(path, set);
                rel[i] = std::filesystem::relative(path, man.dir.empty() ? "." : man.dir).generic_string();
            });
            for (std::size_t i = 0; i < man.rows.size(); ++i) {
                man.rows[i].samples_path = rel[i];
                rm.outputs.push_back(man.rows[i].shape_id + ".sdfs");
            }
            write_manifest(smp_manifest, man);
            rm.outputs.push_back(std::filesystem::absolute(smp_manifest).string());
            finish(rm);
            out << "sampled " << man.rows.size() << " shapes into " << sdir.string() << "\n";
        } else if (trn->parsed()) {
            const auto man = read_manifest(trn_manifest);
            KeyValueConfig flags;
            if (trn->count("--mode")) flags.set("mode", trn_mode);
            if (trn_epochs) flags.set("epochs", std::to_string(*trn_epochs));
            if (trn_seed) flags.set("seed", std::to_string(*trn_seed));
            if (trn_gamma) flags.set("gamma", format_double(*trn_gamma));
            if (trn_lambda) flags.set("lambda", format_double(*trn_lambda));
            if (!trn_interest.empty()) flags.set("interest", trn_interest);
            auto kv = resolve_config(trn_config, trn_sets, flags);
            TrainConfig cfg;
            try {
                cfg = TrainConfig::from_kv(kv);
                if (cfg.mode == TrainMode::Csl && cfg.interest.empty())
                    for (const auto& r : man.rows)
                        if (r.is_interest) {
                            cfg.interest = r.category;
                            break;
                        }
                cfg.validate();
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            std::vector<TrainShape> data;
            for (const auto& r : man.rows) {
                if (r.samples_path.empty()) throw std::runtime_error("shape '" + r.shape_id + "' has no samples; run sample-sdf");
                auto s = read_samples(man.resolve(r.samples_path));
                s.shape_id = r.shape_id;
                data.push_back({r.shape_id, r.category, std::move(s)});
            }
            auto rm = begin(ctx, "train", trn_out, trn_config, cfg.to_kv(), cfg.seed);
            const auto ckpt_path = std::filesystem::path(trn_out) / "model.ckpt";
            const auto log_path = std::filesystem::path(trn_out) / "train_log.csv";
            TrainState st;
            bool append = false;
            if (!trn_resume.empty()) {
                st = TrainState::from_checkpoint(load_checkpoint(trn_resume));
                if (st.config.to_kv().values() != cfg.to_kv().values()) {
                    // Only the epoch budget may change on resume.
                    auto a = st.config;
                    a.epochs = cfg.epochs;
                    if (a.to_kv().values() != cfg.to_kv().values())
                        throw UsageError("--resume: checkpoint config differs from the requested config");
                    st.config.epochs = cfg.epochs;
                }
                append = true;
            } else {
                st = init_train_state(data, cfg);
            }
            if (!append) std::filesystem::remove(log_path);
            auto log = train_epochs(st, data, cfg.epochs, [&](const TrainLogRow& row, const TrainState& s) {
                write_train_log(log_path, {row}, true);
                if (trn_save_every && (row.epoch + 1) % trn_save_every == 0) save_checkpoint(ckpt_path, s.to_checkpoint());
                return true;
            });
            save_checkpoint(ckpt_path, st.to_checkpoint());
            rm.outputs = {"model.ckpt", "train_log.csv"};
            finish(rm);
            if (!log.empty())
                out << "epoch " << log.back().epoch << " loss " << format_double(log.back().loss_total) << "\n";
            out << "wrote " << ckpt_path.string() << "\n";
        } else if (inf->parsed()) {
            const auto st = TrainState::from_checkpoint(load_checkpoint(inf_ckpt));
            auto samples = read_samples(inf_samples);
            const std::filesystem::path outp = inf_out.empty() ? std::filesystem::path(inf_samples + ".latent") : std::filesystem::path(inf_out);
            KeyValueConfig kv;
            kv.set("ckpt", inf_ckpt);
            kv.set("samples", inf_samples);
            kv.set("steps", std::to_string(inf_cfg.steps));
            kv.set("lr", format_double(inf_cfg.lr));
            kv.set("points", std::to_string(inf_cfg.points));
            auto rm = begin(ctx, "infer-latent", dir_of(outp), "", kv, inf_cfg.seed);
            const auto fit = optimize_latent(st.decoder, samples, inf_cfg);
            write_latent(outp, std::filesystem::path(inf_samples).stem().string(), fit);
            rm.outputs = {outp.filename().string()};
            finish(rm);
            out << "loss " << format_double(fit.initial_loss) << " -> " << format_double(fit.final_loss) << "\n";
        } else if (rec->parsed() || ext->parsed()) {
            const bool is_rec = rec->parsed();
            const std::string ckpt = is_rec ? rec_ckpt : ext_ckpt;
            const std::string sid = is_rec ? rec_shape : ext_shape;
            const std::string lat = is_rec ? rec_latent : ext_latent;
            const std::filesystem::path outp = is_rec ? rec_out : ext_out;
            const std::size_t res = is_rec ? rec_res : ext_res;
            if (sid.empty() == lat.empty()) throw UsageError("give exactly one of --shape-id or --latent");
            const auto st = TrainState::from_checkpoint(load_checkpoint(ckpt));
            const std::vector<float> z = sid.empty() ? read_latent(lat) : st.latent(sid);
            KeyValueConfig kv;
            kv.set("ckpt", ckpt);
            kv.set(sid.empty() ? "latent" : "shape_id", sid.empty() ? lat : sid);
            kv.set("res", std::to_string(res));
            if (!is_rec) {
                kv.set("threshold", format_double(ext_threshold));
                kv.set("mode", ext_mode);
            }
            auto rm = begin(ctx, is_rec ? "reconstruct" : "extract-parts", dir_of(outp), "", kv, 0);
            const auto grid = evaluate_grid(st.decoder, z, res);
            if (is_rec && !rec_grid.empty()) {
                write_grid(rec_grid, grid);
                rm.outputs.push_back(rec_grid);
            }
            const auto mesh = is_rec ? marching_cubes(grid)
                                     : extract_parts(grid, ext_threshold, parse_part_mode(ext_mode), st.config.decoder.delta);
            export_ply(mesh, outp);
            rm.outputs.push_back(outp.filename().string());
            finish(rm);
            out << mesh.mesh.vertices.size() << " vertices, " << mesh.mesh.faces.size() << " faces -> " << outp.string()
                << "\n";
        } else if (ev->parsed()) {
            const auto man = read_manifest(ev_manifest);
            const Method method = parse_method(ev_method);
            KeyValueConfig kv;
            kv.set("manifest", ev_manifest);
            kv.set("method", ev_method);
            kv.set("points", std::to_string(ev_points));
            kv.set("tolerance", format_double(ev_tol));
            for (std::size_t i = 0; i < ev_ckpts.size(); ++i) kv.set("ckpt." + std::to_string(i), ev_ckpts[i]);
            auto rm = begin(ctx, "eval-saliency", dir_of(ev_metrics), "", kv, ev_seed);
            const auto clouds = manifest_clouds(man, ev_points, ev_seed);
            const auto maps = saliency_maps(clouds, method, ev_ckpts, ev_seed);
            std::vector<MetricsRow> rows(clouds.size());
            parallel_for(clouds.size(), [&](std::size_t i) {
                const auto rep = symmetry_report(clouds[i].points, maps[i].normalized, ev_tol);
                rows[i] = {clouds[i].id, ev_method, ssr(clouds[i].points, maps[i].normalized), rep.is_symmetric, rep.d_sym};
            });
            write_metrics(ev_metrics, rows);
            rm.outputs.push_back(std::filesystem::path(ev_metrics).filename().string());
            if (!ev_maps.empty()) {
                std::string text;
                for (std::size_t i = 0; i < clouds.size(); ++i) text += saliency_map_csv(clouds[i].id, clouds[i].points, maps[i], i == 0);
                write_text(ev_maps, text);
                rm.outputs.push_back(std::filesystem::path(ev_maps).filename().string());
            }
            finish(rm);
            double mean_ssr = 0;
            for (const auto& r : rows) mean_ssr += r.ssr;
            out << "mean ssr " << format_double(mean_ssr / double(std::max<std::size_t>(rows.size(), 1))) << " over "
                << rows.size() << " shapes\n";
        } else if (cls->parsed()) {
            const auto man = read_manifest(cls_manifest);
            const Method method = parse_method(cls_method);
            if (cls_weighted && (method == Method::None || method == Method::Random))
                throw UsageError("--weighted needs a saliency --method (issn, csl, pca or grad)");
            if (!cls_topk.empty() && method == Method::None) throw UsageError("--topk needs a saliency --method");
            KeyValueConfig flags;
            if (cls_seed) flags.set("seed", std::to_string(*cls_seed));
            if (cls_weighted) flags.set("weighted", "true");
            auto kv = resolve_config(cls_config, cls_sets, flags);
            const auto cats = man.categories();
            ClassifierConfig cfg;
            try {
                ClassifierConfig base;
                base.classes = cats.size();
                cfg = ClassifierConfig::from_kv(kv, base);
                cfg.validate();
                if (cfg.classes != cats.size())
                    throw ConfigError("config classes=" + std::to_string(cfg.classes) + " but the manifest has " +
                                      std::to_string(cats.size()) + " categories");
                for (auto k : cls_topk)
                    if (k == 0 || k > cfg.points) throw ConfigError("--topk " + std::to_string(k) + " outside [1, points]");
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            auto rkv = cfg.to_kv();
            rkv.set("method", cls_method);
            rkv.set("test_every", std::to_string(cls_test_every));
            std::string tk;
            for (auto k : cls_topk) tk += (tk.empty() ? "" : ",") + std::to_string(k);
            rkv.set("topk", tk);
            auto rm = begin(ctx, "classify", dir_of(cls_out), cls_config, rkv, cfg.seed);

            const auto clouds = manifest_clouds(man, cfg.points, cfg.seed);
            const auto maps = saliency_maps(clouds, method, cls_ckpts, cfg.seed);
            std::vector<ClassSample> train, test;
            std::vector<std::vector<double>> train_s, test_s;
            std::map<std::string, std::size_t> seen;
            for (std::size_t i = 0; i < clouds.size(); ++i) {
                const int label = int(std::find(cats.begin(), cats.end(), clouds[i].category) - cats.begin());
                const bool held = (seen[clouds[i].category]++ % cls_test_every) == cls_test_every - 1;
                (held ? test : train).push_back({clouds[i].id, clouds[i].points, label});
                (held ? test_s : train_s).push_back(maps[i].normalized);
            }
            if (train.empty() || test.empty()) throw std::runtime_error("classify: split left an empty train or test set");
            std::vector<AccuracyRow> rows;
            if (cls_topk.empty()) {
                const auto run = train_classifier(train, cfg, cfg.weighted ? &train_s : nullptr, cats);
                const auto acc = evaluate_classifier(run.model, test);
                rows.push_back({cls_run, cls_method + (cfg.weighted ? "+weighted" : ""), 0, acc.overall, acc.avg_class,
                                cfg.epochs});
                if (!cls_model.empty()) {
                    save_checkpoint(cls_model, run.model.to_checkpoint());
                    rm.outputs.push_back(cls_model);
                }
            } else {
                for (auto k : cls_topk) {
                    const auto acc = salient_points_experiment(train, train_s, test, test_s, k, cfg);
                    rows.push_back({cls_run, cls_method, k, acc.overall, acc.avg_class, cfg.epochs});
                }
            }
            write_accuracy(cls_out, rows);
            rm.outputs.push_back(std::filesystem::path(cls_out).filename().string());
            finish(rm);
            for (const auto& r : rows)
                out << r.method << " k=" << r.k << " overall " << format_double(r.overall_acc) << " avg_class "
                    << format_double(r.avg_class_acc) << "\n";
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace salfield::cli
