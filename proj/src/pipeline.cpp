#include "histoforge/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "histoforge/augment.hpp"
#include "histoforge/dataset.hpp"
#include "histoforge/metrics.hpp"
#include "histoforge/rng.hpp"
#include "histoforge/vit.hpp"

namespace histoforge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& context) {
    for (const auto& [key, _] : obj.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key: " + (context.empty() ? key : context + "." + key));
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace

RunConfig parse_run_config_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config JSON: ") + e.what());
    }
    reject_unknown_keys(j, {"dataset_root", "target_image", "encoder_weights", "output_dir",
                            "magnification", "seed", "jobs", "snmf", "head", "train", "stages"},
                        "");
    RunConfig c;
    if (j.contains("dataset_root")) c.dataset_root = j["dataset_root"].get<std::string>();
    if (j.contains("target_image")) c.target_image = j["target_image"].get<std::string>();
    if (j.contains("encoder_weights")) c.encoder_weights = j["encoder_weights"].get<std::string>();
    if (!j.contains("output_dir")) throw ConfigError("missing required config key: output_dir");
    c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("magnification")) c.magnification = j["magnification"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("snmf")) {
        const json& s = j["snmf"];
        reject_unknown_keys(s, {"i0", "beta", "lambda", "max_iters", "rel_tol"}, "snmf");
        if (s.contains("i0")) c.snmf.i0 = s["i0"].get<double>();
        if (s.contains("beta")) c.snmf.beta = s["beta"].get<double>();
        if (s.contains("lambda")) c.snmf.lambda_sparse = s["lambda"].get<double>();
        if (s.contains("max_iters")) c.snmf.max_iters = s["max_iters"].get<int>();
        if (s.contains("rel_tol")) c.snmf.rel_tol = s["rel_tol"].get<double>();
    }
    if (j.contains("head")) {
        const json& h = j["head"];
        reject_unknown_keys(h, {"variant"}, "head");
        if (h.contains("variant")) {
            std::string v = h["variant"].get<std::string>();
            if (v == "one")
                c.head_variant = HeadVariant::OneLayer;
            else if (v == "two")
                c.head_variant = HeadVariant::TwoLayer;
            else
                throw ConfigError("head.variant must be \"one\" or \"two\", got " + v);
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown_keys(t, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps"}, "train");
        if (t.contains("epochs")) c.train.epochs = t["epochs"].get<int>();
        if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
        if (t.contains("lr")) c.train.lr = t["lr"].get<double>();
        if (t.contains("beta1")) c.train.adam_beta1 = t["beta1"].get<double>();
        if (t.contains("beta2")) c.train.adam_beta2 = t["beta2"].get<double>();
        if (t.contains("eps")) c.train.adam_eps = t["eps"].get<double>();
    }
    if (j.contains("stages")) {
        const json& s = j["stages"];
        reject_unknown_keys(
            s, {"ingest", "split", "normalize", "augment", "features", "train", "evaluate"},
            "stages");
        auto get = [&](const char* key, bool fallback) {
            return s.contains(key) ? s[key].get<bool>() : fallback;
        };
        c.stages.ingest = get("ingest", true);
        c.stages.split = get("split", true);
        c.stages.normalize = get("normalize", true);
        c.stages.augment = get("augment", true);
        c.stages.features = get("features", true);
        c.stages.train = get("train", true);
        c.stages.evaluate = get("evaluate", true);
    }
    c.snmf.validate();
    c.train.validate();
    return c;
}

RunConfig parse_run_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config_json(text.str());
}

std::string run_config_hash(const RunConfig& c) {
    std::ostringstream s;
    s << c.dataset_root.generic_string() << '\n'
      << c.target_image.generic_string() << '\n'
      << c.encoder_weights.generic_string() << '\n'
      << c.output_dir.generic_string() << '\n'
      << c.magnification << '\n'
      << c.seed << '\n'
      << c.jobs << '\n'
      << c.snmf.i0 << ' ' << c.snmf.beta << ' ' << c.snmf.lambda_sparse << ' '
      << c.snmf.max_iters << ' ' << c.snmf.rel_tol << '\n'
      << (c.head_variant == HeadVariant::OneLayer ? "one" : "two") << '\n'
      << c.train.epochs << ' ' << c.train.batch_size << ' ' << c.train.lr << ' '
      << c.train.adam_beta1 << ' ' << c.train.adam_beta2 << ' ' << c.train.adam_eps << '\n'
      << c.stages.ingest << c.stages.split << c.stages.normalize << c.stages.augment
      << c.stages.features << c.stages.train << c.stages.evaluate;
    return hex64(fnv1a64(s.str()));
}

std::string experiment_hash(const RunConfig& c) {
    std::ostringstream s;
    s << c.dataset_root.generic_string() << '\n'
      << c.target_image.generic_string() << '\n'
      << c.encoder_weights.generic_string() << '\n'
      << c.magnification << '\n'
      << c.seed << '\n'
      << c.snmf.i0 << ' ' << c.snmf.beta << ' ' << c.snmf.lambda_sparse << ' '
      << c.snmf.max_iters << ' ' << c.snmf.rel_tol << '\n'
      << (c.head_variant == HeadVariant::OneLayer ? "one" : "two") << '\n'
      << c.train.epochs << ' ' << c.train.batch_size << ' ' << c.train.lr << ' '
      << c.train.adam_beta1 << ' ' << c.train.adam_beta2 << ' ' << c.train.adam_eps;
    return hex64(fnv1a64(s.str()));
}

std::uint64_t file_checksum(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for checksum: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

void stage_ingest(const fs::path& root, int magnification, const fs::path& out_csv) {
    DatasetManifest manifest = scan_dataset(root, magnification);
    for (const auto& warning : manifest.warnings) std::cerr << "warning: " << warning << '\n';
    write_manifest_csv(manifest, out_csv);
}

void stage_split(const fs::path& manifest_csv, std::uint64_t seed, const fs::path& out_csv) {
    DatasetManifest manifest = read_manifest_csv(manifest_csv);
    SplitManifest split = stratified_split(manifest, seed);
    write_split_csv(manifest, split, out_csv);
}

namespace {

/// Resolve a sample's image: the normalized layout when present, otherwise
/// the manifest path.
fs::path resolve_image(const SampleRecord& rec, const fs::path& image_dir) {
    if (!image_dir.empty()) {
        fs::path candidate = image_dir / (rec.sample_id + ".png");
        if (fs::exists(candidate)) return candidate;
    }
    return rec.path;
}

std::vector<std::pair<std::string, fs::path>> collect_inputs(const fs::path& input,
                                                             const fs::path& image_dir) {
    std::vector<std::pair<std::string, fs::path>> items;
    if (fs::is_directory(input)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(input))
            if (entry.is_regular_file() && entry.path().extension() != ".csv" &&
                entry.path().extension() != ".json")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::string id = fs::relative(f, input).replace_extension("").generic_string();
            std::replace(id.begin(), id.end(), '/', '_');
            items.emplace_back(id, f);
        }
    } else {
        DatasetManifest manifest = read_manifest_csv(input);
        for (const auto& rec : manifest.records)
            items.emplace_back(rec.sample_id, resolve_image(rec, image_dir));
    }
    return items;
}

}  // namespace

void stage_normalize(const fs::path& target_image, const fs::path& input, const fs::path& out_dir,
                     const SnmfParams& params) {
    fs::create_directories(out_dir);
    ImageTensor target = load_image(target_image);
    StainModel model = estimate_stain_model(target, params);
    save_stain_model(model, params, out_dir / "stain_model.json");
    for (const auto& [id, path] : collect_inputs(input, {})) {
        ImageTensor source = load_image(path);
        ImageTensor normalized = normalize_to_target(source, model, params);
        save_png(normalized, out_dir / (id + ".png"));
    }
}

void stage_augment(const fs::path& splits_csv, const std::string& split, std::uint64_t seed,
                   const fs::path& out_dir, const fs::path& image_dir) {
    SplitTable table = read_split_csv(splits_csv);
    Split which = Split::Train;
    if (split == "train")
        which = Split::Train;
    else if (split == "validation")
        which = Split::Validation;
    else if (split == "test")
        which = Split::Test;
    else
        throw std::invalid_argument("unknown split: " + split);

    fs::create_directories(out_dir);
    std::ofstream provenance(out_dir / "provenance.csv", std::ios::binary);
    provenance << "output_path,input_id,class,step\n";

    for (int k = 0; k < kNumClasses; ++k) {
        ClassLabel label = static_cast<ClassLabel>(k);
        std::vector<ImageTensor> images;
        std::vector<std::string> ids;
        for (const auto& rec : table.manifest.records) {
            if (rec.class_label != label) continue;
            auto it = table.assignment.find(rec.sample_id);
            if (it == table.assignment.end() || it->second != which) continue;
            images.push_back(load_image(resolve_image(rec, image_dir)));
            ids.push_back(rec.sample_id);
        }
        if (images.empty()) continue;
        AugmentationPlan plan = plan_for_class(label);
        auto outputs = augment_class(images, ids, plan, seed);
        for (const auto& out : outputs) {
            std::string name = out.input_id + "__" + out.step + ".png";
            save_png(out.image, out_dir / name);
            provenance << name << ',' << out.input_id << ',' << to_string(out.class_label) << ','
                       << out.step << '\n';
        }
    }
}

void stage_features(const fs::path& weights, const fs::path& input, const fs::path& out_file,
                    const fs::path& image_dir, const fs::path& augmented_dir) {
    VitWeights vit = load_vit_weights(weights);
    TensorFile features;

    auto encode_into = [&](const std::string& id, const fs::path& path) {
        NormalizedTensor tensor = finalize(load_image(path), id);
        VectorF feature = encode(tensor, vit);
        features.add(id, {feature.size()}, {feature.data(), feature.data() + feature.size()});
    };

    for (const auto& [id, path] : collect_inputs(input, image_dir)) encode_into(id, path);

    if (!augmented_dir.empty() && fs::exists(augmented_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(augmented_dir))
            if (entry.path().extension() == ".png") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) encode_into(f.stem().string(), f);
    }

    features.meta = {{"dim", std::to_string(vit.config.embed_dim)}};
    features.write(out_file);
}

namespace {

struct FeatureSets {
    Eigen::MatrixXd train_x, val_x, test_x;
    std::vector<int> train_y, val_y, test_y;
    std::vector<std::string> test_ids;
    int dim = 0;
};

/// Features whose name is a split sample go to that split; names of the form
/// <sample_id>__<step> are augmented outputs and join the training set with
/// their source sample's label.
FeatureSets assemble_features(const TensorFile& features, const SplitTable& table) {
    std::map<std::string, std::pair<ClassLabel, Split>> lookup;
    for (const auto& rec : table.manifest.records) {
        auto it = table.assignment.find(rec.sample_id);
        if (it != table.assignment.end())
            lookup[rec.sample_id] = {rec.class_label, it->second};
    }

    struct Row {
        const NamedTensor* tensor;
        int label;
        Split split;
        std::string id;
    };
    std::vector<Row> rows;
    int dim = 0;
    for (const auto& [name, tensor] : features.tensors) {
        std::string base = name;
        if (auto sep = name.find("__"); sep != std::string::npos) base = name.substr(0, sep);
        auto it = lookup.find(base);
        if (it == lookup.end()) continue;
        Split split = base == name ? it->second.second : Split::Train;
        if (base != name && it->second.second != Split::Train)
            continue;  // augmented outputs only ever come from training inputs
        rows.push_back({&tensor, static_cast<int>(it->second.first), split, name});
        dim = static_cast<int>(tensor.values.size());
    }

    FeatureSets sets;
    sets.dim = dim;
    auto count = [&](Split s) {
        return std::count_if(rows.begin(), rows.end(),
                             [&](const Row& r) { return r.split == s; });
    };
    sets.train_x.resize(dim, count(Split::Train));
    sets.val_x.resize(dim, count(Split::Validation));
    sets.test_x.resize(dim, count(Split::Test));
    Eigen::Index ti = 0, vi = 0, si = 0;
    for (const auto& row : rows) {
        Eigen::Map<const Eigen::VectorXf> v(row.tensor->values.data(), dim);
        switch (row.split) {
            case Split::Train:
                sets.train_x.col(ti++) = v.cast<double>();
                sets.train_y.push_back(row.label);
                break;
            case Split::Validation:
                sets.val_x.col(vi++) = v.cast<double>();
                sets.val_y.push_back(row.label);
                break;
            case Split::Test:
                sets.test_x.col(si++) = v.cast<double>();
                sets.test_y.push_back(row.label);
                sets.test_ids.push_back(row.id);
                break;
        }
    }
    return sets;
}

}  // namespace

void stage_train(const fs::path& features_file, const fs::path& splits_csv, HeadVariant variant,
                 std::uint64_t seed, const fs::path& out_head, const fs::path& out_history,
                 const TrainConfig& train_config) {
    TensorFile features = TensorFile::read(features_file);
    SplitTable table = read_split_csv(splits_csv);
    FeatureSets sets = assemble_features(features, table);
    if (sets.train_x.cols() == 0) throw std::runtime_error("no training features found");

    HeadConfig head_config;
    head_config.variant = variant;
    head_config.in_dim = sets.dim;
    head_config.n_classes = kNumClasses;

    TrainConfig tc = train_config;
    tc.seed = seed;
    TrainResult result = train(sets.train_x, sets.train_y, sets.val_x, sets.val_y, head_config, tc);

    save_head(result.final_params, head_config, out_head);
    fs::path best_path = out_head;
    best_path.replace_extension(".best" + out_head.extension().string());
    save_head(result.best_params, head_config, best_path);

    if (!out_history.empty()) {
        std::ofstream history(out_history, std::ios::binary);
        history << "epoch,train_loss,val_loss,val_acc\n";
        for (const auto& e : result.history) {
            char line[128];
            std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss,
                          e.val_loss, e.val_accuracy);
            history << line;
        }
    }
}

void stage_evaluate(const fs::path& head_file, const fs::path& features_file,
                    const fs::path& splits_csv, const std::string& split,
                    const fs::path& out_report, std::map<std::string, std::string> metadata) {
    auto [params, head_config] = load_head(head_file);
    TensorFile features = TensorFile::read(features_file);
    SplitTable table = read_split_csv(splits_csv);
    FeatureSets sets = assemble_features(features, table);

    const Eigen::MatrixXd* x = &sets.test_x;
    const std::vector<int>* y = &sets.test_y;
    if (split == "validation") {
        x = &sets.val_x;
        y = &sets.val_y;
    } else if (split == "train") {
        x = &sets.train_x;
        y = &sets.train_y;
    } else if (split != "test") {
        throw std::invalid_argument("unknown split: " + split);
    }
    if (x->cols() == 0) throw std::runtime_error("no features for split " + split);

    std::vector<int> predictions;
    for (Eigen::Index i = 0; i < x->cols(); ++i) {
        Eigen::VectorXd probs = forward(x->col(i), params, head_config);
        Eigen::Index pred;
        probs.maxCoeff(&pred);
        predictions.push_back(static_cast<int>(pred));
    }
    ConfusionMatrix cm = confusion(predictions, *y, head_config.n_classes);
    EvaluationReport report = aggregate(cm);
    report.metadata = std::move(metadata);
    report.metadata.emplace("split", split);
    report.metadata.emplace(
        "head", head_config.variant == HeadVariant::OneLayer ? "one_layer" : "two_layer");
    write_report_json(report, out_report);
    std::cout << format_report_table(report);
}

void run_pipeline(const RunConfig& config) {
    fs::create_directories(config.output_dir);
    const fs::path out = config.output_dir;
    const fs::path manifest_csv = out / "manifest.csv";
    const fs::path splits_csv = out / "splits.csv";
    const fs::path normalized_dir = out / "normalized";
    const fs::path augmented_dir = out / "augmented";
    const fs::path features_file = out / "features.bin";
    const fs::path head_file = out / "head.hfwt";
    const fs::path history_csv = out / "history.csv";
    const fs::path report_json = out / "report.json";

    json record;
    record["config_hash"] = run_config_hash(config);
    json stage_log = json::object();

    auto run_stage = [&](const std::string& name, bool enabled, auto&& fn) {
        if (!enabled) {
            stage_log[name] = {{"skipped", true}};
            return;
        }
        auto start = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        stage_log[name] = {{"skipped", false}, {"duration_s", seconds}};
    };

    bool use_normalized = !config.target_image.empty();
    run_stage("ingest", config.stages.ingest,
              [&] { stage_ingest(config.dataset_root, config.magnification, manifest_csv); });
    run_stage("split", config.stages.split,
              [&] { stage_split(manifest_csv, config.seed, splits_csv); });
    run_stage("normalize", config.stages.normalize && use_normalized, [&] {
        SnmfParams params = config.snmf;
        params.seed = config.seed;
        stage_normalize(config.target_image, manifest_csv, normalized_dir, params);
    });
    run_stage("augment", config.stages.augment, [&] {
        stage_augment(splits_csv, "train", config.seed, augmented_dir,
                      use_normalized ? normalized_dir : fs::path{});
    });
    run_stage("features", config.stages.features, [&] {
        stage_features(config.encoder_weights, splits_csv, features_file,
                       use_normalized ? normalized_dir : fs::path{}, augmented_dir);
    });
    run_stage("train", config.stages.train, [&] {
        stage_train(features_file, splits_csv, config.head_variant, config.seed, head_file,
                    history_csv, config.train);
    });
    run_stage("evaluate", config.stages.evaluate, [&] {
        stage_evaluate(head_file, features_file, splits_csv, "test", report_json,
                       {{"config_hash", experiment_hash(config)},
                        {"seed", std::to_string(config.seed)}});
    });

    record["stages"] = stage_log;
    json artifacts = json::object();
    for (const fs::path& artifact :
         {manifest_csv, splits_csv, features_file, head_file, history_csv, report_json})
        if (fs::exists(artifact))
            artifacts[artifact.filename().string()] = hex64(file_checksum(artifact));
    record["artifacts"] = artifacts;
    std::ofstream run_file(out / "run.json", std::ios::binary);
    run_file << record.dump(2) << '\n';
}

}  // namespace histoforge
