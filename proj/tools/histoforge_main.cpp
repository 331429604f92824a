#include <CLI11.hpp>
#include <iostream>

#include "histoforge/pipeline.hpp"

using namespace histoforge;

int main(int argc, char** argv) {
    CLI::App app{"histoforge: stain-normalized, class-balanced histopathology classification "
                 "pipeline"};
    app.require_subcommand(1);

    std::string root, manifest, splits, target, input, output, weights, features_path, head_path,
        history_path, head_variant = "one", split_name = "train", eval_split = "test",
        config_path, image_dir;
    int magnification = 40;
    std::uint64_t seed = 0;
    int jobs = 1;
    SnmfParams snmf;
    TrainConfig train_cfg;

    auto* ingest = app.add_subcommand("ingest", "Scan a dataset tree into a manifest CSV");
    ingest->add_option("--root", root, "dataset root directory")->required();
    ingest->add_option("--mag", magnification, "magnification (40/100/200/400)");
    ingest->add_option("--out", output, "output manifest CSV")->required();

    auto* split = app.add_subcommand("split", "Stratified train/validation/test split");
    split->add_option("--manifest", manifest, "manifest CSV")->required();
    split->add_option("--seed", seed, "shuffle seed");
    split->add_option("--out", output, "output split CSV")->required();

    auto* normalize = app.add_subcommand("normalize", "Stain-normalize images to a target");
    normalize->add_option("--target", target, "target image")->required();
    normalize->add_option("--in", input, "input directory or manifest CSV")->required();
    normalize->add_option("--out", output, "output directory")->required();
    normalize->add_option("--lambda", snmf.lambda_sparse, "sparsity weight");
    normalize->add_option("--beta", snmf.beta, "background OD threshold");
    normalize->add_option("--iters", snmf.max_iters, "max SNMF iterations");
    normalize->add_option("--seed", snmf.seed, "SNMF init seed");

    auto* augment = app.add_subcommand("augment", "Run the per-class augmentation programs");
    augment->add_option("--manifest", splits, "split CSV")->required();
    augment->add_option("--split", split_name, "split to augment (default train)");
    augment->add_option("--seed", seed, "augmentation seed");
    augment->add_option("--out", output, "output directory")->required();
    augment->add_option("--images", image_dir, "directory of normalized images (optional)");

    auto* features = app.add_subcommand("features", "Extract frozen encoder features");
    features->add_option("--weights", weights, "encoder weight container")->required();
    features->add_option("--in", input, "input directory or manifest CSV")->required();
    features->add_option("--out", output, "output feature container")->required();
    features->add_option("--images", image_dir, "directory of normalized images (optional)");
    features->add_option("--augmented", manifest, "directory of augmented images (optional)");

    auto* trainc = app.add_subcommand("train", "Train a classifier head on frozen features");
    trainc->add_option("--features", features_path, "feature container")->required();
    trainc->add_option("--splits", splits, "split CSV")->required();
    trainc->add_option("--head", head_variant, "head variant: one|two");
    trainc->add_option("--seed", seed, "training seed");
    trainc->add_option("--out", output, "output head container")->required();
    trainc->add_option("--history", history_path, "per-epoch history CSV");
    trainc->add_option("--epochs", train_cfg.epochs, "training epochs");
    trainc->add_option("--batch-size", train_cfg.batch_size, "mini-batch size");
    trainc->add_option("--lr", train_cfg.lr, "learning rate");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a head on a split");
    evaluate->add_option("--head", head_path, "head container")->required();
    evaluate->add_option("--features", features_path, "feature container")->required();
    evaluate->add_option("--splits", splits, "split CSV")->required();
    evaluate->add_option("--split", eval_split, "split to evaluate (default test)");
    evaluate->add_option("--out", output, "output report JSON")->required();

    auto* run = app.add_subcommand("run", "Run the whole pipeline from a config");
    run->add_option("--config", config_path, "run config JSON")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--jobs", jobs, "worker cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest) {
            stage_ingest(root, magnification, output);
        } else if (*split) {
            stage_split(manifest, seed, output);
        } else if (*normalize) {
            snmf.validate();
            stage_normalize(target, input, output, snmf);
        } else if (*augment) {
            stage_augment(splits, split_name, seed, output, image_dir);
        } else if (*features) {
            stage_features(weights, input, output, image_dir, manifest);
        } else if (*trainc) {
            HeadVariant variant;
            if (head_variant == "one")
                variant = HeadVariant::OneLayer;
            else if (head_variant == "two")
                variant = HeadVariant::TwoLayer;
            else
                throw ConfigError("--head must be one|two, got " + head_variant);
            stage_train(features_path, splits, variant, seed, output, history_path, train_cfg);
        } else if (*evaluate) {
            stage_evaluate(head_path, features_path, splits, eval_split, output);
        } else if (*run) {
            RunConfig config = parse_run_config(config_path);
            if (run->count("--seed")) config.seed = seed;
            if (run->count("--jobs")) config.jobs = jobs;
            run_pipeline(config);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const StageError& e) {
        std::cerr << "stage failure " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
