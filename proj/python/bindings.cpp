#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <stdexcept>

#include "histoforge/augment.hpp"
#include "histoforge/head.hpp"
#include "histoforge/image.hpp"
#include "histoforge/labels.hpp"
#include "histoforge/metrics.hpp"
#include "histoforge/pipeline.hpp"
#include "histoforge/rng.hpp"
#include "histoforge/stain.hpp"
#include "histoforge/vit.hpp"

namespace py = pybind11;
using namespace histoforge;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const U8Array& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3)
        throw std::invalid_argument("expected an array of shape (height, width, 3)");
    ImageTensor img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    std::memcpy(img.data.data(), arr.data(), img.data.size());
    return img;
}

py::array to_numpy(const ImageTensor& img) {
    py::array_t<std::uint8_t> out({img.height, img.width, 3});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size());
    return out;
}

ClassLabel label_from_name(const std::string& name) {
    auto label = parse_class_label(name);
    if (!label) throw std::invalid_argument("unknown class: " + name);
    return *label;
}

HeadConfig head_config(const std::string& variant, int in_dim, int n_classes, int hidden_dim) {
    HeadConfig cfg;
    if (variant == "one_layer")
        cfg.variant = HeadVariant::OneLayer;
    else if (variant == "two_layer")
        cfg.variant = HeadVariant::TwoLayer;
    else
        throw std::invalid_argument("variant must be 'one_layer' or 'two_layer'");
    cfg.in_dim = in_dim;
    cfg.n_classes = n_classes;
    cfg.hidden_dim = hidden_dim;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_histoforge, m) {
    m.doc() = "Histopathology pipeline core: stain normalization, augmentation, "
              "ViT features, classifier heads, and evaluation";

    m.def("fnv1a64", [](const std::string& text) { return fnv1a64(text); }, py::arg("text"),
          "64-bit FNV-1a hash of a string");

    m.def("class_names", [] {
        std::vector<std::string> names;
        for (auto n : kClassNames) names.emplace_back(n);
        return names;
    });

    m.def(
        "count_params",
        [](const std::string& variant, int in_dim, int n_classes, int hidden_dim) {
            return count_params(head_config(variant, in_dim, n_classes, hidden_dim));
        },
        py::arg("variant"), py::arg("in_dim") = 768, py::arg("n_classes") = 5,
        py::arg("hidden_dim") = 256, "Trainable parameter count of a classifier head");

    m.def("gelu", [](float x) { return gelu(x); }, py::arg("x"));

    m.def(
        "augmentation_multiplicity",
        [](const std::string& class_name) {
            return plan_for_class(label_from_name(class_name)).multiplicity;
        },
        py::arg("class_name"), "Outputs produced per input image for a class");

    m.def(
        "augment_image",
        [](const U8Array& image, const std::string& class_name, const std::string& sample_id,
           std::uint64_t seed) {
            AugmentationPlan plan = plan_for_class(label_from_name(class_name));
            auto outputs = augment_class({to_image(image)}, {sample_id}, plan, seed);
            py::list result;
            for (const auto& out : outputs)
                result.append(py::make_tuple(out.step, to_numpy(out.image)));
            return result;
        },
        py::arg("image"), py::arg("class_name"), py::arg("sample_id") = "sample",
        py::arg("seed") = 0, "Run the class's augmentation program; returns (tag, image) pairs");

    m.def(
        "normalize_image",
        [](const U8Array& source, const U8Array& target) {
            SnmfParams params;
            StainModel model = estimate_stain_model(to_image(target), params);
            return to_numpy(normalize_to_target(to_image(source), model, params));
        },
        py::arg("source"), py::arg("target"),
        "Remap the source image's stains onto the target image's palette");

    m.def(
        "random_encoder",
        [](const std::filesystem::path& path, int image_size, int patch_size, int embed_dim,
           int n_blocks, int n_heads, std::uint64_t seed) {
            VitConfig cfg;
            cfg.image_size = image_size;
            cfg.patch_size = patch_size;
            cfg.embed_dim = embed_dim;
            cfg.n_blocks = n_blocks;
            cfg.n_heads = n_heads;
            cfg.mlp_dim = 4 * embed_dim;
            cfg.validate();
            save_vit_weights(random_vit_weights(cfg, seed), path);
        },
        py::arg("path"), py::arg("image_size") = 224, py::arg("patch_size") = 16,
        py::arg("embed_dim") = 768, py::arg("n_blocks") = 12, py::arg("n_heads") = 12,
        py::arg("seed") = 0, "Write a randomly initialized encoder weight file");

    m.def(
        "encode_image",
        [](const std::filesystem::path& weights_path, const U8Array& image) {
            VitWeights w = load_vit_weights(weights_path);
            VectorF features = encode(finalize(to_image(image)), w);
            py::array_t<float> out(features.size());
            std::memcpy(out.mutable_data(), features.data(), features.size() * sizeof(float));
            return out;
        },
        py::arg("weights_path"), py::arg("image"),
        "Frozen-encoder feature vector of an image");

    m.def(
        "evaluate_confusion_json",
        [](const std::vector<std::vector<long>>& counts, std::vector<std::string> names) {
            ConfusionMatrix cm;
            cm.counts = counts;
            if (names.empty())
                for (std::size_t k = 0; k < counts.size(); ++k)
                    names.push_back("class_" + std::to_string(k));
            cm.class_names = std::move(names);
            return report_to_json(aggregate(cm));
        },
        py::arg("counts"), py::arg("class_names") = std::vector<std::string>{},
        "Evaluation report (JSON text) from a confusion matrix, rows = true class");

    m.def(
        "run",
        [](const std::filesystem::path& config_path) {
            run_pipeline(parse_run_config(config_path));
        },
        py::arg("config_path"), "Execute the full pipeline described by a JSON config file");
}
