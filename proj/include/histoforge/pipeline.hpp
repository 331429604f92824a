#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "histoforge/head.hpp"
#include "histoforge/stain.hpp"

namespace histoforge {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct StageToggles {
    bool ingest = true;
    bool split = true;
    bool normalize = true;
    bool augment = true;
    bool features = true;
    bool train = true;
    bool evaluate = true;
};

struct RunConfig {
    std::filesystem::path dataset_root;
    std::filesystem::path target_image;  // stain normalization target; empty disables
    std::filesystem::path encoder_weights;
    std::filesystem::path output_dir;
    int magnification = 40;
    std::uint64_t seed = 0;
    int jobs = 1;
    SnmfParams snmf;
    HeadVariant head_variant = HeadVariant::OneLayer;
    TrainConfig train;
    StageToggles stages;
};

/// Parse the strict-schema JSON config; unknown keys raise ConfigError
/// naming the key.
RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig parse_run_config_json(const std::string& json_text);

/// Stable hash of every config field; changes iff a field changes.
std::string run_config_hash(const RunConfig& config);

/// Hash of only the result-determining fields: output location, job count
/// and stage toggles are excluded, so reruns of the same experiment into a
/// different directory report the same hash.
std::string experiment_hash(const RunConfig& config);

/// Execute the enabled stages in order, each feeding the next, and write a
/// run.json record (config hash, stage durations, artifact checksums) into
/// the output directory. A failing stage aborts with a StageError; partial
/// outputs are kept.
void run_pipeline(const RunConfig& config);

std::uint64_t file_checksum(const std::filesystem::path& path);

// Individually invocable stages; the CLI subcommands map onto these and
// run_pipeline chains them.

void stage_ingest(const std::filesystem::path& root, int magnification,
                  const std::filesystem::path& out_csv);

void stage_split(const std::filesystem::path& manifest_csv, std::uint64_t seed,
                 const std::filesystem::path& out_csv);

/// Normalize every image of a manifest (or every image file under a
/// directory) into `out_dir`, named <sample_id>.png, and write the target's
/// stain model alongside as stain_model.json.
void stage_normalize(const std::filesystem::path& target_image,
                     const std::filesystem::path& input, const std::filesystem::path& out_dir,
                     const SnmfParams& params);

/// Augment the named split of a split CSV into out_dir: PNGs named
/// <sample_id>__<step>.png plus provenance.csv. `image_dir`, when given,
/// overrides the manifest paths with <image_dir>/<sample_id>.png (the
/// normalize stage's layout).
void stage_augment(const std::filesystem::path& splits_csv, const std::string& split,
                   std::uint64_t seed, const std::filesystem::path& out_dir,
                   const std::filesystem::path& image_dir = {});

/// Extract encoder features for a directory of images or a manifest CSV into
/// a tensor container, one tensor per sample named by sample_id.
void stage_features(const std::filesystem::path& weights, const std::filesystem::path& input,
                    const std::filesystem::path& out_file,
                    const std::filesystem::path& image_dir = {},
                    const std::filesystem::path& augmented_dir = {});

void stage_train(const std::filesystem::path& features_file,
                 const std::filesystem::path& splits_csv, HeadVariant variant,
                 std::uint64_t seed, const std::filesystem::path& out_head,
                 const std::filesystem::path& out_history, const TrainConfig& train_config);

void stage_evaluate(const std::filesystem::path& head_file,
                    const std::filesystem::path& features_file,
                    const std::filesystem::path& splits_csv, const std::string& split,
                    const std::filesystem::path& out_report,
                    std::map<std::string, std::string> metadata = {});

}  // namespace histoforge
