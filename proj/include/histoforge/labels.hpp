#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace histoforge {

/// The five classes: all benign subtypes collapse into one label, malignant
/// splits into its four subtypes. Index order is alphabetical and fixed; it
/// doubles as the logit index of the classifier heads.
enum class ClassLabel : int {
    Benign = 0,
    DuctalCarcinoma = 1,
    LobularCarcinoma = 2,
    MucinousCarcinoma = 3,
    PapillaryCarcinoma = 4,
};

inline constexpr int kNumClasses = 5;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Benign", "DuctalCarcinoma", "LobularCarcinoma", "MucinousCarcinoma", "PapillaryCarcinoma"};

std::string_view to_string(ClassLabel label);
std::optional<ClassLabel> parse_class_label(std::string_view name);

/// Derive the class from a BreakHis-style path: any segment containing
/// "benign" maps to Benign; otherwise the malignant subtype token
/// (ductal/lobular/mucinous/papillary, or the SOB_M_{DC,LC,MC,PC} file code)
/// decides. Returns nullopt when no rule matches.
std::optional<ClassLabel> class_from_path(std::string_view path);

}  // namespace histoforge
