#include "histoforge/labels.hpp"

#include <algorithm>
#include <cctype>

namespace histoforge {

std::string_view to_string(ClassLabel label) { return kClassNames[static_cast<int>(label)]; }

std::optional<ClassLabel> parse_class_label(std::string_view name) {
    for (int i = 0; i < kNumClasses; ++i)
        if (name == kClassNames[i]) return static_cast<ClassLabel>(i);
    return std::nullopt;
}

namespace {
std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains(const std::string& haystack, std::string_view needle) {
    return haystack.find(needle) != std::string::npos;
}
}  // namespace

std::optional<ClassLabel> class_from_path(std::string_view path) {
    std::string p = lower(path);
    if (contains(p, "benign") || contains(p, "sob_b_")) return ClassLabel::Benign;
    if (contains(p, "ductal") || contains(p, "sob_m_dc")) return ClassLabel::DuctalCarcinoma;
    if (contains(p, "lobular") || contains(p, "sob_m_lc")) return ClassLabel::LobularCarcinoma;
    if (contains(p, "mucinous") || contains(p, "sob_m_mc")) return ClassLabel::MucinousCarcinoma;
    if (contains(p, "papillary") || contains(p, "sob_m_pc")) return ClassLabel::PapillaryCarcinoma;
    return std::nullopt;
}

}  // namespace histoforge
