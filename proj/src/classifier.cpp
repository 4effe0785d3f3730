#include "mediavault/classifier.hpp"

#include "mediavault/model.hpp"

namespace mediavault {

StubClassifier::StubClassifier(std::string source_name, std::vector<std::string> labels)
    : source_name_(std::move(source_name)), labels_(std::move(labels)) {
    if (labels_.empty())
        throw ValidationError("classifier needs at least one label");
    // Labels become column fields, so they must be valid as such.
    for (const auto& label : labels_)
        ColumnKey::make(ColumnKind::AnnotationMachine, source_name_, label);
}

std::vector<double> StubClassifier::classify(std::span<const std::uint8_t> content) const {
    auto digest = sha1_raw(content);
    std::vector<double> raw(labels_.size());
    double sum = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = 1.0 + digest[i % digest.size()];
        sum += raw[i];
    }
    for (double& w : raw)
        w /= sum;
    return raw;
}

} // namespace mediavault
