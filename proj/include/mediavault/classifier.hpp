#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mediavault/errors.hpp"

namespace mediavault {

// A label scorer. classify() must be safe to call from several worker
// threads at once and must return one score per label, in label order.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual const std::string& source_name() const = 0;
    virtual const std::vector<std::string>& labels() const = 0;
    virtual std::vector<double> classify(std::span<const std::uint8_t> content) const = 0;
};

// Deterministic stand-in classifier: scores are derived from the content
// hash, normalized to sum to 1. Same bytes always score the same.
class StubClassifier : public Classifier {
public:
    StubClassifier(std::string source_name, std::vector<std::string> labels);

    const std::string& source_name() const override { return source_name_; }
    const std::vector<std::string>& labels() const override { return labels_; }
    std::vector<double> classify(std::span<const std::uint8_t> content) const override;

private:
    std::string source_name_;
    std::vector<std::string> labels_;
};

} // namespace mediavault
