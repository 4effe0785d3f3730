#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mediavault/classifier.hpp"
#include "mediavault/index.hpp"

namespace mediavault {

struct ShardPlan {
    int workers = 0;
    std::vector<std::vector<FileRef>> shards; // one per worker
    std::string listing_epoch;

    std::uint64_t total_files() const;
};

// Deals files round-robin: after sorting by hash, file i goes to shard
// i mod workers. Shard sizes differ by at most one file.
ShardPlan make_shards(std::vector<FileRef> files, int workers, std::string listing_epoch = {});

struct WorkerStats {
    int worker = 0;
    std::uint64_t files_processed = 0; // files this worker classified
    double runtime_minutes = 0;
    std::uint64_t read_failures = 0;
    std::uint64_t classify_failures = 0;
    // The worker's annotation batch failed to land in the store.
    bool ingest_aborted = false;
};

struct RunStats {
    std::vector<WorkerStats> per_worker;
    int preprocess_side = 0;
    std::string listing_epoch;
};

struct RunAggregate {
    double mean_runtime_minutes = 0;
    double total_node_hours = 0;
    double mean_files_per_worker = 0;
};

// Exact aggregates; nothing is rounded here. Presentation rounding is the
// caller's problem (see present_1dp). Throws on an empty run.
RunAggregate aggregate_stats(const RunStats& stats);

// Rounds half away from zero to one decimal and renders with exactly one
// digit after the point.
std::string present_1dp(double value);

struct InferenceOptions {
    int preprocess_side = 224;
};

// Runs one classifier pass over the plan: one thread per shard, each worker
// reading its files from the chunks it needs (verified against the stored
// hash), scoring them, and batching score triples into the store under
// ANNOTATION_MACHINE|<source>|<label>. Per-worker wall time is recorded in
// minutes. The plan's files are located through chunk_paths, keyed by
// chunk id.
RunStats run_inference(const ShardPlan& plan,
                       const std::map<std::string, std::filesystem::path>& chunk_paths,
                       const Classifier& classifier, IndexStore& store,
                       const InferenceOptions& options = {});

enum class LayoutMode { SmallFiles, Chunked };

// Storage layout to cost. Explicit size lists win over the uniform
// count-times-size description when both are present.
struct LayoutDescriptor {
    LayoutMode mode = LayoutMode::SmallFiles;

    std::uint64_t file_count = 0;
    std::uint64_t per_file_bytes = 0;
    std::vector<std::uint64_t> file_sizes;

    std::uint64_t chunk_count = 0;
    std::uint64_t chunk_bytes = 0;
    std::vector<std::uint64_t> chunk_sizes;

    std::uint64_t block_bytes = 1'048'576;
    std::uint64_t stripe_count = 1;
};

struct IoCostReport {
    std::uint64_t metadata_ops = 0;
    std::uint64_t allocated_bytes = 0;
    std::uint64_t payload_bytes = 0;
    double overhead_ratio = 0; // allocated / payload; 0 when there is no payload
};

// Filesystem cost of a layout: small files each cost one metadata op and at
// least one allocation block; chunked files cost one op per chunk and
// whole-block allocation per chunk.
IoCostReport io_cost(const LayoutDescriptor& layout);

std::string plan_to_json(const ShardPlan& plan, std::uint64_t listings_performed);
ShardPlan plan_from_json_text(const std::string& text);
std::string run_stats_to_json(const RunStats& stats, const RunAggregate& aggregate);
RunStats run_stats_from_json_text(const std::string& text);
LayoutDescriptor layout_from_json(const std::string& text);
std::string io_cost_to_json(const IoCostReport& report);

} // namespace mediavault
