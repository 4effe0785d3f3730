#include "mediavault/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "json.hpp"

#include "mediavault/container.hpp"
#include "mediavault/io.hpp"

namespace mediavault {

namespace {

using nlohmann::json;

} // namespace

std::uint64_t ShardPlan::total_files() const {
    std::uint64_t n = 0;
    for (const auto& s : shards)
        n += s.size();
    return n;
}

ShardPlan make_shards(std::vector<FileRef> files, int workers, std::string listing_epoch) {
    if (workers < 1)
        throw ValidationError("shard plan needs at least one worker");
    std::sort(files.begin(), files.end());

    ShardPlan plan;
    plan.workers = workers;
    plan.listing_epoch = std::move(listing_epoch);
    plan.shards.resize(static_cast<std::size_t>(workers));
    std::size_t per_shard = files.size() / static_cast<std::size_t>(workers) + 1;
    for (auto& shard : plan.shards)
        shard.reserve(per_shard);
    for (std::size_t i = 0; i < files.size(); ++i)
        plan.shards[i % static_cast<std::size_t>(workers)].push_back(std::move(files[i]));
    return plan;
}

RunAggregate aggregate_stats(const RunStats& stats) {
    if (stats.per_worker.empty())
        throw ValidationError("run has no worker stats to aggregate");
    double total_minutes = 0;
    double total_files = 0;
    for (const auto& w : stats.per_worker) {
        total_minutes += w.runtime_minutes;
        total_files += static_cast<double>(w.files_processed);
    }
    RunAggregate agg;
    agg.mean_runtime_minutes = total_minutes / static_cast<double>(stats.per_worker.size());
    agg.total_node_hours = total_minutes / 60.0;
    agg.mean_files_per_worker = total_files / static_cast<double>(stats.per_worker.size());
    return agg;
}

std::string present_1dp(double value) {
    // Half rounds away from zero; llround does exactly that.
    long long tenths = std::llround(value * 10.0);
    long long whole = tenths / 10;
    long long frac = std::llabs(tenths % 10);
    std::string out;
    if (tenths < 0 && whole == 0)
        out += "-";
    out += std::to_string(whole);
    out += ".";
    out += std::to_string(frac);
    return out;
}

RunStats run_inference(const ShardPlan& plan,
                       const std::map<std::string, std::filesystem::path>& chunk_paths,
                       const Classifier& classifier, IndexStore& store,
                       const InferenceOptions& options) {
    if (plan.workers < 1 || plan.shards.size() != static_cast<std::size_t>(plan.workers))
        throw ValidationError("plan shard list does not match its worker count");
    const auto& labels = classifier.labels();
    if (labels.empty())
        throw ValidationError("classifier declares no labels");

    RunStats stats;
    stats.preprocess_side = options.preprocess_side;
    stats.listing_epoch = plan.listing_epoch;
    stats.per_worker.resize(plan.shards.size());

    auto worker_main = [&](std::size_t w) {
        WorkerStats& ws = stats.per_worker[w];
        ws.worker = static_cast<int>(w);
        auto start = std::chrono::steady_clock::now();

        // Workers never share container handles; each opens its own.
        std::map<std::string, std::unique_ptr<ChunkReader>> readers;
        std::vector<Triple> batch;
        batch.reserve(plan.shards[w].size() * labels.size());

        for (const FileRef& ref : plan.shards[w]) {
            ChunkReader* reader = nullptr;
            try {
                auto it = readers.find(ref.chunk_id);
                if (it == readers.end()) {
                    auto path_it = chunk_paths.find(ref.chunk_id);
                    if (path_it == chunk_paths.end())
                        throw IoError("no container registered for chunk " + ref.chunk_id);
                    it = readers
                             .emplace(ref.chunk_id,
                                      std::make_unique<ChunkReader>(
                                          std::make_shared<FileRandomAccessSource>(
                                              path_it->second)))
                             .first;
                }
                reader = it->second.get();
            } catch (const Error&) {
                ++ws.read_failures;
                continue;
            }

            std::vector<std::uint8_t> content;
            try {
                content = reader->read_entry(ref.logical_path, true);
            } catch (const Error&) {
                ++ws.read_failures;
                continue;
            }

            std::vector<double> weights;
            try {
                weights = classifier.classify(content);
                if (weights.size() != labels.size())
                    throw Error("classifier returned " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(labels.size()) + " labels");
            } catch (const std::exception&) {
                ++ws.classify_failures;
                continue;
            }

            for (std::size_t i = 0; i < labels.size(); ++i)
                batch.push_back(Triple{ref.hash,
                                       ColumnKey{ColumnKind::AnnotationMachine,
                                                 classifier.source_name(), labels[i]},
                                       format_decimal(weights[i])});
            ++ws.files_processed;
        }

        try {
            store.ingest_triples(std::move(batch));
        } catch (const std::exception&) {
            ws.ingest_aborted = true;
        }

        auto elapsed = std::chrono::duration_cast<std::chrono::duration<double>>(
            std::chrono::steady_clock::now() - start);
        ws.runtime_minutes = elapsed.count() / 60.0;
    };

    std::vector<std::thread> threads;
    threads.reserve(plan.shards.size());
    for (std::size_t w = 0; w < plan.shards.size(); ++w)
        threads.emplace_back(worker_main, w);
    for (auto& t : threads)
        t.join();
    return stats;
}

namespace {

std::uint64_t blocks_rounded_up(std::uint64_t bytes, std::uint64_t block) {
    return (bytes + block - 1) / block * block;
}

} // namespace

IoCostReport io_cost(const LayoutDescriptor& layout) {
    if (layout.block_bytes == 0)
        throw ValidationError("block size must be positive");
    if (layout.stripe_count == 0)
        throw ValidationError("stripe count must be at least 1");

    IoCostReport report;
    if (layout.mode == LayoutMode::SmallFiles) {
        if (!layout.file_sizes.empty()) {
            report.metadata_ops = layout.file_sizes.size();
            for (auto size : layout.file_sizes) {
                report.payload_bytes += size;
                report.allocated_bytes += std::max(size, layout.block_bytes);
            }
        } else {
            report.metadata_ops = layout.file_count;
            report.payload_bytes = layout.file_count * layout.per_file_bytes;
            report.allocated_bytes =
                layout.file_count * std::max(layout.per_file_bytes, layout.block_bytes);
        }
    } else {
        if (!layout.chunk_sizes.empty()) {
            report.metadata_ops = layout.chunk_sizes.size();
            for (auto size : layout.chunk_sizes) {
                report.payload_bytes += size;
                report.allocated_bytes += blocks_rounded_up(size, layout.block_bytes);
            }
        } else {
            report.metadata_ops = layout.chunk_count;
            report.payload_bytes = layout.chunk_count * layout.chunk_bytes;
            report.allocated_bytes =
                layout.chunk_count * blocks_rounded_up(layout.chunk_bytes, layout.block_bytes);
        }
    }
    if (report.payload_bytes > 0)
        report.overhead_ratio = static_cast<double>(report.allocated_bytes) /
                                static_cast<double>(report.payload_bytes);
    return report;
}

std::string plan_to_json(const ShardPlan& plan, std::uint64_t listings_performed) {
    json shards = json::array();
    for (const auto& shard : plan.shards) {
        json files = json::array();
        for (const auto& ref : shard)
            files.push_back(json{{"hash", ref.hash.hex},
                                 {"chunk", ref.chunk_id},
                                 {"path", ref.logical_path}});
        shards.push_back(std::move(files));
    }
    json doc{{"workers", plan.workers},
             {"listing_epoch", plan.listing_epoch},
             {"listings_performed", listings_performed},
             {"shards", std::move(shards)}};
    return doc.dump(2) + "\n";
}

ShardPlan plan_from_json_text(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ValidationError("plan file is not valid JSON");
    ShardPlan plan;
    try {
        plan.workers = doc.at("workers").get<int>();
        plan.listing_epoch = doc.value("listing_epoch", std::string{});
        for (const json& jshard : doc.at("shards")) {
            std::vector<FileRef> shard;
            for (const json& jref : jshard) {
                FileRef ref;
                ref.hash = ContentHash::from_hex(jref.at("hash").get<std::string>());
                ref.chunk_id = jref.at("chunk").get<std::string>();
                ref.logical_path = jref.at("path").get<std::string>();
                shard.push_back(std::move(ref));
            }
            plan.shards.push_back(std::move(shard));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("plan file is malformed: ") + e.what());
    }
    if (plan.workers < 1 || plan.shards.size() != static_cast<std::size_t>(plan.workers))
        throw ValidationError("plan file worker count disagrees with its shard list");
    return plan;
}

std::string run_stats_to_json(const RunStats& stats, const RunAggregate& aggregate) {
    json workers = json::array();
    for (const auto& w : stats.per_worker)
        workers.push_back(json{{"worker", w.worker},
                               {"files_processed", w.files_processed},
                               {"runtime_minutes", w.runtime_minutes},
                               {"read_failures", w.read_failures},
                               {"classify_failures", w.classify_failures},
                               {"ingest_aborted", w.ingest_aborted}});
    json doc{{"preprocess_side", stats.preprocess_side},
             {"listing_epoch", stats.listing_epoch},
             {"per_worker", std::move(workers)},
             {"aggregate",
              json{{"mean_runtime_minutes", aggregate.mean_runtime_minutes},
                   {"total_node_hours", aggregate.total_node_hours},
                   {"mean_files_per_worker", aggregate.mean_files_per_worker}}}};
    return doc.dump(2) + "\n";
}

RunStats run_stats_from_json_text(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ValidationError("stats file is not valid JSON");
    RunStats stats;
    try {
        stats.preprocess_side = doc.value("preprocess_side", 0);
        stats.listing_epoch = doc.value("listing_epoch", std::string{});
        for (const json& jw : doc.at("per_worker")) {
            WorkerStats w;
            w.worker = jw.at("worker").get<int>();
            w.files_processed = jw.at("files_processed").get<std::uint64_t>();
            w.runtime_minutes = jw.at("runtime_minutes").get<double>();
            w.read_failures = jw.value("read_failures", std::uint64_t{0});
            w.classify_failures = jw.value("classify_failures", std::uint64_t{0});
            w.ingest_aborted = jw.value("ingest_aborted", false);
            stats.per_worker.push_back(std::move(w));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("stats file is malformed: ") + e.what());
    }
    return stats;
}

LayoutDescriptor layout_from_json(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ValidationError("layout is not valid JSON");
    LayoutDescriptor layout;
    try {
        std::string mode = doc.at("mode").get<std::string>();
        if (mode == "small_files")
            layout.mode = LayoutMode::SmallFiles;
        else if (mode == "chunked")
            layout.mode = LayoutMode::Chunked;
        else
            throw ValidationError("layout mode must be 'small_files' or 'chunked', not '" +
                                  mode + "'");
        layout.file_count = doc.value("file_count", std::uint64_t{0});
        layout.per_file_bytes = doc.value("per_file_bytes", std::uint64_t{0});
        if (doc.contains("file_sizes"))
            layout.file_sizes = doc["file_sizes"].get<std::vector<std::uint64_t>>();
        layout.chunk_count = doc.value("chunk_count", std::uint64_t{0});
        layout.chunk_bytes = doc.value("chunk_bytes", std::uint64_t{0});
        if (doc.contains("chunk_sizes"))
            layout.chunk_sizes = doc["chunk_sizes"].get<std::vector<std::uint64_t>>();
        layout.block_bytes = doc.value("block_bytes", std::uint64_t{1'048'576});
        layout.stripe_count = doc.value("stripe_count", std::uint64_t{1});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("layout is malformed: ") + e.what());
    }
    return layout;
}

std::string io_cost_to_json(const IoCostReport& report) {
    json doc{{"metadata_ops", report.metadata_ops},
             {"allocated_bytes", report.allocated_bytes},
             {"payload_bytes", report.payload_bytes},
             {"overhead_ratio", report.overhead_ratio}};
    return doc.dump(2) + "\n";
}

} // namespace mediavault
