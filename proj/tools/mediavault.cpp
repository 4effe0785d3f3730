#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mediavault/archive.hpp"
#include "mediavault/classifier.hpp"
#include "mediavault/container.hpp"
#include "mediavault/index.hpp"
#include "mediavault/io.hpp"
#include "mediavault/planner.hpp"
#include "mediavault/query.hpp"

using namespace mediavault;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "mediavault 0.1.0";

// One line of the scan/pack interchange: a FileRecord plus where the bytes
// currently live on disk.
struct ScannedRecord {
    FileRecord record;
    fs::path source_path;
};

json record_to_json(const ScannedRecord& r) {
    json doc{{"path", r.record.logical_path},
             {"source", r.source_path.string()},
             {"size", r.record.size_bytes},
             {"sha1", r.record.hash.hex},
             {"dataset", r.record.dataset_source},
             {"partition", partition_of(r.record.capture_time).render()}};
    if (r.record.capture_time)
        doc["capture"] = format_timestamp(*r.record.capture_time);
    else
        doc["capture"] = nullptr;
    return doc;
}

ScannedRecord record_from_json(const json& doc) {
    ScannedRecord r;
    r.record.logical_path = doc.at("path").get<std::string>();
    r.source_path = doc.at("source").get<std::string>();
    r.record.size_bytes = doc.at("size").get<std::uint64_t>();
    std::string hex = doc.value("sha1", std::string{});
    if (!hex.empty())
        r.record.hash = ContentHash::from_hex(hex);
    if (doc.contains("capture") && !doc["capture"].is_null())
        r.record.capture_time = parse_timestamp(doc["capture"].get<std::string>());
    r.record.dataset_source = doc.value("dataset", std::string{});
    return r;
}

std::vector<ScannedRecord> read_records(const fs::path& file) {
    std::ifstream in(file);
    if (!in)
        throw IoError("cannot open record list " + file.string());
    std::vector<ScannedRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw ValidationError(file.string() + ":" + std::to_string(line_no) +
                                  ": not a JSON record");
        try {
            records.push_back(record_from_json(doc));
        } catch (const json::exception& e) {
            throw ValidationError(file.string() + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    return records;
}

ContentHash hash_file(const fs::path& path) {
    FileByteSource source(path);
    Sha1Digest digest;
    std::vector<std::uint8_t> buf(1 << 20);
    for (;;) {
        std::size_t got = source.read(buf);
        if (got == 0)
            break;
        digest.update(std::span<const std::uint8_t>(buf.data(), got));
    }
    return digest.finish();
}

std::int64_t mtime_seconds(const fs::path& path) {
    // No clock_cast on this toolchain; bridge the clocks via their nows.
    auto delta = fs::last_write_time(path) - fs::file_time_type::clock::now();
    auto sys = std::chrono::system_clock::now() +
               std::chrono::duration_cast<std::chrono::system_clock::duration>(delta);
    return std::chrono::duration_cast<std::chrono::seconds>(sys.time_since_epoch()).count();
}

std::map<std::string, fs::path> discover_chunks(const fs::path& dir) {
    std::map<std::string, fs::path> chunks;
    if (!fs::is_directory(dir))
        throw IoError("chunk directory " + dir.string() + " does not exist");
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        std::string name = entry.path().filename().string();
        if (name.size() <= kChunkFileSuffix.size() ||
            !name.ends_with(kChunkFileSuffix))
            continue;
        chunks[name.substr(0, name.size() - kChunkFileSuffix.size())] = entry.path();
    }
    return chunks;
}

std::optional<std::string> read_optional_doc(const fs::path& path) {
    if (path.empty())
        return std::nullopt;
    return read_file_text(path);
}

void split_location(const std::string& cell, std::string& chunk_id, std::string& path) {
    auto sep = cell.find(':');
    if (sep == std::string::npos) {
        chunk_id = cell;
        path.clear();
        return;
    }
    chunk_id = cell.substr(0, sep);
    path = cell.substr(sep + 1);
}

void emit(const std::string& text) {
    std::cout << text;
    if (text.empty() || text.back() != '\n')
        std::cout << '\n';
}

void write_or_emit(const fs::path& out, const std::string& text) {
    if (out.empty()) {
        emit(text);
        return;
    }
    write_file_text(out, text);
}

int run_scan(const fs::path& dir, const std::string& dataset) {
    if (!fs::is_directory(dir))
        throw IoError("scan root " + dir.string() + " is not a directory");
    std::vector<std::pair<std::string, fs::path>> found;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        found.emplace_back(fs::relative(entry.path(), dir).generic_string(), entry.path());
    }
    std::sort(found.begin(), found.end());

    for (const auto& [logical, path] : found) {
        ScannedRecord r;
        r.record.logical_path = logical;
        validate_logical_path(r.record.logical_path);
        r.record.size_bytes = fs::file_size(path);
        r.record.hash = hash_file(path);
        r.record.capture_time = mtime_seconds(path);
        r.record.dataset_source = dataset;
        r.source_path = fs::absolute(path);
        std::cout << record_to_json(r).dump() << '\n';
    }
    return 0;
}

// Folds the records' dataset labels into the metadata document so the
// dataset column survives packing. Explicit document entries win.
std::optional<std::string> merge_dataset_doc(const std::optional<std::string>& meta_doc,
                                             const std::vector<ScannedRecord>& records) {
    json doc = json::object();
    if (meta_doc) {
        doc = json::parse(*meta_doc, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw ValidationError("metadata document is not a JSON object");
    }
    bool changed = false;
    for (const auto& r : records) {
        if (r.record.dataset_source.empty())
            continue;
        json& slot = doc["files"][r.record.logical_path]["File"];
        if (!slot.contains("dataset")) {
            slot["dataset"] = r.record.dataset_source;
            changed = true;
        }
    }
    if (!changed)
        return meta_doc;
    return doc.dump();
}

int run_pack(const fs::path& records_file, const fs::path& meta_file,
             const fs::path& anno_file, const fs::path& out_dir,
             std::uint64_t chunk_target) {
    std::vector<ScannedRecord> records = read_records(records_file);
    std::optional<std::string> metadata_doc =
        merge_dataset_doc(read_optional_doc(meta_file), records);
    std::optional<std::string> annotations_doc = read_optional_doc(anno_file);
    fs::create_directories(out_dir);

    struct Group {
        std::vector<FileRecord> records;
        std::map<std::string, fs::path> sources;
    };
    std::map<PartitionId, Group> groups;
    for (auto& r : records) {
        Group& g = groups[partition_of(r.record.capture_time)];
        if (!g.sources.emplace(r.record.logical_path, r.source_path).second)
            throw ValidationError("duplicate logical path in record list: " +
                                  r.record.logical_path);
        g.records.push_back(r.record);
    }

    for (auto& [partition, group] : groups) {
        auto parts = plan_chunk_split(std::move(group.records), chunk_target);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            std::string chunk_id = chunk_id_for(partition, i, parts.size());
            fs::path chunk_path = out_dir / (chunk_id + std::string(kChunkFileSuffix));

            std::vector<SourcedFile> files;
            std::uint64_t data_bytes = 0;
            for (auto& rec : parts[i]) {
                data_bytes += rec.size_bytes;
                auto source =
                    std::make_unique<FileByteSource>(group.sources.at(rec.logical_path));
                files.push_back(SourcedFile{std::move(rec), std::move(source)});
            }
            FileByteSink sink(chunk_path);
            ChunkManifest manifest =
                pack_chunk(partition, std::move(files), metadata_doc, annotations_doc, sink);
            sink.close();
            std::cout << json{{"chunk", chunk_id},
                              {"file", chunk_path.string()},
                              {"files", manifest.entries.size()},
                              {"data_bytes", data_bytes}}
                             .dump()
                      << '\n';
        }
    }
    return 0;
}

int run_archive_write(const std::vector<fs::path>& inputs, const fs::path& records_file,
                      const fs::path& out_dir, const std::string& name,
                      std::uint64_t max_volume) {
    std::vector<SourcedFile> files;
    for (const auto& input : inputs) {
        FileRecord rec;
        rec.logical_path = input.generic_string();
        rec.size_bytes = fs::file_size(input);
        files.push_back(SourcedFile{std::move(rec), std::make_unique<FileByteSource>(input)});
    }
    if (!records_file.empty()) {
        for (auto& r : read_records(records_file))
            files.push_back(SourcedFile{std::move(r.record),
                                        std::make_unique<FileByteSource>(r.source_path)});
    }
    fs::create_directories(out_dir);
    VolumeSet set = write_volumes(std::move(files), max_volume, out_dir, name);
    emit(json{{"sidecar", (out_dir / (name + ".volmeta.json")).string()},
              {"volumes", set.volumes.size()},
              {"files", set.files.size()},
              {"stream_bytes", set.stream_bytes},
              {"stream_sha1", set.stream_sha1.hex}}
             .dump(2));
    return 0;
}

int run_archive_restore(const fs::path& sidecar, const fs::path& out_dir) {
    VolumeSet set = restore_volumes(sidecar, out_dir);
    emit(json{{"restored_files", set.files.size()}, {"stream_bytes", set.stream_bytes}}
             .dump(2));
    return 0;
}

int run_archive_verify(const fs::path& sidecar) {
    VolumeVerifyReport report = verify_volumes(sidecar);
    json findings = json::array();
    for (const auto& f : report.findings)
        findings.push_back(json{{"kind", std::string(to_string(f.kind))},
                                {"volume", f.index},
                                {"detail", f.detail}});
    emit(json{{"volumes_checked", report.volumes_checked},
              {"ok", report.ok()},
              {"findings", std::move(findings)}}
             .dump(2));
    return report.ok() ? 0 : 1;
}

int run_index_build(const std::vector<fs::path>& chunks, const fs::path& store_dir) {
    IndexStore store = IndexStore::open(store_dir);
    ChunkBuildReport report = build_from_chunks(store, chunks);
    emit(json{{"chunks_ingested", report.chunks_ingested},
              {"inserted", report.inserted},
              {"overwritten", report.overwritten},
              {"doc_entries_skipped", report.doc_entries_skipped}}
             .dump(2));
    return 0;
}

int run_index_ingest(const fs::path& triples_file, const fs::path& store_dir) {
    std::ifstream in(triples_file);
    if (!in)
        throw IoError("cannot open triple list " + triples_file.string());
    std::vector<Triple> triples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw ValidationError(triples_file.string() + ":" + std::to_string(line_no) +
                                  ": not a JSON triple");
        try {
            triples.push_back(Triple{ContentHash::from_hex(doc.at("row").get<std::string>()),
                                     parse_column(doc.at("column").get<std::string>()),
                                     doc.at("value").get<std::string>()});
        } catch (const json::exception& e) {
            throw ValidationError(triples_file.string() + ":" + std::to_string(line_no) +
                                  ": " + e.what());
        }
    }
    IndexStore store = IndexStore::open(store_dir);
    IngestReport report = store.ingest_triples(std::move(triples));
    emit(json{{"inserted", report.inserted}, {"overwritten", report.overwritten}}.dump(2));
    return 0;
}

int run_query(const std::string& expr, const fs::path& store_dir,
              const std::string& format) {
    Query query = parse_query(expr);
    IndexStore store = IndexStore::open(store_dir);
    ResultSet result = evaluate(query, store);

    if (format == "json") {
        json rows = json::array();
        for (const auto& row : result.rows) {
            json jr{{"hash", row.hash.hex}};
            if (row.chunk_location) {
                std::string chunk_id, path;
                split_location(*row.chunk_location, chunk_id, path);
                jr["chunk_id"] = chunk_id;
                jr["logical_path"] = path;
            } else {
                jr["chunk_id"] = nullptr;
                jr["logical_path"] = nullptr;
            }
            rows.push_back(std::move(jr));
        }
        emit(rows.dump(2));
    } else {
        for (const auto& row : result.rows) {
            std::string chunk_id, path;
            if (row.chunk_location)
                split_location(*row.chunk_location, chunk_id, path);
            std::cout << row.hash.hex << '\t' << chunk_id << '\t' << path << '\n';
        }
    }
    std::cerr << "matched " << result.rows.size() << " files; " << result.stats.leaves_evaluated
              << " leaves, " << result.stats.cells_touched << " cells scanned\n";
    return 0;
}

int run_plan(const fs::path& store_dir, int workers, const fs::path& out) {
    IndexStore store = IndexStore::open(store_dir);
    Listing listing = store.list_file_refs();
    ShardPlan plan = make_shards(std::move(listing.refs), workers, listing.epoch);
    write_or_emit(out, plan_to_json(plan, store.listings_performed()));
    return 0;
}

std::vector<std::string> read_labels(const fs::path& file) {
    std::vector<std::string> labels;
    if (file.empty())
        return {"score"};
    std::ifstream in(file);
    if (!in)
        throw IoError("cannot open label list " + file.string());
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!line.empty())
            labels.push_back(line);
    }
    if (labels.empty())
        throw ValidationError("label list " + file.string() + " is empty");
    return labels;
}

int run_infer(const fs::path& plan_file, const fs::path& chunks_dir,
              const std::string& classifier_kind, const fs::path& labels_file,
              const std::string& source, const fs::path& store_dir, int preprocess_side,
              const fs::path& out) {
    if (classifier_kind != "stub")
        throw ValidationError("unknown classifier '" + classifier_kind +
                              "' (only 'stub' is built in)");
    ShardPlan plan = plan_from_json_text(read_file_text(plan_file));
    StubClassifier classifier(source, read_labels(labels_file));
    IndexStore store = IndexStore::open(store_dir);

    InferenceOptions options;
    options.preprocess_side = preprocess_side;
    RunStats stats =
        run_inference(plan, discover_chunks(chunks_dir), classifier, store, options);

    json doc = json::parse(run_stats_to_json(stats, aggregate_stats(stats)));
    doc["listings_performed"] = store.listings_performed();
    write_or_emit(out, doc.dump(2) + "\n");

    std::uint64_t failures = 0;
    bool aborted = false;
    for (const auto& w : stats.per_worker) {
        failures += w.read_failures + w.classify_failures;
        aborted = aborted || w.ingest_aborted;
    }
    if (aborted)
        throw Error("one or more workers failed to ingest their annotations");
    if (failures > 0)
        std::cerr << failures << " files failed to classify; see the stats output\n";
    return 0;
}

int run_stats(const fs::path& stats_file) {
    RunStats stats = run_stats_from_json_text(read_file_text(stats_file));
    RunAggregate agg = aggregate_stats(stats);
    emit(json{{"workers", stats.per_worker.size()},
              {"mean_runtime_minutes", agg.mean_runtime_minutes},
              {"total_node_hours", agg.total_node_hours},
              {"mean_files_per_worker", agg.mean_files_per_worker},
              {"presented",
               json{{"mean_runtime_minutes", present_1dp(agg.mean_runtime_minutes)},
                    {"total_node_hours", present_1dp(agg.total_node_hours)},
                    {"mean_files_per_worker", present_1dp(agg.mean_files_per_worker)}}}}
             .dump(2));
    return 0;
}

int run_cost(const std::vector<fs::path>& layout_files) {
    std::vector<IoCostReport> reports;
    for (const auto& file : layout_files)
        reports.push_back(io_cost(layout_from_json(read_file_text(file))));

    if (reports.size() == 1) {
        emit(io_cost_to_json(reports[0]));
        return 0;
    }

    // Two layouts print side by side for eyeballing.
    auto cell = [](const std::string& s) {
        std::ostringstream os;
        os.width(18);
        os << std::left << s;
        return os.str();
    };
    std::cout << cell("");
    for (const auto& file : layout_files)
        std::cout << cell(file.filename().string());
    std::cout << '\n';
    auto row = [&](const std::string& label, auto getter) {
        std::cout << cell(label);
        for (const auto& r : reports)
            std::cout << cell(getter(r));
        std::cout << '\n';
    };
    row("metadata_ops", [](const IoCostReport& r) { return std::to_string(r.metadata_ops); });
    row("payload_bytes", [](const IoCostReport& r) { return std::to_string(r.payload_bytes); });
    row("allocated_bytes",
        [](const IoCostReport& r) { return std::to_string(r.allocated_bytes); });
    row("overhead_ratio",
        [](const IoCostReport& r) { return format_decimal(r.overhead_ratio); });
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"organize, archive, index and query large imagery corpora"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config");
    app.require_subcommand(1);

    int exit_code = 0;

    // scan
    auto* scan = app.add_subcommand("scan", "hash a directory tree into JSON file records");
    fs::path scan_dir;
    std::string scan_dataset = "scan";
    scan->add_option("dir", scan_dir, "directory to scan")->required();
    scan->add_option("--dataset", scan_dataset, "dataset source label for every record");
    scan->callback([&] { exit_code = run_scan(scan_dir, scan_dataset); });

    // pack
    auto* pack = app.add_subcommand("pack", "pack scanned records into chunk containers");
    fs::path pack_records, pack_meta, pack_anno, pack_out;
    std::uint64_t pack_target = kDefaultChunkTargetBytes;
    pack->add_option("records", pack_records, "record list from scan (JSON lines)")
        ->required();
    pack->add_option("--meta", pack_meta, "metadata document attached to every chunk");
    pack->add_option("--anno", pack_anno, "annotation document attached to every chunk");
    pack->add_option("--out", pack_out, "output directory for chunks")->required();
    pack->add_option("--chunk-target", pack_target, "target data bytes per chunk")
        ->check(CLI::PositiveNumber);
    pack->callback(
        [&] { exit_code = run_pack(pack_records, pack_meta, pack_anno, pack_out, pack_target); });

    // archive write | restore | verify
    auto* archive = app.add_subcommand("archive", "split-volume raw archival");
    archive->require_subcommand(1);

    auto* aw = archive->add_subcommand("write", "write files into numbered volumes");
    std::vector<fs::path> aw_inputs;
    fs::path aw_records, aw_out;
    std::string aw_name = "archive";
    std::uint64_t aw_max = kDefaultVolumeMaxBytes;
    aw->add_option("files", aw_inputs, "files to archive (relative paths)");
    aw->add_option("--records", aw_records, "record list from scan (JSON lines)");
    aw->add_option("--out", aw_out, "output directory for volumes")->required();
    aw->add_option("--name", aw_name, "archive name (volume file prefix)");
    aw->add_option("--max-volume", aw_max, "maximum payload bytes per volume")
        ->check(CLI::PositiveNumber);
    aw->callback(
        [&] { exit_code = run_archive_write(aw_inputs, aw_records, aw_out, aw_name, aw_max); });

    auto* ar = archive->add_subcommand("restore", "rebuild archived files from volumes");
    fs::path ar_sidecar, ar_out;
    ar->add_option("sidecar", ar_sidecar, "volume sidecar (.volmeta.json)")->required();
    ar->add_option("--out", ar_out, "directory to restore into")->required();
    ar->callback([&] { exit_code = run_archive_restore(ar_sidecar, ar_out); });

    auto* av = archive->add_subcommand("verify", "check volumes against their sidecar");
    fs::path av_sidecar;
    av->add_option("sidecar", av_sidecar, "volume sidecar (.volmeta.json)")->required();
    av->callback([&] { exit_code = run_archive_verify(av_sidecar); });

    // index build | ingest
    auto* index = app.add_subcommand("index", "build and extend the associative index");
    index->require_subcommand(1);

    auto* ib = index->add_subcommand("build", "index chunk manifests and their documents");
    std::vector<fs::path> ib_chunks;
    fs::path ib_store;
    ib->add_option("chunks", ib_chunks, "chunk files to ingest")->required();
    ib->add_option("--store", ib_store, "index store directory")
        ->envname("MEDIAVAULT_STORE")
        ->required();
    ib->callback([&] { exit_code = run_index_build(ib_chunks, ib_store); });

    auto* ii = index->add_subcommand("ingest", "ingest raw triples (JSON lines)");
    fs::path ii_triples, ii_store;
    ii->add_option("triples", ii_triples, "triple list: {row, column, value} per line")
        ->required();
    ii->add_option("--store", ii_store, "index store directory")
        ->envname("MEDIAVAULT_STORE")
        ->required();
    ii->callback([&] { exit_code = run_index_ingest(ii_triples, ii_store); });

    // query
    auto* query = app.add_subcommand("query", "boolean query over the index");
    std::string q_expr, q_format = "tsv";
    fs::path q_store;
    query->add_option("expr", q_expr, "query expression")->required();
    query->add_option("--store", q_store, "index store directory")
        ->envname("MEDIAVAULT_STORE")
        ->required();
    query->add_option("--format", q_format, "output format")
        ->check(CLI::IsMember({"tsv", "json"}));
    query->callback([&] { exit_code = run_query(q_expr, q_store, q_format); });

    // plan
    auto* plan = app.add_subcommand("plan", "shard the indexed files for an inference run");
    fs::path p_store, p_out;
    int p_workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    plan->add_option("--workers", p_workers, "number of inference workers")
        ->check(CLI::PositiveNumber);
    plan->add_option("--store", p_store, "index store directory")
        ->envname("MEDIAVAULT_STORE")
        ->required();
    plan->add_option("--out", p_out, "plan file to write (default: standard output)");
    plan->callback([&] { exit_code = run_plan(p_store, p_workers, p_out); });

    // infer
    auto* infer = app.add_subcommand("infer", "run a classifier pass over a shard plan");
    fs::path if_plan, if_chunks, if_labels, if_store, if_out;
    std::string if_classifier = "stub", if_source = "stub-v1";
    int if_side = 224;
    infer->add_option("--plan", if_plan, "plan file from 'plan'")->required();
    infer->add_option("--chunks", if_chunks, "directory holding the chunk files")->required();
    infer->add_option("--classifier", if_classifier, "classifier backend");
    infer->add_option("--labels", if_labels, "label list file, one label per line");
    infer->add_option("--source", if_source, "annotation source name");
    infer->add_option("--store", if_store, "index store directory")
        ->envname("MEDIAVAULT_STORE")
        ->required();
    infer->add_option("--preprocess-side", if_side, "square preprocess size recorded in stats")
        ->check(CLI::PositiveNumber);
    infer->add_option("--out", if_out, "stats file to write (default: standard output)");
    infer->callback([&] {
        exit_code = run_infer(if_plan, if_chunks, if_classifier, if_labels, if_source,
                              if_store, if_side, if_out);
    });

    // stats
    auto* stats = app.add_subcommand("stats", "aggregate a run stats file");
    fs::path st_file;
    stats->add_option("run", st_file, "stats file from 'infer'")->required();
    stats->callback([&] { exit_code = run_stats(st_file); });

    // cost
    auto* cost = app.add_subcommand("cost", "filesystem cost of a storage layout");
    std::vector<fs::path> c_layouts;
    cost->add_option("--layout", c_layouts, "layout description (JSON); twice to compare")
        ->required()
        ->expected(1, 2);
    cost->callback([&] { exit_code = run_cost(c_layouts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const QuerySyntaxError& e) {
        std::cerr << "mediavault: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mediavault: " << e.what() << '\n';
        return 1;
    }
    return exit_code;
}
