#include "doctest.h"

#include <map>
#include <random>
#include <set>
#include <thread>

#include "json.hpp"
#include "mediavault/container.hpp"
#include "mediavault/index.hpp"
#include "testutil.hpp"

using namespace mediavault;

namespace {

ContentHash random_hash(std::mt19937_64& rng) {
    static const char hex[] = "0123456789abcdef";
    std::string s(40, '0');
    for (auto& c : s)
        c = hex[rng() % 16];
    return ContentHash::from_hex(s);
}

ColumnKey meta(std::string source, std::string field) {
    return ColumnKey::make(ColumnKind::Metadata, std::move(source), std::move(field));
}

Triple triple(const ContentHash& row, const ColumnKey& column, std::string value) {
    return Triple{row, column, std::move(value)};
}

std::map<std::string, std::string> snapshot(const IndexStore& store) {
    std::map<std::string, std::string> out;
    store.for_each_cell([&](const ContentHash& r, const ColumnKey& c, const std::string& v) {
        out[r.hex + "|" + render_column(c)] = v;
    });
    return out;
}

// Length-prefixed field stream used by the persisted tables.
struct FieldReader {
    std::vector<std::uint8_t> data;
    std::size_t pos = 0;

    bool done() const { return pos >= data.size(); }

    std::string next() {
        REQUIRE(pos + 4 <= data.size());
        std::uint32_t len = 0;
        for (int i = 3; i >= 0; --i)
            len = (len << 8) | data[pos + static_cast<std::size_t>(i)];
        pos += 4;
        REQUIRE(pos + len <= data.size());
        std::string out(data.begin() + static_cast<std::ptrdiff_t>(pos),
                        data.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        return out;
    }

    std::uint64_t next_u64() {
        std::string f = next();
        REQUIRE(f.size() == 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(f[static_cast<std::size_t>(i)]);
        return v;
    }
};

const std::int64_t kJuly2019 = parse_timestamp("2019-07-10T08:30:00Z");
const std::int64_t kAug2019 = parse_timestamp("2019-08-02T20:00:00Z");

std::filesystem::path write_chunk(const std::filesystem::path& path, const PartitionId& partition,
                                  std::int64_t capture,
                                  const std::vector<std::pair<std::string, std::string>>& files,
                                  const std::optional<std::string>& metadata_doc = std::nullopt,
                                  const std::optional<std::string>& annotations_doc = std::nullopt) {
    std::vector<SourcedFile> sourced;
    for (const auto& [logical, content] : files) {
        FileRecord rec;
        rec.logical_path = logical;
        rec.size_bytes = content.size();
        rec.capture_time = capture;
        rec.dataset_source = "unit";
        sourced.push_back(SourcedFile{std::move(rec),
                                      std::make_unique<MemoryByteSource>(std::string_view(content))});
    }
    FileByteSink sink(path);
    pack_chunk(partition, std::move(sourced), metadata_doc, annotations_doc, sink);
    sink.close();
    return path;
}

} // namespace

TEST_CASE("ingested triples come back through row and column queries") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0x1d1);
    ContentHash r1 = random_hash(rng);
    ContentHash r2 = random_hash(rng);

    IngestReport report = store.ingest_triples({
        triple(r1, meta("EXIF", "Make"), "Acme"),
        triple(r1, meta("EXIF", "Model"), "Z9"),
        triple(r2, meta("EXIF", "Make"), "Bolt"),
    });
    CHECK(report.inserted == 3);
    CHECK(report.overwritten == 0);
    CHECK(store.triple_count() == 3);
    CHECK(store.row_count() == 2);

    auto row = store.row_query(r1);
    REQUIRE(row.size() == 2);
    CHECK(row[0].first == meta("EXIF", "Make"));
    CHECK(row[0].second == "Acme");
    CHECK(row[1].first == meta("EXIF", "Model"));
    CHECK(row[1].second == "Z9");
    CHECK(store.row_query(random_hash(rng)).empty());

    auto col = store.column_query(meta("EXIF", "Make"));
    REQUIRE(col.matches.size() == 2);
    CHECK(col.cells_scanned == 2);
    // Matches come back ordered by row hash.
    CHECK(col.matches[0].row.hex < col.matches[1].row.hex);

    CHECK(store.get_cell(r1, meta("EXIF", "Model")) == std::string("Z9"));
    CHECK(store.get_cell(r2, meta("EXIF", "Model")) == std::nullopt);
    CHECK(store.column_query(meta("EXIF", "Absent")).matches.empty());
    CHECK(store.degree(meta("EXIF", "Absent")) == 0);
}

TEST_CASE("degree counts rows carrying a column, not writes to it") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0xde6);
    ContentHash a = random_hash(rng);
    ContentHash b = random_hash(rng);
    ContentHash c = random_hash(rng);
    ColumnKey make = meta("EXIF", "Make");

    store.ingest_triples({
        triple(a, make, "x"),
        triple(b, make, "y"),
        triple(c, make, "z"),
        triple(a, meta("EXIF", "Model"), "m"),
    });
    CHECK(store.degree(make) == 3);
    CHECK(store.degree(meta("EXIF", "Model")) == 1);

    // Rewriting existing cells leaves every degree alone.
    IngestReport again = store.ingest_triples({
        triple(a, make, "x2"),
        triple(b, make, "y2"),
    });
    CHECK(again.inserted == 0);
    CHECK(again.overwritten == 2);
    CHECK(store.degree(make) == 3);
    CHECK(store.triple_count() == 4);
}

TEST_CASE("the last write to a cell wins, within and across batches") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0x1u);
    ContentHash r = random_hash(rng);
    ColumnKey col = meta("Camera", "Mode");

    IngestReport first = store.ingest_triples({
        triple(r, col, "day"),
        triple(r, col, "night"),
    });
    CHECK(first.inserted == 1);
    CHECK(first.overwritten == 1);
    CHECK(store.get_cell(r, col) == std::string("night"));
    CHECK(store.triple_count() == 1);

    store.ingest_triples({triple(r, col, "dusk")});
    CHECK(store.get_cell(r, col) == std::string("dusk"));
    auto cq = store.column_query(col);
    REQUIRE(cq.matches.size() == 1);
    CHECK(cq.matches[0].value == "dusk");
}

TEST_CASE("value predicates filter cells and count unparseable numerics") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0x9f);
    ContentHash r1 = random_hash(rng);
    ContentHash r2 = random_hash(rng);
    ContentHash r3 = random_hash(rng);
    ColumnKey score = ColumnKey::make(ColumnKind::AnnotationMachine, "Detector", "score");

    store.ingest_triples({
        triple(r1, score, "0.25"),
        triple(r2, score, "0.75"),
        triple(r3, score, "banana"),
    });

    auto all = store.column_query(score);
    CHECK(all.matches.size() == 3);
    CHECK(all.cells_scanned == 3);
    CHECK(all.numeric_skips == 0);

    auto ge = store.column_query(score, ValuePredicate::numeric(CmpOp::Ge, 0.5));
    REQUIRE(ge.matches.size() == 1);
    CHECK(ge.matches[0].value == "0.75");
    CHECK(ge.cells_scanned == 3);
    CHECK(ge.numeric_skips == 1);

    auto lt = store.column_query(score, ValuePredicate::numeric(CmpOp::Lt, 0.5));
    CHECK(lt.matches.size() == 1);
    auto le = store.column_query(score, ValuePredicate::numeric(CmpOp::Le, 0.25));
    CHECK(le.matches.size() == 1);
    auto gt = store.column_query(score, ValuePredicate::numeric(CmpOp::Gt, 0.75));
    CHECK(gt.matches.empty());
    CHECK(gt.numeric_skips == 1);
    auto eq = store.column_query(score, ValuePredicate::numeric(CmpOp::Eq, 0.75));
    CHECK(eq.matches.size() == 1);

    auto exact = store.column_query(score, ValuePredicate::equals("banana"));
    REQUIRE(exact.matches.size() == 1);
    CHECK(exact.matches[0].row == r3);
    CHECK(exact.numeric_skips == 0);
}

TEST_CASE("a source prefix query lists that source's columns with degrees") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0x11);
    ContentHash a = random_hash(rng);
    ContentHash b = random_hash(rng);

    store.ingest_triples({
        triple(a, meta("EXIF", "Make"), "x"),
        triple(b, meta("EXIF", "Make"), "y"),
        triple(a, meta("EXIF", "Model"), "m"),
        triple(a, meta("EXIG", "Other"), "o"),
        triple(a, meta("EXI", "Other"), "o"),
        triple(a, ColumnKey::make(ColumnKind::AnnotationMachine, "EXIF", "score"), "1"),
    });

    auto cols = store.column_prefix_query(ColumnKind::Metadata, "EXIF");
    REQUIRE(cols.size() == 2);
    CHECK(cols[0].first == meta("EXIF", "Make"));
    CHECK(cols[0].second == 2);
    CHECK(cols[1].first == meta("EXIF", "Model"));
    CHECK(cols[1].second == 1);

    CHECK(store.column_prefix_query(ColumnKind::Metadata, "Nothing").empty());
    auto ann = store.column_prefix_query(ColumnKind::AnnotationMachine, "EXIF");
    REQUIRE(ann.size() == 1);
    CHECK(ann[0].first.field == "score");
}

TEST_CASE("transpose and degree stay consistent over a random workload") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0xab5e);

    std::vector<ContentHash> rows;
    for (int i = 0; i < 50; ++i)
        rows.push_back(random_hash(rng));
    std::vector<ColumnKey> columns;
    for (int i = 0; i < 10; ++i) {
        columns.push_back(meta("S" + std::to_string(i % 3), "f" + std::to_string(i)));
        columns.push_back(
            ColumnKey::make(ColumnKind::AnnotationMachine, "M" + std::to_string(i % 2),
                            "f" + std::to_string(i)));
        columns.push_back(
            ColumnKey::make(ColumnKind::AnnotationHuman, "H", "f" + std::to_string(i)));
    }

    std::map<std::pair<std::string, std::string>, std::string> oracle;
    std::uint64_t expected_inserted = 0;
    std::uint64_t expected_overwritten = 0;
    std::uint64_t got_inserted = 0;
    std::uint64_t got_overwritten = 0;

    for (int batch = 0; batch < 20; ++batch) {
        std::vector<Triple> triples;
        std::size_t batch_size = std::uniform_int_distribution<std::size_t>(1, 100)(rng);
        for (std::size_t i = 0; i < batch_size; ++i) {
            const ContentHash& row = rows[rng() % rows.size()];
            const ColumnKey& column = columns[rng() % columns.size()];
            std::string value = "v" + std::to_string(rng() % 1000);
            auto key = std::make_pair(row.hex, render_column(column));
            if (oracle.count(key))
                ++expected_overwritten;
            else
                ++expected_inserted;
            oracle[key] = value;
            triples.push_back(triple(row, column, std::move(value)));
        }
        IngestReport r = store.ingest_triples(std::move(triples));
        got_inserted += r.inserted;
        got_overwritten += r.overwritten;
    }

    CHECK(got_inserted == expected_inserted);
    CHECK(got_overwritten == expected_overwritten);
    CHECK(store.triple_count() == oracle.size());

    // The main table holds exactly the oracle's cells.
    CHECK(snapshot(store) == [&] {
        std::map<std::string, std::string> flat;
        for (const auto& [key, value] : oracle)
            flat[key.first + "|" + key.second] = value;
        return flat;
    }());

    // Per column, the transpose agrees cell for cell and the degree equals
    // the number of distinct rows seen.
    for (const ColumnKey& column : columns) {
        std::map<std::string, std::string> expect;
        for (const auto& [key, value] : oracle) {
            if (key.second == render_column(column))
                expect[key.first] = value;
        }
        auto result = store.column_query(column);
        CHECK(result.cells_scanned == expect.size());
        REQUIRE(result.matches.size() == expect.size());
        auto it = expect.begin();
        for (std::size_t i = 0; i < result.matches.size(); ++i, ++it) {
            CHECK(result.matches[i].row.hex == it->first);
            CHECK(result.matches[i].value == it->second);
        }
        CHECK(store.degree(column) == expect.size());
    }

    // Row queries match a by-row regrouping of the same oracle.
    for (const ContentHash& row : rows) {
        std::map<std::string, std::string> expect;
        for (const auto& [key, value] : oracle) {
            if (key.first == row.hex)
                expect[key.second] = value;
        }
        auto got = store.row_query(row);
        REQUIRE(got.size() == expect.size());
        for (const auto& [column, value] : got) {
            auto eit = expect.find(render_column(column));
            REQUIRE(eit != expect.end());
            CHECK(eit->second == value);
        }
    }
}

TEST_CASE("a batch with any invalid triple changes nothing") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0xbad);
    ContentHash good_row = random_hash(rng);

    store.ingest_triples({triple(good_row, meta("A", "b"), "keep")});
    REQUIRE(store.triple_count() == 1);

    {
        Triple bad = triple(good_row, meta("A", "c"), "x");
        bad.row.hex = "not-a-hash";
        std::vector<Triple> batch;
        batch.push_back(triple(good_row, meta("A", "d"), "y"));
        batch.push_back(std::move(bad));
        CHECK_THROWS_AS(store.ingest_triples(std::move(batch)), ValidationError);
    }
    {
        Triple bad = triple(good_row, meta("A", "c"), "x");
        bad.column.source = "pi|pe";
        std::vector<Triple> batch;
        batch.push_back(std::move(bad));
        CHECK_THROWS_AS(store.ingest_triples(std::move(batch)), ValidationError);
    }
    {
        std::vector<Triple> batch;
        batch.push_back(triple(good_row, meta("A", "c"), std::string("nul\0led", 7)));
        CHECK_THROWS_AS(store.ingest_triples(std::move(batch)), ValidationError);
    }
    {
        Triple bad = triple(good_row, meta("A", "c"), "x");
        bad.column.field = "";
        std::vector<Triple> batch;
        batch.push_back(std::move(bad));
        CHECK_THROWS_AS(store.ingest_triples(std::move(batch)), ValidationError);
    }

    CHECK(store.triple_count() == 1);
    CHECK(store.get_cell(good_row, meta("A", "d")) == std::nullopt);
    CHECK(store.get_cell(good_row, meta("A", "b")) == std::string("keep"));

    IngestReport empty = store.ingest_triples({});
    CHECK(empty.inserted == 0);
    CHECK(empty.overwritten == 0);
}

TEST_CASE("a persisted store reloads bit for bit") {
    testutil::TempDir dir("idx");
    std::mt19937_64 rng(0x9a9a);

    std::vector<Triple> batch;
    for (int i = 0; i < 40; ++i) {
        batch.push_back(triple(random_hash(rng), meta("S" + std::to_string(i % 4), "f"),
                               "v" + std::to_string(i)));
    }

    std::map<std::string, std::string> before;
    std::uint64_t count_before = 0;
    {
        IndexStore store = IndexStore::open(dir.path());
        CHECK(store.triple_count() == 0);
        store.ingest_triples(batch);
        before = snapshot(store);
        count_before = store.triple_count();
    }

    for (const char* name : {"main.idx", "transpose.idx", "degree.idx", "index.meta.json"})
        CHECK(std::filesystem::exists(dir / name));

    IndexStore reopened = IndexStore::open(dir.path());
    CHECK(reopened.triple_count() == count_before);
    CHECK(snapshot(reopened) == before);
    for (int i = 0; i < 4; ++i) {
        ColumnKey col = meta("S" + std::to_string(i), "f");
        CHECK(reopened.degree(col) > 0);
        CHECK(reopened.column_query(col).matches.size() == reopened.degree(col));
    }

    auto meta_doc = nlohmann::json::parse(read_file_text(dir / "index.meta.json"));
    CHECK(meta_doc["format_version"] == 1);
    CHECK(meta_doc["triple_count"] == count_before);
    CHECK_NOTHROW(parse_timestamp(meta_doc["build_time"].get<std::string>()));
}

TEST_CASE("the persisted tables are flat length-prefixed field streams") {
    testutil::TempDir dir("idxfmt");
    std::mt19937_64 rng(0xf0f0);

    IndexStore store = IndexStore::open(dir.path());
    std::vector<Triple> batch;
    for (int i = 0; i < 12; ++i)
        batch.push_back(triple(random_hash(rng), meta("Cam", "f" + std::to_string(i % 5)),
                               "value-" + std::to_string(i)));
    store.ingest_triples(batch);

    std::map<std::string, std::string> from_main;
    {
        FieldReader reader{read_file_bytes(dir / "main.idx")};
        while (!reader.done()) {
            std::string row = reader.next();
            std::string column = reader.next();
            std::string value = reader.next();
            CHECK(row.size() == 40);
            CHECK_NOTHROW(parse_column(column));
            from_main[row + "|" + column] = value;
        }
    }
    CHECK(from_main == snapshot(store));

    std::map<std::string, std::string> from_transpose;
    {
        FieldReader reader{read_file_bytes(dir / "transpose.idx")};
        while (!reader.done()) {
            std::string column = reader.next();
            std::string row = reader.next();
            std::string value = reader.next();
            from_transpose[row + "|" + column] = value;
        }
    }
    CHECK(from_transpose == from_main);

    {
        FieldReader reader{read_file_bytes(dir / "degree.idx")};
        std::size_t entries = 0;
        while (!reader.done()) {
            ColumnKey column = parse_column(reader.next());
            CHECK(reader.next_u64() == store.degree(column));
            ++entries;
        }
        CHECK(entries == 5);
    }
}

TEST_CASE("a failed persist rolls the whole batch back") {
    testutil::TempDir dir("idxroll");
    std::mt19937_64 rng(0x0bad);
    IndexStore store = IndexStore::open(dir.path());

    ContentHash keep = random_hash(rng);
    store.ingest_triples({triple(keep, meta("A", "b"), "v1")});
    auto before = snapshot(store);

    // Renaming the staged table onto a non-empty directory cannot succeed,
    // so the persist step fails after the in-memory write happened.
    std::filesystem::remove(dir / "main.idx");
    std::filesystem::create_directory(dir / "main.idx");
    write_file_text(dir / "main.idx" / "occupied", "x");

    ContentHash incoming = random_hash(rng);
    std::vector<Triple> batch{
        triple(incoming, meta("A", "b"), "v2"),
        triple(keep, meta("A", "b"), "changed"),
    };
    CHECK_THROWS(store.ingest_triples(std::move(batch)));

    CHECK(snapshot(store) == before);
    CHECK(store.triple_count() == 1);
    CHECK(store.get_cell(keep, meta("A", "b")) == std::string("v1"));
    CHECK(store.get_cell(incoming, meta("A", "b")) == std::nullopt);
    CHECK(store.degree(meta("A", "b")) == 1);
    CHECK(store.row_count() == 1);

    // Once the obstruction is gone the same batch lands and persists.
    std::filesystem::remove_all(dir / "main.idx");
    store.ingest_triples({
        triple(incoming, meta("A", "b"), "v2"),
        triple(keep, meta("A", "b"), "changed"),
    });
    IndexStore reopened = IndexStore::open(dir.path());
    CHECK(reopened.triple_count() == 2);
    CHECK(reopened.get_cell(keep, meta("A", "b")) == std::string("changed"));
    CHECK(reopened.get_cell(incoming, meta("A", "b")) == std::string("v2"));
}

TEST_CASE("file listings require both a path and a chunk location") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0x115);
    ContentHash full = random_hash(rng);
    ContentHash path_only = random_hash(rng);
    ContentHash chunk_only = random_hash(rng);
    ContentHash malformed = random_hash(rng);

    store.ingest_triples({
        triple(full, filepath_column(), "a/b.jpg"),
        triple(full, chunk_column(), "2019-07:a/b.jpg"),
        triple(path_only, filepath_column(), "c.jpg"),
        triple(chunk_only, chunk_column(), "2019-07:d.jpg"),
        triple(malformed, filepath_column(), "e.jpg"),
        triple(malformed, chunk_column(), "no-separator"),
    });

    CHECK(store.listings_performed() == 0);
    Listing listing = store.list_file_refs();
    CHECK(store.listings_performed() == 1);
    REQUIRE(listing.refs.size() == 1);
    CHECK(listing.refs[0].hash == full);
    CHECK(listing.refs[0].chunk_id == "2019-07");
    CHECK(listing.refs[0].logical_path == "a/b.jpg");
    CHECK(!listing.epoch.empty());

    Listing second = store.list_file_refs();
    CHECK(store.listings_performed() == 2);
    CHECK(second.epoch != listing.epoch);
}

TEST_CASE("file listings come back ordered by hash") {
    IndexStore store = IndexStore::in_memory();
    std::mt19937_64 rng(0x0dd);
    std::vector<Triple> batch;
    for (int i = 0; i < 30; ++i) {
        ContentHash h = random_hash(rng);
        std::string path = "f" + std::to_string(i) + ".jpg";
        batch.push_back(triple(h, filepath_column(), path));
        batch.push_back(triple(h, chunk_column(), "2020-01:" + path));
    }
    store.ingest_triples(std::move(batch));

    Listing listing = store.list_file_refs();
    REQUIRE(listing.refs.size() == 30);
    for (std::size_t i = 1; i < listing.refs.size(); ++i)
        CHECK(listing.refs[i - 1].hash.hex < listing.refs[i].hash.hex);
}

TEST_CASE("chunk manifests index files under the well-known columns") {
    testutil::TempDir dir("build");
    std::string body_a = "the bytes of a";
    std::string body_b = "b's bytes";
    write_chunk(dir / "2019-07.chunk", PartitionId{2019, 7}, kJuly2019,
                {{"cam/a.jpg", body_a}, {"cam/b.jpg", body_b}});

    IndexStore store = IndexStore::in_memory();
    ChunkBuildReport report = build_from_chunks(store, {dir / "2019-07.chunk"});
    CHECK(report.chunks_ingested == 1);
    CHECK(report.inserted == 6);
    CHECK(report.overwritten == 0);
    CHECK(report.doc_entries_skipped == 0);

    ContentHash ha = content_hash(body_a);
    CHECK(store.get_cell(ha, filepath_column()) == std::string("cam/a.jpg"));
    CHECK(store.get_cell(ha, filesize_column()) == std::to_string(body_a.size()));
    CHECK(store.get_cell(ha, chunk_column()) == std::string("2019-07:cam/a.jpg"));
    ContentHash hb = content_hash(body_b);
    CHECK(store.get_cell(hb, chunk_column()) == std::string("2019-07:cam/b.jpg"));

    // Rebuilding is idempotent: every cell is rewritten, nothing is added.
    ChunkBuildReport again = build_from_chunks(store, {dir / "2019-07.chunk"});
    CHECK(again.inserted == 0);
    CHECK(again.overwritten == 6);
    CHECK(store.triple_count() == 6);
}

TEST_CASE("sidecar documents become metadata and annotation cells") {
    testutil::TempDir dir("docs");
    std::string body_a = "aaaa";
    std::string body_b = "bbbbbb";

    std::string metadata_doc = R"({
        "defaults": {"Camera": {"make": "Acme", "mount": "roof"}},
        "files": {
            "a.jpg": {"Camera": {"make": "Zenith"}},
            "ghost.jpg": {"Camera": {"make": "Nowhere"}}
        }
    })";
    std::string annotations_doc = R"({
        "files": {
            "a.jpg": {"machine": {"Detector": {"score": 0.75, "count": 3, "tags": ["x","y"]}}},
            "b.jpg": {"human": {"Review": {"status": "ok"}}},
            "ghost2.jpg": {"machine": {"Detector": {"score": 0.1}}}
        }
    })";
    write_chunk(dir / "2019-07.chunk", PartitionId{2019, 7}, kJuly2019,
                {{"a.jpg", body_a}, {"b.jpg", body_b}}, metadata_doc, annotations_doc);
    write_chunk(dir / "2019-08.chunk", PartitionId{2019, 8}, kAug2019, {{"c.jpg", "cc"}});

    IndexStore store = IndexStore::in_memory();
    ChunkBuildReport report =
        build_from_chunks(store, {dir / "2019-07.chunk", dir / "2019-08.chunk"});
    CHECK(report.chunks_ingested == 2);
    CHECK(report.doc_entries_skipped == 2);

    ContentHash ha = content_hash(body_a);
    ContentHash hb = content_hash(body_b);

    // Defaults reach every file; the per-file entry overrides the default.
    CHECK(store.get_cell(ha, meta("Camera", "make")) == std::string("Zenith"));
    CHECK(store.get_cell(hb, meta("Camera", "make")) == std::string("Acme"));
    CHECK(store.get_cell(ha, meta("Camera", "mount")) == std::string("roof"));
    CHECK(store.get_cell(hb, meta("Camera", "mount")) == std::string("roof"));

    ColumnKey score = ColumnKey::make(ColumnKind::AnnotationMachine, "Detector", "score");
    ColumnKey count = ColumnKey::make(ColumnKind::AnnotationMachine, "Detector", "count");
    ColumnKey tags = ColumnKey::make(ColumnKind::AnnotationMachine, "Detector", "tags");
    ColumnKey status = ColumnKey::make(ColumnKind::AnnotationHuman, "Review", "status");
    CHECK(store.get_cell(ha, score) == std::string("0.75"));
    CHECK(store.get_cell(ha, count) == std::string("3"));
    CHECK(store.get_cell(ha, tags) == std::string(R"(["x","y"])"));
    CHECK(store.get_cell(hb, status) == std::string("ok"));
    CHECK(store.get_cell(hb, score) == std::nullopt);

    // The ghost rows never appear anywhere.
    CHECK(store.column_query(meta("Camera", "make")).matches.size() == 2);
    CHECK(store.column_query(score).matches.size() == 1);
}

TEST_CASE("split partitions carry their documents in every part") {
    testutil::TempDir dir("parts");
    std::string body_a = "a-part-one";
    std::string body_b = "b-part-two";
    std::string doc = R"({
        "files": {
            "a.jpg": {"Site": {"name": "north"}},
            "b.jpg": {"Site": {"name": "south"}}
        }
    })";
    write_chunk(dir / "2019-07.part1.chunk", PartitionId{2019, 7}, kJuly2019,
                {{"a.jpg", body_a}}, doc);
    write_chunk(dir / "2019-07.part2.chunk", PartitionId{2019, 7}, kJuly2019,
                {{"b.jpg", body_b}}, doc);

    IndexStore store = IndexStore::in_memory();
    ChunkBuildReport report = build_from_chunks(
        store, {dir / "2019-07.part1.chunk", dir / "2019-07.part2.chunk"});
    CHECK(report.doc_entries_skipped == 2);

    ContentHash ha = content_hash(body_a);
    ContentHash hb = content_hash(body_b);
    CHECK(store.get_cell(ha, chunk_column()) == std::string("2019-07.part1:a.jpg"));
    CHECK(store.get_cell(hb, chunk_column()) == std::string("2019-07.part2:b.jpg"));
    CHECK(store.get_cell(ha, meta("Site", "name")) == std::string("north"));
    CHECK(store.get_cell(hb, meta("Site", "name")) == std::string("south"));
}

TEST_CASE("malformed sidecar documents fail with their position") {
    testutil::TempDir dir("baddocs");

    write_chunk(dir / "broken.chunk", PartitionId{2019, 7}, kJuly2019, {{"a.jpg", "aa"}},
                std::string("{\"files\": {oops"));
    IndexStore store = IndexStore::in_memory();
    try {
        build_from_chunks(store, {dir / "broken.chunk"});
        FAIL("expected DocumentParseError");
    } catch (const DocumentParseError& e) {
        CHECK(e.doc_path() == "broken.chunk:_metadata.json");
        CHECK(e.byte_offset() > 0);
    }
    CHECK(store.triple_count() == 0);

    write_chunk(dir / "type.chunk", PartitionId{2019, 7}, kJuly2019, {{"a.jpg", "aa"}},
                std::string(R"({"files": {"a.jpg": {"Camera": {"make": 7}}}})"));
    CHECK_THROWS_AS(build_from_chunks(store, {dir / "type.chunk"}), DocumentParseError);

    write_chunk(dir / "kind.chunk", PartitionId{2019, 7}, kJuly2019, {{"a.jpg", "aa"}},
                std::nullopt,
                std::string(R"({"files": {"a.jpg": {"robot": {"D": {"s": "1"}}}}})"));
    CHECK_THROWS_AS(build_from_chunks(store, {dir / "kind.chunk"}), DocumentParseError);

    write_chunk(dir / "annbool.chunk", PartitionId{2019, 7}, kJuly2019, {{"a.jpg", "aa"}},
                std::nullopt,
                std::string(R"({"files": {"a.jpg": {"machine": {"D": {"s": true}}}}})"));
    CHECK_THROWS_AS(build_from_chunks(store, {dir / "annbool.chunk"}), DocumentParseError);
}

TEST_CASE("an indexed size that contradicts a chunk stops the build") {
    testutil::TempDir dir("collide");
    std::string body = "hello";
    write_chunk(dir / "2019-07.chunk", PartitionId{2019, 7}, kJuly2019, {{"a.bin", body}});

    IndexStore store = IndexStore::in_memory();
    // Some earlier source recorded the same content hash with a different
    // byte count; treating them as one row would corrupt the index.
    store.ingest_triples({triple(content_hash(body), filesize_column(), "7")});

    CHECK_THROWS_AS(build_from_chunks(store, {dir / "2019-07.chunk"}), Error);
    CHECK(store.triple_count() == 1);
    CHECK(store.get_cell(content_hash(body), filepath_column()) == std::nullopt);
}

TEST_CASE("a failing chunk stops the build after the previous chunks landed") {
    testutil::TempDir dir("partial");
    write_chunk(dir / "2019-07.chunk", PartitionId{2019, 7}, kJuly2019, {{"good.bin", "gg"}});
    write_chunk(dir / "2019-08.chunk", PartitionId{2019, 8}, kAug2019, {{"bad.bin", "bb"}},
                std::string("not json"));

    IndexStore store = IndexStore::in_memory();
    CHECK_THROWS_AS(build_from_chunks(store, {dir / "2019-07.chunk", dir / "2019-08.chunk"}),
                    DocumentParseError);
    // The first chunk is in; the failing one contributed nothing.
    CHECK(store.triple_count() == 3);
    CHECK(store.get_cell(content_hash("gg"), filepath_column()) == std::string("good.bin"));
    CHECK(store.get_cell(content_hash("bb"), filepath_column()) == std::nullopt);
}

TEST_CASE("concurrent ingest batches all land") {
    IndexStore store = IndexStore::in_memory();

    auto worker = [&store](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 20; ++i) {
            std::vector<Triple> batch;
            for (int j = 0; j < 5; ++j)
                batch.push_back(
                    triple(random_hash(rng), meta("W" + std::to_string(seed), "f"), "v"));
            store.ingest_triples(std::move(batch));
        }
    };

    std::thread a(worker, 1);
    std::thread b(worker, 2);
    std::thread reader([&store] {
        for (int i = 0; i < 50; ++i) {
            store.column_query(meta("W1", "f"));
            store.row_count();
        }
    });
    a.join();
    b.join();
    reader.join();

    CHECK(store.triple_count() == 200);
    CHECK(store.degree(meta("W1", "f")) == 100);
    CHECK(store.degree(meta("W2", "f")) == 100);
}
