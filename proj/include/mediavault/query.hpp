#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mediavault/index.hpp"

namespace mediavault {

inline constexpr int kMaxQueryDepth = 32;

// Boolean query tree. Leaves filter one column; AND / OR / NOT combine row
// sets. NOT complements against the universe of indexed files.
class Query {
public:
    enum class Op { Leaf, And, Or, Not };

    static Query leaf(ColumnKey column, ValuePredicate predicate);
    static Query exists(ColumnKey column);
    static Query equals(ColumnKey column, std::string value);
    static Query numeric(ColumnKey column, CmpOp op, double threshold);
    static Query and_of(std::vector<Query> children);
    static Query or_of(std::vector<Query> children);
    static Query not_of(Query child);

    Op op() const { return op_; }
    const ColumnKey& column() const { return column_; }
    const ValuePredicate& predicate() const { return predicate_; }
    const std::vector<Query>& children() const { return children_; }

    int depth() const;
    std::string render() const;

private:
    Query() = default;

    Op op_ = Op::Leaf;
    ColumnKey column_;
    ValuePredicate predicate_;
    std::vector<Query> children_;
};

struct ResultRow {
    ContentHash hash;
    // Raw chunk-location cell ("chunk_id:logical_path") when indexed.
    std::optional<std::string> chunk_location;
};

struct QueryStats {
    std::uint64_t leaves_evaluated = 0;
    std::uint64_t cells_touched = 0;
    std::uint64_t numeric_skips = 0;
};

struct ResultSet {
    std::vector<ResultRow> rows; // ordered by hash
    QueryStats stats;
};

ResultSet evaluate(const Query& query, const IndexStore& store);

class QuerySyntaxError : public ValidationError {
public:
    QuerySyntaxError(std::size_t offset, std::vector<std::string> expected,
                     const std::string& message);
    std::size_t offset() const { return offset_; }
    const std::vector<std::string>& expected() const { return expected_; }

private:
    std::size_t offset_;
    std::vector<std::string> expected_;
};

// Grammar:
//   expr   := term (OR term)*
//   term   := factor (AND factor)*
//   factor := NOT factor | '(' expr ')' | leaf
//   leaf   := "COLUMN" op VALUE | EXISTS("COLUMN")
// where op is one of = < <= >= >, a quoted VALUE means exact match (only
// with =), and a bare decimal VALUE means numeric comparison.
Query parse_query(std::string_view text);

enum class LocateStatus { Found, NotFound, IndexedWithoutChunk };

struct Location {
    std::string chunk_id;
    std::string logical_path;
};

struct LocateResult {
    LocateStatus status = LocateStatus::NotFound;
    std::optional<Location> location;
};

// Looks a file up by hash and splits its chunk-location cell into chunk id
// and path. A malformed cell throws with the raw value in the message.
LocateResult locate(const ContentHash& hash, const IndexStore& store);

} // namespace mediavault
