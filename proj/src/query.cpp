#include "mediavault/query.hpp"

#include <algorithm>

namespace mediavault {

Query Query::leaf(ColumnKey column, ValuePredicate predicate) {
    Query q;
    q.op_ = Op::Leaf;
    q.column_ = std::move(column);
    q.predicate_ = std::move(predicate);
    return q;
}

Query Query::exists(ColumnKey column) {
    return leaf(std::move(column), ValuePredicate::exists());
}

Query Query::equals(ColumnKey column, std::string value) {
    return leaf(std::move(column), ValuePredicate::equals(std::move(value)));
}

Query Query::numeric(ColumnKey column, CmpOp op, double threshold) {
    return leaf(std::move(column), ValuePredicate::numeric(op, threshold));
}

Query Query::and_of(std::vector<Query> children) {
    if (children.empty())
        throw ValidationError("AND needs at least one operand");
    Query q;
    q.op_ = Op::And;
    q.children_ = std::move(children);
    return q;
}

Query Query::or_of(std::vector<Query> children) {
    if (children.empty())
        throw ValidationError("OR needs at least one operand");
    Query q;
    q.op_ = Op::Or;
    q.children_ = std::move(children);
    return q;
}

Query Query::not_of(Query child) {
    Query q;
    q.op_ = Op::Not;
    q.children_.push_back(std::move(child));
    return q;
}

int Query::depth() const {
    int child_max = 0;
    for (const auto& c : children_)
        child_max = std::max(child_max, c.depth());
    return child_max + 1;
}

namespace {

std::string quote(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    out.push_back('"');
    for (char c : s) {
        if (c == '"' || c == '\\')
            out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

std::string Query::render() const {
    switch (op_) {
    case Op::Leaf:
        switch (predicate_.kind) {
        case ValuePredicate::Kind::Exists:
            return "EXISTS(" + quote(render_column(column_)) + ")";
        case ValuePredicate::Kind::Exact:
            return quote(render_column(column_)) + " = " + quote(predicate_.exact);
        case ValuePredicate::Kind::Numeric:
            return quote(render_column(column_)) + " " + std::string(to_string(predicate_.op)) +
                   " " + format_decimal(predicate_.threshold);
        }
        return "";
    case Op::Not:
        return "NOT " + children_[0].render();
    case Op::And:
    case Op::Or: {
        std::string sep = op_ == Op::And ? " AND " : " OR ";
        std::string out = "(";
        for (std::size_t i = 0; i < children_.size(); ++i) {
            if (i != 0)
                out += sep;
            out += children_[i].render();
        }
        out += ")";
        return out;
    }
    }
    return "";
}

namespace {

using Rows = std::vector<ContentHash>;

Rows intersect(const Rows& a, const Rows& b) {
    Rows out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

Rows unite(const Rows& a, const Rows& b) {
    Rows out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

Rows subtract(const Rows& a, const Rows& b) {
    Rows out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

Rows universe_rows(const IndexStore& store, QueryStats& stats) {
    auto result = store.column_query(filepath_column(), std::nullopt);
    stats.cells_touched += result.cells_scanned;
    Rows out;
    out.reserve(result.matches.size());
    for (auto& m : result.matches)
        out.push_back(std::move(m.row));
    return out;
}

Rows eval_rows(const Query& q, const IndexStore& store, QueryStats& stats) {
    switch (q.op()) {
    case Query::Op::Leaf: {
        auto result = store.column_query(q.column(), q.predicate());
        ++stats.leaves_evaluated;
        stats.cells_touched += result.cells_scanned;
        stats.numeric_skips += result.numeric_skips;
        Rows out;
        out.reserve(result.matches.size());
        for (auto& m : result.matches)
            out.push_back(std::move(m.row));
        return out;
    }
    case Query::Op::And: {
        // Cheapest leaf first: an intersection can only shrink, so starting
        // from the lowest-degree column touches the fewest cells.
        std::vector<const Query*> order;
        order.reserve(q.children().size());
        for (const auto& c : q.children())
            order.push_back(&c);
        std::stable_sort(order.begin(), order.end(), [&](const Query* a, const Query* b) {
            bool a_leaf = a->op() == Query::Op::Leaf;
            bool b_leaf = b->op() == Query::Op::Leaf;
            if (a_leaf != b_leaf)
                return a_leaf;
            if (!a_leaf)
                return false;
            return store.degree(a->column()) < store.degree(b->column());
        });
        Rows acc = eval_rows(*order[0], store, stats);
        for (std::size_t i = 1; i < order.size(); ++i)
            acc = intersect(acc, eval_rows(*order[i], store, stats));
        return acc;
    }
    case Query::Op::Or: {
        Rows acc;
        for (const auto& c : q.children())
            acc = unite(acc, eval_rows(c, store, stats));
        return acc;
    }
    case Query::Op::Not:
        return subtract(universe_rows(store, stats), eval_rows(q.children()[0], store, stats));
    }
    return {};
}

} // namespace

ResultSet evaluate(const Query& query, const IndexStore& store) {
    if (query.depth() > kMaxQueryDepth)
        throw ValidationError("query tree deeper than " + std::to_string(kMaxQueryDepth));
    ResultSet result;
    Rows rows = eval_rows(query, store, result.stats);
    ColumnKey loc_col = chunk_column();
    result.rows.reserve(rows.size());
    for (auto& row : rows) {
        ResultRow rr;
        rr.chunk_location = store.get_cell(row, loc_col);
        rr.hash = std::move(row);
        result.rows.push_back(std::move(rr));
    }
    return result;
}

QuerySyntaxError::QuerySyntaxError(std::size_t offset, std::vector<std::string> expected,
                                   const std::string& message)
    : ValidationError(message), offset_(offset), expected_(std::move(expected)) {}

namespace {

[[noreturn]] void syntax_error(std::size_t offset, std::vector<std::string> expected,
                               const std::string& found) {
    std::string msg = "query syntax error at byte " + std::to_string(offset) + ": expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i != 0)
            msg += i + 1 == expected.size() ? " or " : ", ";
        msg += expected[i];
    }
    msg += ", found " + found;
    throw QuerySyntaxError(offset, std::move(expected), msg);
}

struct Token {
    enum class Kind { End, LParen, RParen, And, Or, Not, Exists, Quoted, Number, Op };

    Kind kind = Kind::End;
    std::size_t offset = 0;
    std::string text;   // Quoted: unescaped content; Number: raw spelling
    double number = 0;  // Number only
    CmpOp op = CmpOp::Eq;

    std::string describe() const {
        switch (kind) {
        case Kind::End: return "end of input";
        case Kind::LParen: return "'('";
        case Kind::RParen: return "')'";
        case Kind::And: return "AND";
        case Kind::Or: return "OR";
        case Kind::Not: return "NOT";
        case Kind::Exists: return "EXISTS";
        case Kind::Quoted: return "quoted string " + quote(text);
        case Kind::Number: return "number " + text;
        case Kind::Op: return std::string("'") + std::string(to_string(op)) + "'";
        }
        return "?";
    }
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) { advance(); }

    const Token& peek() const { return current_; }

    Token take() {
        Token t = std::move(current_);
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < text_.size() &&
               (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                text_[pos_] == '\r'))
            ++pos_;
        current_ = Token{};
        current_.offset = pos_;
        if (pos_ == text_.size())
            return;

        char c = text_[pos_];
        if (c == '(') {
            current_.kind = Token::Kind::LParen;
            ++pos_;
            return;
        }
        if (c == ')') {
            current_.kind = Token::Kind::RParen;
            ++pos_;
            return;
        }
        if (c == '"') {
            lex_quoted();
            return;
        }
        if (c == '=' ) {
            current_.kind = Token::Kind::Op;
            current_.op = CmpOp::Eq;
            ++pos_;
            return;
        }
        if (c == '<' || c == '>') {
            current_.kind = Token::Kind::Op;
            bool eq = pos_ + 1 < text_.size() && text_[pos_ + 1] == '=';
            current_.op = c == '<' ? (eq ? CmpOp::Le : CmpOp::Lt)
                                   : (eq ? CmpOp::Ge : CmpOp::Gt);
            pos_ += eq ? 2 : 1;
            return;
        }
        if ((c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.') {
            lex_number();
            return;
        }
        if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_') {
            lex_word();
            return;
        }
        syntax_error(pos_, {"a query token"},
                     std::string("'") + c + "'");
    }

    void lex_quoted() {
        std::size_t start = pos_;
        ++pos_; // opening quote
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            char c = text_[pos_];
            if (c == '\\') {
                if (pos_ + 1 >= text_.size())
                    syntax_error(pos_, {"an escaped character"}, "end of input");
                char next = text_[pos_ + 1];
                if (next != '"' && next != '\\')
                    syntax_error(pos_, {"'\\\"' or '\\\\'"},
                                 std::string("'\\") + next + "'");
                out.push_back(next);
                pos_ += 2;
            } else {
                out.push_back(c);
                ++pos_;
            }
        }
        if (pos_ == text_.size())
            syntax_error(start, {"a closing '\"'"}, "end of input");
        ++pos_; // closing quote
        current_.kind = Token::Kind::Quoted;
        current_.text = std::move(out);
    }

    void lex_number() {
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            bool number_char = (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+' ||
                               c == 'e' || c == 'E';
            if (!number_char)
                break;
            ++pos_;
        }
        std::string raw(text_.substr(start, pos_ - start));
        auto value = parse_decimal(raw);
        if (!value)
            syntax_error(start, {"a decimal number"}, "'" + raw + "'");
        current_.kind = Token::Kind::Number;
        current_.text = std::move(raw);
        current_.number = *value;
    }

    void lex_word() {
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            bool word_char = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                             (c >= '0' && c <= '9') || c == '_';
            if (!word_char)
                break;
            ++pos_;
        }
        std::string_view word = text_.substr(start, pos_ - start);
        if (word == "AND")
            current_.kind = Token::Kind::And;
        else if (word == "OR")
            current_.kind = Token::Kind::Or;
        else if (word == "NOT")
            current_.kind = Token::Kind::Not;
        else if (word == "EXISTS")
            current_.kind = Token::Kind::Exists;
        else
            syntax_error(start, {"AND", "OR", "NOT", "EXISTS"},
                         "'" + std::string(word) + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    Token current_;
};

class Parser {
public:
    explicit Parser(std::string_view text) : lexer_(text) {}

    Query parse() {
        Query q = parse_expr(1);
        if (lexer_.peek().kind != Token::Kind::End)
            syntax_error(lexer_.peek().offset, {"AND", "OR", "end of input"},
                         lexer_.peek().describe());
        return q;
    }

private:
    void check_depth(int depth, std::size_t offset) {
        if (depth > kMaxQueryDepth)
            syntax_error(offset, {"a query no deeper than " + std::to_string(kMaxQueryDepth)},
                         "deeper nesting");
    }

    Query parse_expr(int depth) {
        check_depth(depth, lexer_.peek().offset);
        std::vector<Query> terms;
        terms.push_back(parse_term(depth + 1));
        while (lexer_.peek().kind == Token::Kind::Or) {
            lexer_.take();
            terms.push_back(parse_term(depth + 1));
        }
        if (terms.size() == 1)
            return std::move(terms[0]);
        return Query::or_of(std::move(terms));
    }

    Query parse_term(int depth) {
        check_depth(depth, lexer_.peek().offset);
        std::vector<Query> factors;
        factors.push_back(parse_factor(depth + 1));
        while (lexer_.peek().kind == Token::Kind::And) {
            lexer_.take();
            factors.push_back(parse_factor(depth + 1));
        }
        if (factors.size() == 1)
            return std::move(factors[0]);
        return Query::and_of(std::move(factors));
    }

    Query parse_factor(int depth) {
        check_depth(depth, lexer_.peek().offset);
        const Token& t = lexer_.peek();
        switch (t.kind) {
        case Token::Kind::Not: {
            lexer_.take();
            return Query::not_of(parse_factor(depth + 1));
        }
        case Token::Kind::LParen: {
            lexer_.take();
            Query inner = parse_expr(depth + 1);
            expect(Token::Kind::RParen, "')'");
            return inner;
        }
        case Token::Kind::Exists: {
            lexer_.take();
            expect(Token::Kind::LParen, "'('");
            ColumnKey column = parse_column_token();
            expect(Token::Kind::RParen, "')'");
            return Query::exists(std::move(column));
        }
        case Token::Kind::Quoted:
            return parse_leaf();
        default:
            syntax_error(t.offset, {"NOT", "'('", "EXISTS", "a quoted column key"},
                         t.describe());
        }
    }

    Query parse_leaf() {
        ColumnKey column = parse_column_token();
        const Token& op_tok = lexer_.peek();
        if (op_tok.kind != Token::Kind::Op)
            syntax_error(op_tok.offset, {"'='", "'<'", "'<='", "'>='", "'>'"},
                         op_tok.describe());
        CmpOp op = lexer_.take().op;

        const Token& value_tok = lexer_.peek();
        if (value_tok.kind == Token::Kind::Quoted) {
            if (op != CmpOp::Eq)
                syntax_error(value_tok.offset,
                             {"a number (quoted values only compare with '=')"},
                             value_tok.describe());
            return Query::equals(std::move(column), lexer_.take().text);
        }
        if (value_tok.kind == Token::Kind::Number)
            return Query::numeric(std::move(column), op, lexer_.take().number);
        syntax_error(value_tok.offset, {"a quoted string", "a number"}, value_tok.describe());
    }

    ColumnKey parse_column_token() {
        const Token& t = lexer_.peek();
        if (t.kind != Token::Kind::Quoted)
            syntax_error(t.offset, {"a quoted column key"}, t.describe());
        Token taken = lexer_.take();
        try {
            return parse_column(taken.text);
        } catch (const ColumnParseError& e) {
            syntax_error(taken.offset, {"a column key like \"METADATA|File|dataset\""},
                         std::string(e.what()));
        }
    }

    void expect(Token::Kind kind, const std::string& what) {
        if (lexer_.peek().kind != kind)
            syntax_error(lexer_.peek().offset, {what}, lexer_.peek().describe());
        lexer_.take();
    }

    Lexer lexer_;
};

} // namespace

Query parse_query(std::string_view text) {
    return Parser(text).parse();
}

LocateResult locate(const ContentHash& hash, const IndexStore& store) {
    auto cell = store.get_cell(hash, chunk_column());
    if (!cell) {
        LocateResult r;
        r.status = store.row_query(hash).empty() ? LocateStatus::NotFound
                                                 : LocateStatus::IndexedWithoutChunk;
        return r;
    }
    auto sep = cell->find(':');
    if (sep == std::string::npos)
        throw ValidationError("stored chunk location for " + hash.hex +
                              " is malformed: " + *cell);
    LocateResult r;
    r.status = LocateStatus::Found;
    r.location = Location{cell->substr(0, sep), cell->substr(sep + 1)};
    return r;
}

} // namespace mediavault
