#include "patchguide/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <set>

#include "patchguide/error.hpp"

namespace patchguide {

namespace {

// Longest first, so the first prefix hit is the maximal munch.
constexpr std::string_view kCppOperators[] = {
    "<<=", ">>=", "->*", "...", "<=>", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "+=",  "-=",  "*=",  "/=", "%=", "&=", "|=", "^=", "::", ".*", "##"};

constexpr std::string_view kCOperators[] = {
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##"};

constexpr std::string_view kJavaOperators[] = {
    ">>>=", ">>>", "<<=", ">>=", "...", "->", "::", "++", "--", "<<", ">>", "<=", ">=",
    "==",   "!=",  "&&",  "||",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=", "^="};

bool ident_start(unsigned char c)
{
    return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80;
}

bool ident_char(unsigned char c)
{
    return ident_start(c) || std::isdigit(c);
}

class Lexer {
public:
    Lexer(std::string_view src, Language lang) : s_(src), lang_(lang) {}

    TokenSeq run()
    {
        TokenSeq out;
        while (i_ < s_.size()) {
            const auto c = static_cast<unsigned char>(s_[i_]);
            if (std::isspace(c)) {
                ++i_;
            } else if (starts("//")) {
                const auto nl = s_.find('\n', i_);
                i_ = nl == std::string_view::npos ? s_.size() : nl;
            } else if (starts("/*")) {
                const auto end = s_.find("*/", i_ + 2);
                if (end == std::string_view::npos)
                    throw LexError("unterminated block comment", i_);
                i_ = end + 2;
            } else if (c == '"' || c == '\'') {
                out.tokens.push_back(literal(i_));
            } else if (ident_start(c)) {
                out.tokens.push_back(identifier());
            } else if (std::isdigit(c) || (c == '.' && i_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_ + 1])))) {
                out.tokens.push_back(number());
            } else {
                out.tokens.push_back(punct());
            }
        }
        return out;
    }

private:
    bool starts(std::string_view p) const { return s_.substr(i_, p.size()) == p; }

    // Quoted literal starting at `start`; consumes through the closing quote.
    std::string literal(std::size_t start)
    {
        if (lang_ == Language::java && s_.substr(i_, 3) == "\"\"\"") {
            std::size_t j = i_ + 3;
            while (j < s_.size()) {
                if (s_[j] == '\\') {
                    j += 2;
                    continue;
                }
                if (s_.substr(j, 3) == "\"\"\"") {
                    i_ = j + 3;
                    return std::string(s_.substr(start, i_ - start));
                }
                ++j;
            }
            throw LexError("unterminated text block", start);
        }
        const char quote = s_[i_];
        std::size_t j = i_ + 1;
        while (j < s_.size()) {
            const char ch = s_[j];
            if (ch == '\\') {
                j += 2;
                continue;
            }
            if (ch == '\n')
                break;
            if (ch == quote) {
                i_ = j + 1;
                return std::string(s_.substr(start, i_ - start));
            }
            ++j;
        }
        throw LexError(quote == '"' ? "unterminated string literal" : "unterminated character literal", start);
    }

    std::string identifier()
    {
        const std::size_t start = i_;
        while (i_ < s_.size() && ident_char(static_cast<unsigned char>(s_[i_])))
            ++i_;
        const auto word = s_.substr(start, i_ - start);
        if (lang_ != Language::java && i_ < s_.size() && (s_[i_] == '"' || s_[i_] == '\'')) {
            static const std::set<std::string_view> raw = {"R", "LR", "uR", "UR", "u8R"};
            static const std::set<std::string_view> encoding = {"L", "u", "U", "u8"};
            if (s_[i_] == '"' && lang_ == Language::cpp && raw.count(word))
                return raw_string(start);
            if (encoding.count(word))
                return literal(start);
        }
        return std::string(word);
    }

    // C++ raw string R"delim( ... )delim"; i_ is at the opening quote.
    std::string raw_string(std::size_t start)
    {
        const auto open = s_.find('(', i_ + 1);
        if (open == std::string_view::npos || open - i_ - 1 > 16)
            throw LexError("malformed raw string literal", start);
        const std::string close = ")" + std::string(s_.substr(i_ + 1, open - i_ - 1)) + "\"";
        const auto end = s_.find(close, open + 1);
        if (end == std::string_view::npos)
            throw LexError("unterminated raw string literal", start);
        i_ = end + close.size();
        return std::string(s_.substr(start, i_ - start));
    }

    std::string number()
    {
        const std::size_t start = i_;
        while (i_ < s_.size()) {
            const auto c = static_cast<unsigned char>(s_[i_]);
            if (std::isalnum(c) || c == '_' || c == '.') {
                ++i_;
            } else if ((c == '+' || c == '-') && i_ > start && std::string_view("eEpP").find(s_[i_ - 1]) != std::string_view::npos) {
                ++i_;
            } else if (c == '\'' && lang_ == Language::cpp && i_ + 1 < s_.size()
                       && std::isalnum(static_cast<unsigned char>(s_[i_ + 1]))) {
                ++i_; // digit separator
            } else {
                break;
            }
        }
        return std::string(s_.substr(start, i_ - start));
    }

    std::string punct()
    {
        auto try_ops = [&](const auto& ops) -> std::size_t {
            for (auto op : ops)
                if (starts(op))
                    return op.size();
            return 0;
        };
        std::size_t len = lang_ == Language::java ? try_ops(kJavaOperators)
            : lang_ == Language::cpp              ? try_ops(kCppOperators)
                                                  : try_ops(kCOperators);
        if (!len)
            len = 1;
        auto tok = std::string(s_.substr(i_, len));
        i_ += len;
        return tok;
    }

    std::string_view s_;
    Language lang_;
    std::size_t i_ = 0;
};

std::size_t rounded_hundredths(unsigned long long numerator, unsigned long long denominator)
{
    // round(numerator * 10000 / denominator), half up
    return static_cast<std::size_t>((numerator * 20000ULL + denominator) / (2ULL * denominator));
}

std::string hundredths_text(std::size_t h)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%zu.%02zu", h / 100, h % 100);
    return buf;
}

double percent(std::size_t success, std::size_t total)
{
    return total ? 100.0 * static_cast<double>(success) / static_cast<double>(total) : 0.0;
}

} // namespace

TokenSeq normalize_code(std::string_view source, Language language)
{
    return Lexer(source, language).run();
}

bool exact_match(std::string_view candidate, std::string_view ground_truth, Language language)
{
    try {
        return normalize_code(candidate, language) == normalize_code(ground_truth, language);
    } catch (const LexError&) {
        return false;
    }
}

bool em_at_k(const std::vector<std::optional<std::string>>& candidates, std::string_view ground_truth,
             Language language, int k)
{
    if (k < 1)
        throw ConfigError("k must be >= 1");
    TokenSeq truth;
    try {
        truth = normalize_code(ground_truth, language);
    } catch (const LexError&) {
        return false;
    }
    const std::size_t limit = std::min(candidates.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
        if (!candidates[i])
            continue;
        try {
            if (normalize_code(*candidates[i], language) == truth)
                return true;
        } catch (const LexError&) {
        }
    }
    return false;
}

bool em_at_k(const std::vector<std::string>& candidates, std::string_view ground_truth, Language language, int k)
{
    std::vector<std::optional<std::string>> wrapped(candidates.begin(), candidates.end());
    return em_at_k(wrapped, ground_truth, language, k);
}

std::string format_rate(std::size_t success, std::size_t total)
{
    if (!total)
        return "0.00";
    return hundredths_text(rounded_hundredths(success, total));
}

std::string format_rate_change(std::size_t base_success, std::size_t base_total, std::size_t success,
                               std::size_t total)
{
    if (!base_total || !total)
        return "-";
    const auto lhs = static_cast<long long>(success) * static_cast<long long>(base_total);
    const auto rhs = static_cast<long long>(base_success) * static_cast<long long>(total);
    const auto denom = static_cast<unsigned long long>(base_total) * total;
    const auto h = rounded_hundredths(static_cast<unsigned long long>(lhs > rhs ? lhs - rhs : rhs - lhs), denom);
    if (h == 0)
        return "0.00%";
    return std::string(lhs > rhs ? "↑" : "↓") + hundredths_text(h) + "%";
}

EvalReport evaluate_dataset(const CandidateLists& results, const std::vector<VulFixPair>& pairs, int k,
                            const std::vector<int>& curve_ks)
{
    if (k < 1)
        throw ConfigError("k must be >= 1");
    std::map<std::string, const VulFixPair*> by_id;
    for (const auto& p : pairs)
        by_id[p.pair_id] = &p;
    for (const auto& [id, _] : results)
        if (!by_id.count(id))
            throw Error("result for unknown pair id " + id);

    static const std::vector<std::optional<std::string>> none;
    auto candidates_of = [&](const VulFixPair& p) -> const std::vector<std::optional<std::string>>& {
        const auto it = results.find(p.pair_id);
        return it == results.end() ? none : it->second;
    };

    EvalReport report;
    report.n = pairs.size();
    report.k = k;
    std::map<std::string, CweRow> rows;
    for (const auto& p : pairs) {
        const bool ok = em_at_k(candidates_of(p), p.raw_fixed, p.language, k);
        auto& row = rows[p.cwe.id];
        row.cwe_id = p.cwe.id;
        row.cwe_name = p.cwe.name;
        ++row.total;
        if (ok) {
            ++row.success;
            ++report.em_true;
        }
    }
    report.em_percent = percent(report.em_true, report.n);
    for (auto& [_, row] : rows) {
        row.rate = percent(row.success, row.total);
        report.per_cwe.push_back(row);
    }
    std::stable_sort(report.per_cwe.begin(), report.per_cwe.end(), [](const CweRow& a, const CweRow& b) {
        if (a.total != b.total)
            return a.total > b.total;
        return a.cwe_id < b.cwe_id;
    });

    for (int ck : curve_ks) {
        std::size_t hits = 0;
        for (const auto& p : pairs)
            hits += em_at_k(candidates_of(p), p.raw_fixed, p.language, ck) ? 1 : 0;
        report.em_at_k_curve.emplace_back(ck, percent(hits, report.n));
    }
    return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& r)
{
    nlohmann::ordered_json j;
    j["n"] = r.n;
    j["k"] = r.k;
    j["em_true"] = r.em_true;
    j["em_percent"] = r.em_percent;
    j["em_rate"] = format_rate(r.em_true, r.n);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : r.per_cwe) {
        nlohmann::ordered_json rj;
        rj["cwe_id"] = row.cwe_id;
        rj["cwe_name"] = row.cwe_name;
        rj["success"] = row.success;
        rj["total"] = row.total;
        rj["rate"] = format_rate(row.success, row.total);
        rows.push_back(std::move(rj));
    }
    j["per_cwe"] = std::move(rows);
    auto curve = nlohmann::ordered_json::array();
    for (const auto& [k, em] : r.em_at_k_curve)
        curve.push_back({{"k", k}, {"em_percent", em}});
    j["em_at_k_curve"] = std::move(curve);
    return j;
}

EvalReport report_from_json(const nlohmann::json& j)
{
    try {
        EvalReport r;
        r.n = j.at("n").get<std::size_t>();
        r.k = j.at("k").get<int>();
        r.em_true = j.at("em_true").get<std::size_t>();
        r.em_percent = percent(r.em_true, r.n);
        for (const auto& rj : j.at("per_cwe")) {
            CweRow row{rj.at("cwe_id").get<std::string>(), rj.at("cwe_name").get<std::string>(),
                       rj.at("success").get<std::size_t>(), rj.at("total").get<std::size_t>(), 0.0};
            row.rate = percent(row.success, row.total);
            r.per_cwe.push_back(std::move(row));
        }
        if (j.contains("em_at_k_curve"))
            for (const auto& c : j["em_at_k_curve"])
                r.em_at_k_curve.emplace_back(c.at("k").get<int>(), c.at("em_percent").get<double>());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed evaluation report: ") + e.what());
    }
}

namespace {

// Display width in code points, so the arrow glyphs align.
std::size_t display_width(std::string_view s)
{
    std::size_t w = 0;
    for (unsigned char c : s)
        w += (c & 0xC0) != 0x80 ? 1 : 0;
    return w;
}

std::string render_rows(const std::vector<std::vector<std::string>>& rows, std::size_t left_aligned)
{
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        width.resize(std::max(width.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c)
            width[c] = std::max(width[c], display_width(row[c]));
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            const std::string pad(width[c] - display_width(row[c]), ' ');
            if (c)
                line += "  ";
            line += c < left_aligned ? row[c] + pad : pad + row[c];
        }
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out += line + "\n";
    }
    return out;
}

} // namespace

std::string render_report_table(const EvalReport& r)
{
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"CWE ID", "Name", "Success", "Total", "Rate"});
    for (const auto& row : r.per_cwe)
        rows.push_back({row.cwe_id, row.cwe_name, std::to_string(row.success), std::to_string(row.total),
                        format_rate(row.success, row.total)});
    rows.push_back({"Overall", "", std::to_string(r.em_true), std::to_string(r.n), format_rate(r.em_true, r.n)});
    return "EM@" + std::to_string(r.k) + "\n" + render_rows(rows, 2);
}

std::string render_comparison_table(const EvalReport& base, const EvalReport& run, std::string_view base_label,
                                    std::string_view run_label)
{
    std::map<std::string, const CweRow*> base_rows;
    for (const auto& row : base.per_cwe)
        base_rows[row.cwe_id] = &row;

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"", "", std::string(base_label), "", "", std::string(run_label), "", "", ""});
    rows.push_back({"CWE ID", "Name", "Success", "Total", "Rate", "Success", "Total", "Rate", "Rate Change"});
    std::set<std::string> seen;
    for (const auto& row : run.per_cwe) {
        seen.insert(row.cwe_id);
        const auto it = base_rows.find(row.cwe_id);
        const CweRow empty{row.cwe_id, row.cwe_name, 0, 0, 0.0};
        const CweRow& b = it == base_rows.end() ? empty : *it->second;
        rows.push_back({row.cwe_id, row.cwe_name, std::to_string(b.success), std::to_string(b.total),
                        format_rate(b.success, b.total), std::to_string(row.success), std::to_string(row.total),
                        format_rate(row.success, row.total),
                        format_rate_change(b.success, b.total, row.success, row.total)});
    }
    for (const auto& row : base.per_cwe) {
        if (seen.count(row.cwe_id))
            continue;
        rows.push_back({row.cwe_id, row.cwe_name, std::to_string(row.success), std::to_string(row.total),
                        format_rate(row.success, row.total), "0", "0", "0.00", "-"});
    }
    rows.push_back({"Overall", "", std::to_string(base.em_true), std::to_string(base.n), format_rate(base.em_true, base.n),
                    std::to_string(run.em_true), std::to_string(run.n), format_rate(run.em_true, run.n),
                    format_rate_change(base.em_true, base.n, run.em_true, run.n)});
    return render_rows(rows, 2);
}

namespace {

struct Block {
    std::size_t a = 0, b = 0, size = 0;
};

// Longest common substring of a[alo,ahi) and b[blo,bhi); earliest in a, then
// earliest in b on ties.
Block longest_match(std::string_view a, std::size_t alo, std::size_t ahi, std::string_view b, std::size_t blo,
                    std::size_t bhi, const std::array<std::vector<std::size_t>, 256>& b2j, std::vector<std::size_t>& prev,
                    std::vector<std::size_t>& cur)
{
    Block best{alo, blo, 0};
    std::vector<std::size_t> touched_prev, touched_cur;
    for (std::size_t i = alo; i < ahi; ++i) {
        touched_cur.clear();
        for (std::size_t j : b2j[static_cast<unsigned char>(a[i])]) {
            if (j < blo)
                continue;
            if (j >= bhi)
                break;
            const std::size_t k = (j > blo ? prev[j - 1] : 0) + 1;
            cur[j] = k;
            touched_cur.push_back(j);
            if (k > best.size)
                best = {i + 1 - k, j + 1 - k, k};
        }
        for (auto j : touched_prev)
            prev[j] = 0;
        for (auto j : touched_cur) {
            prev[j] = cur[j];
            cur[j] = 0;
        }
        touched_prev.swap(touched_cur);
    }
    for (auto j : touched_prev)
        prev[j] = 0;
    return best;
}

} // namespace

double ratcliff_obershelp(std::string_view a, std::string_view b)
{
    const std::size_t total = a.size() + b.size();
    if (total == 0)
        return 1.0;
    std::array<std::vector<std::size_t>, 256> b2j;
    for (std::size_t j = 0; j < b.size(); ++j)
        b2j[static_cast<unsigned char>(b[j])].push_back(j);
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);

    std::size_t matched = 0;
    std::vector<std::array<std::size_t, 4>> stack{{0, a.size(), 0, b.size()}};
    while (!stack.empty()) {
        const auto [alo, ahi, blo, bhi] = stack.back();
        stack.pop_back();
        const Block m = longest_match(a, alo, ahi, b, blo, bhi, b2j, prev, cur);
        if (!m.size)
            continue;
        matched += m.size;
        if (alo < m.a && blo < m.b)
            stack.push_back({alo, m.a, blo, m.b});
        if (m.a + m.size < ahi && m.b + m.size < bhi)
            stack.push_back({m.a + m.size, ahi, m.b + m.size, bhi});
    }
    return 2.0 * static_cast<double>(matched) / static_cast<double>(total);
}

std::vector<SimilarityScore> similarity_rank(const std::vector<std::string>& candidates, std::string_view ground_truth,
                                             std::size_t top_n)
{
    if (top_n < 1)
        throw ConfigError("top_n must be >= 1");
    std::vector<SimilarityScore> scores;
    scores.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        scores.push_back({i, ratcliff_obershelp(candidates[i], ground_truth)});
    std::stable_sort(scores.begin(), scores.end(),
                     [](const SimilarityScore& x, const SimilarityScore& y) { return x.score > y.score; });
    if (scores.size() > top_n)
        scores.resize(top_n);
    return scores;
}

double cohens_kappa(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b)
{
    if (labels_a.size() != labels_b.size())
        throw Error("label lists differ in length");
    if (labels_a.empty())
        throw Error("label lists are empty");
    const double n = static_cast<double>(labels_a.size());
    std::map<std::string, double> count_a, count_b;
    double agree = 0;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        count_a[labels_a[i]] += 1;
        count_b[labels_b[i]] += 1;
        agree += labels_a[i] == labels_b[i] ? 1 : 0;
    }
    const double p_o = agree / n;
    double p_e = 0;
    for (const auto& [label, ca] : count_a)
        if (auto it = count_b.find(label); it != count_b.end())
            p_e += (ca / n) * (it->second / n);
    if (p_e >= 1.0) {
        if (p_o >= 1.0)
            return 1.0;
        throw Error("kappa undefined: chance agreement is 1 but observed agreement is not");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

} // namespace patchguide
