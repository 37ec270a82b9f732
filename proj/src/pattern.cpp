#include "patchguide/pattern.hpp"

#include <cctype>

#include "patchguide/error.hpp"
#include "patchguide/jsonl.hpp"

namespace patchguide {

std::string normalize_label(std::string_view label)
{
    std::string out;
    bool space = false;
    for (char ch : label) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space)
            out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

bool is_remove_action(std::string_view label)
{
    return normalize_label(label) == normalize_label(kRemoveBuggyStatement);
}

ActionInventory ActionInventory::standard()
{
    ActionInventory inv;
    inv.actions_ = {
        {"Insert Variable", false, "Declare a new variable that the fix relies on."},
        {"Insert Memset", false, "Clear or initialize a memory region before use."},
        {"Insert Release Resource", false, "Release, free or close a resource that was leaked or kept alive."},
        {"Insert Cast Statement", false, "Cast an expression to the type the operation requires."},
        {"Insert Cast Checker", true, "Guard a cast with a type or range check."},
        {"Insert Range Checker", true, "Guard an access with a bounds or length check."},
        {"Insert Null Pointer Checker", true, "Guard a dereference with a null check."},
        {"Insert Missed Statement", true, "Add a statement the vulnerable code omitted."},
        {"Mutate Control Statement", false, "Change the control flow of a statement (break, goto, loop)."},
        {"Insert Conditional Expression", false, "Add a condition that gates the vulnerable behaviour."},
        {"Mutate Conditional Expression", true, "Change an existing condition."},
        {"Insert Method Invocation Expression", false, "Add a call to a security-relevant function."},
        {"Mutate Literal Expression", true, "Change a literal value such as a size or constant."},
        {"Mutate Method Invocation Expression", true, "Change a call's callee or arguments."},
        {"Mutate Return Statement", true, "Change the value or presence of a return."},
        {"Mutate Variable", true, "Change the variable an expression uses."},
        {"Move Statement", true, "Move a statement to a different position."},
        {"Remove Buggy Statement", true, "Delete the statement that causes the weakness."},
    };
    return inv;
}

std::vector<std::string> ActionInventory::labels() const
{
    std::vector<std::string> out;
    out.reserve(actions_.size());
    for (const auto& a : actions_)
        out.push_back(a.label);
    return out;
}

const RepairAction* ActionInventory::find(std::string_view label) const
{
    const auto key = normalize_label(label);
    for (const auto& a : actions_)
        if (normalize_label(a.label) == key)
            return &a;
    return nullptr;
}

bool ActionInventory::add(RepairAction action)
{
    if (normalize_label(action.label).empty() || find(action.label))
        return false;
    actions_.push_back(std::move(action));
    return true;
}

ActionInventory ActionInventory::load(const std::filesystem::path& path)
{
    ActionInventory inv;
    for_each_jsonl(path, [&](const nlohmann::json& r, std::size_t line_no) {
        if (!r.is_object() || !r.contains("label") || !r["label"].is_string())
            throw ParseError(path.string() + ": action record needs a string 'label'", line_no);
        RepairAction a{r["label"].get<std::string>(), r.value("seed", false), r.value("definition", std::string())};
        if (!inv.add(a))
            throw ParseError(path.string() + ": duplicate action label '" + a.label + "'", line_no);
    });
    return inv;
}

std::string ActionInventory::to_jsonl() const
{
    std::vector<nlohmann::ordered_json> records;
    for (const auto& a : actions_) {
        nlohmann::ordered_json j;
        j["label"] = a.label;
        j["seed"] = a.seed;
        j["definition"] = a.definition;
        records.push_back(std::move(j));
    }
    return patchguide::to_jsonl(records);
}

std::string_view to_string(SourceSide side)
{
    return side == SourceSide::added ? "added" : "deleted";
}

nlohmann::ordered_json pattern_to_record(const RepairPattern& p)
{
    nlohmann::ordered_json j;
    j["pattern_id"] = p.pattern_id;
    j["pair_id"] = p.pair_id;
    j["cwe_id"] = p.cwe.id;
    j["cwe_name"] = p.cwe.name;
    j["action"] = p.action;
    j["key_element"] = p.key_element;
    j["source_side"] = to_string(p.source_side);
    j["validation_text"] = p.validation_text;
    return j;
}

RepairPattern pattern_from_record(const nlohmann::json& r, std::size_t line_no)
{
    auto str = [&](const char* key) {
        const auto it = r.find(key);
        if (it == r.end() || !it->is_string())
            throw ParseError(std::string("pattern field '") + key + "' missing or not a string", line_no);
        return it->get<std::string>();
    };
    if (!r.is_object())
        throw ParseError("pattern record is not an object", line_no);
    RepairPattern p;
    p.pattern_id = str("pattern_id");
    p.pair_id = str("pair_id");
    p.cwe = {str("cwe_id"), str("cwe_name")};
    p.action = str("action");
    p.key_element = str("key_element");
    const auto side = str("source_side");
    if (side == "added")
        p.source_side = SourceSide::added;
    else if (side == "deleted")
        p.source_side = SourceSide::deleted;
    else
        throw ParseError("unknown source_side '" + side + "'", line_no);
    p.validation_text = str("validation_text");
    return p;
}

} // namespace patchguide
