#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "patchguide/diff.hpp"
#include "patchguide/error.hpp"
#include "patchguide/evaluation.hpp"
#include "patchguide/extraction.hpp"
#include "patchguide/matcher.hpp"
#include "patchguide/pattern_store.hpp"
#include "patchguide/pipeline.hpp"
#include "patchguide/run_config.hpp"

namespace py = pybind11;
using namespace patchguide;

namespace {

Language language_arg(const std::string& s)
{
    const auto lang = parse_language(s);
    if (!lang)
        throw ConfigError("unknown language '" + s + "'");
    return *lang;
}

MatchMode match_mode_arg(const std::string& s)
{
    if (s == "full")
        return MatchMode::full;
    if (s == "action_only")
        return MatchMode::action_only;
    if (s == "key_only")
        return MatchMode::key_only;
    throw ConfigError("unknown match mode '" + s + "'");
}

py::dict pattern_dict(const RepairPattern& p)
{
    py::dict d;
    d["pattern_id"] = p.pattern_id;
    d["pair_id"] = p.pair_id;
    d["cwe_id"] = p.cwe.id;
    d["cwe_name"] = p.cwe.name;
    d["action"] = p.action;
    d["key_element"] = p.key_element;
    d["source_side"] = std::string(to_string(p.source_side));
    return d;
}

py::dict candidate_dict(const GuidanceCandidate& c)
{
    py::dict d;
    d["action"] = c.action;
    d["key_element"] = c.key_element;
    d["score"] = c.score;
    d["rank"] = c.rank;
    d["origin"] = std::string(to_string(c.origin));
    d["source_id"] = c.source_id;
    return d;
}

StageOutcome run_stage(const std::string& stage, const std::string& config_path, std::optional<std::string> out,
                       std::optional<std::string> mode, std::optional<std::string> backend,
                       std::optional<std::uint64_t> seed)
{
    ConfigOverrides o;
    o.out = std::move(out);
    o.mode = std::move(mode);
    o.backend = std::move(backend);
    o.seed = seed;
    const auto config = load_run_config(config_path, o);
    py::gil_scoped_release release;
    if (stage == "ingest")
        return cmd_ingest(config);
    if (stage == "extract")
        return cmd_extract(config);
    if (stage == "match")
        return cmd_match(config);
    if (stage == "generate")
        return cmd_generate(config);
    if (stage == "evaluate")
        return cmd_evaluate(config);
    throw ConfigError("unknown stage '" + stage + "'");
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Pattern mining and pattern-guided repair core";

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", error);
    py::register_exception<LexError>(m, "LexError", error);
    py::register_exception<MalformedOutputError>(m, "MalformedOutputError", error);

    py::class_<Hunk>(m, "Hunk")
        .def_readonly("old_start", &Hunk::old_start)
        .def_readonly("deleted", &Hunk::deleted)
        .def_readonly("new_start", &Hunk::new_start)
        .def_readonly("added", &Hunk::added)
        .def("__repr__", [](const Hunk& h) {
            return "Hunk(old_start=" + std::to_string(h.old_start) + ", -" + std::to_string(h.deleted.size())
                + ", new_start=" + std::to_string(h.new_start) + ", +" + std::to_string(h.added.size()) + ")";
        });

    py::class_<LineDiff>(m, "LineDiff")
        .def_readonly("old_lines", &LineDiff::old_lines)
        .def_readonly("new_lines", &LineDiff::new_lines)
        .def_readonly("hunks", &LineDiff::hunks)
        .def("empty", &LineDiff::empty);

    m.def("line_diff", py::overload_cast<std::string_view, std::string_view>(&line_diff), py::arg("old_text"),
          py::arg("new_text"));
    m.def("apply_hunks", &apply_hunks, py::arg("old_lines"), py::arg("hunks"));
    m.def("collect_changed_lines", [](const LineDiff& d) {
        const auto c = collect_changed_lines(d);
        return py::make_tuple(c.added, c.deleted);
    }, py::arg("diff"), "Returns (added, deleted) line lists.");
    m.def("render_unified", &render_unified, py::arg("diff"), py::arg("context") = 3);

    m.def("annotate_bug_regions", [](const std::string& vulnerable, const std::string& fixed, const std::string& lang) {
        const auto a = annotate_bug_regions(vulnerable, fixed, language_arg(lang));
        return py::make_tuple(a.vulnerable_source, a.fixed_source);
    }, py::arg("raw_vulnerable"), py::arg("raw_fixed"), py::arg("language") = "c");
    m.def("strip_markers", &strip_markers, py::arg("text"));

    m.def("parse_extraction_output", [](std::string_view text) {
        const auto p = parse_extraction_output(text);
        return py::make_tuple(p.action, p.key_element);
    }, py::arg("text"));
    m.def("validate_key_element", &validate_key_element, py::arg("action"), py::arg("key_element"), py::arg("diff"));
    m.def("standard_actions", [] {
        std::vector<std::pair<std::string, bool>> out;
        const auto inventory = ActionInventory::standard();
        for (const auto& a : inventory.actions())
            out.emplace_back(a.label, a.seed);
        return out;
    }, "(label, seed) for every action of the standard inventory.");

    m.def("tokenize_code", &tokenize_code, py::arg("text"));
    m.def("bm25_rank", [](std::string_view query, const std::vector<std::pair<std::string, std::string>>& docs,
                          double k1, double b) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& s : bm25_rank(query, docs, {k1, b}))
            out.emplace_back(s.id, s.score);
        return out;
    }, py::arg("query"), py::arg("docs"), py::arg("k1") = 1.2, py::arg("b") = 0.75);

    m.def("normalize_code", [](std::string_view source, const std::string& lang) {
        return normalize_code(source, language_arg(lang)).tokens;
    }, py::arg("source"), py::arg("language") = "c");
    m.def("exact_match", [](std::string_view a, std::string_view b, const std::string& lang) {
        return exact_match(a, b, language_arg(lang));
    }, py::arg("candidate"), py::arg("ground_truth"), py::arg("language") = "c");
    m.def("em_at_k", [](const std::vector<std::optional<std::string>>& candidates, std::string_view truth,
                        const std::string& lang, int k) { return em_at_k(candidates, truth, language_arg(lang), k); },
          py::arg("candidates"), py::arg("ground_truth"), py::arg("language") = "c", py::arg("k") = 1);
    m.def("ratcliff_obershelp", &ratcliff_obershelp, py::arg("a"), py::arg("b"));
    m.def("similarity_rank", [](const std::vector<std::string>& candidates, std::string_view truth, std::size_t top_n) {
        std::vector<std::pair<std::size_t, double>> out;
        for (const auto& s : similarity_rank(candidates, truth, top_n))
            out.emplace_back(s.index, s.score);
        return out;
    }, py::arg("candidates"), py::arg("ground_truth"), py::arg("top_n") = 5);
    m.def("cohens_kappa", &cohens_kappa, py::arg("labels_a"), py::arg("labels_b"));
    m.def("evaluate_matching",
          [](const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& predictions,
             const std::map<std::string, std::pair<std::string, std::string>>& gold, const std::string& mode, int k) {
              std::vector<InstanceGuidance> preds;
              for (const auto& [id, cands] : predictions) {
                  InstanceGuidance g{id, {}};
                  for (const auto& [action, key] : cands)
                      g.candidates.push_back({action, key, 0.0, 0, GuidanceOrigin::remote, ""});
                  preds.push_back(std::move(g));
              }
              std::vector<GoldPattern> golds;
              for (const auto& [id, pattern] : gold)
                  golds.push_back({id, pattern.first, pattern.second});
              const auto r = evaluate_matching(preds, golds, match_mode_arg(mode), k);
              return py::make_tuple(r.precision_at_k, r.recall_at_k);
          },
          py::arg("predictions"), py::arg("gold"), py::arg("mode") = "full", py::arg("k") = 10,
          "predictions: {id: [(action, key)]}, gold: {id: (action, key)}. Returns (precision@k, recall@k).");

    py::class_<PatternStore>(m, "PatternStore")
        .def(py::init<>())
        .def_static("load", &PatternStore::load, py::arg("path"))
        .def("__len__", &PatternStore::size)
        .def("patterns", [](const PatternStore& s) {
            py::list out;
            for (const auto& p : s.patterns())
                out.append(pattern_dict(p));
            return out;
        })
        .def("query_by_cwe", [](const PatternStore& s, std::string_view cwe) {
            py::list out;
            for (const auto& p : s.query_by_cwe(cwe))
                out.append(pattern_dict(p));
            return out;
        }, py::arg("cwe_id"))
        .def("match", [](const PatternStore& s, const std::string& cwe_id, const std::string& source, int k) {
            MatchRequest req{{cwe_id, ""}, source, k, std::max(k, 10)};
            py::list out;
            for (const auto& c : match_retrieval(req, s))
                out.append(candidate_dict(c));
            return out;
        }, py::arg("cwe_id"), py::arg("vulnerable_source"), py::arg("k") = 10);

    py::class_<StageOutcome>(m, "StageOutcome")
        .def_readonly("exit_code", &StageOutcome::exit_code)
        .def_readonly("summary", &StageOutcome::summary);
    m.def("run_stage", &run_stage, py::arg("stage"), py::arg("config"), py::arg("out") = std::nullopt,
          py::arg("mode") = std::nullopt, py::arg("backend") = std::nullopt, py::arg("seed") = std::nullopt,
          "Runs one pipeline stage (ingest, extract, match, generate, evaluate) from a run config file.");
}
