#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "agentrec/error.hpp"
#include "agentrec/memory.hpp"
#include "agentrec/reliability.hpp"
#include "agentrec/scenario.hpp"

namespace py = pybind11;
using namespace agentrec;

PYBIND11_MODULE(_agentrec, m) {
  m.attr("__version__") = std::string(kVersion);

  static py::exception<Error> error(m, "AgentRecError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      // args are (code, message) so callers can branch on the code
      PyErr_SetObject(error.ptr(), py::make_tuple(std::string(e.name()), std::string(e.what())).ptr());
    }
  });

  py::enum_<MemoryLabel>(m, "MemoryLabel")
      .value("EPI", MemoryLabel::EPI)
      .value("SEM", MemoryLabel::SEM)
      .value("PROC", MemoryLabel::PROC);

  py::class_<MemoryStore>(m, "MemoryStore")
      .def(py::init<>())
      .def(
          "upsert_fact",
          [](MemoryStore& s, const std::string& slot, const std::string& value, MemoryLabel label, Timestamp now) {
            s.upsert_fact({slot, value}, label, now);
          },
          py::arg("slot"), py::arg("value"), py::arg("label"), py::arg("now"))
      .def(
          "upsert_text", [](MemoryStore& s, const std::string& text, MemoryLabel label,
                            Timestamp now) { s.upsert_text(text, label, now); },
          py::arg("text"), py::arg("label"), py::arg("now"))
      .def("__len__", [](const MemoryStore& s) { return s.items().size(); })
      .def("texts", [](const MemoryStore& s) {
        std::vector<std::string> out;
        for (const auto& it : s.items()) out.push_back(it.canonical_text());
        return out;
      });

  m.def(
      "retrieve_topk",
      [](const MemoryStore& s, const std::string& query, std::size_t k) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& r : retrieve_topk(s, query, k)) out.emplace_back(r.item.canonical_text(), r.score);
        return out;
      },
      py::arg("store"), py::arg("query"), py::arg("k"), "(canonical text, score) pairs in rank order.");

  m.def(
      "regulate_context",
      [](const MemoryStore& s, const std::string& query, std::size_t budget) {
        auto w = regulate_context(s, query, budget);
        py::dict d;
        std::vector<std::string> texts;
        for (const auto& r : w.items) texts.push_back(r.item.canonical_text());
        d["items"] = texts;
        d["total_score"] = w.total_score;
        d["total_tokens"] = w.total_tokens;
        d["approximate"] = w.approximate;
        return d;
      },
      py::arg("store"), py::arg("query"), py::arg("budget"));

  m.def(
      "propagation_probability", [](const std::vector<double>& p) { return propagation_probability(p); },
      py::arg("p"));

  m.def(
      "constrained_select",
      [](const std::vector<std::pair<std::string, double>>& cands, const std::string& policy_json) {
        std::vector<Candidate> cs;
        for (const auto& [t, s] : cands) cs.push_back({t, s});
        return constrained_select(cs, policy_from_json(nlohmann::json::parse(policy_json)));
      },
      py::arg("candidates"), py::arg("policy_json"));

  m.def(
      "validate_config",
      [](const std::filesystem::path& path) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& f : validate_config(path)) out.emplace_back(f.field, f.rule);
        return out;
      },
      py::arg("path"), "(field, rule) findings; empty when the config loads.");

  m.def(
      "run_scenario",
      [](const std::filesystem::path& path, std::optional<std::filesystem::path> out,
         std::optional<std::uint64_t> seed, const std::string& format) {
        ScenarioOutcome o;
        {
          py::gil_scoped_release release;
          o = run_scenario(path, {std::move(out), seed, parse_report_format(format)});
        }
        py::dict d;
        d["exit_code"] = o.exit_code;
        d["out_dir"] = o.out_dir;
        d["error"] = o.error ? py::cast(o.error->code) : py::none();
        d["report"] = o.stdout_text;
        return d;
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(), py::arg("format") = "table");

  m.def("sha256_hex", [](const std::string& bytes) { return sha256_hex(bytes); });
}
