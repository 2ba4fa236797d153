// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tcb/analysis.hpp"
#include "tcb/assertion.hpp"
#include "tcb/config.hpp"
#include "tcb/consistency.hpp"
#include "tcb/error.hpp"
#include "tcb/pipeline.hpp"
#include "tcb/verifier.hpp"
#include "tcb/video_io.hpp"

namespace py = pybind11;

namespace {

py::object to_py(const tcb::Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

tcb::Json from_py(const py::handle& obj) {
  return tcb::Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

std::vector<tcb::consistency::EmbeddingVector> embeddings(
    const std::vector<std::vector<float>>& rows, const std::string& fingerprint) {
  std::vector<tcb::consistency::EmbeddingVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(tcb::consistency::make_embedding(r, fingerprint));
  return out;
}

py::dict score_dict(const tcb::consistency::ConsistencyScore& s) {
  py::dict d;
  d["raw"] = s.raw_similarities;
  d["mapped"] = s.mapped;
  d["mean_mapped"] = s.mean_mapped;
  return d;
}

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Each element is an (H, W, 2) array of (u, v) displacements.
std::vector<tcb::consistency::FlowField> flows_of(const std::vector<FloatArray>& arrays) {
  std::vector<tcb::consistency::FlowField> out;
  for (const auto& a : arrays) {
    if (a.ndim() != 3 || a.shape(2) != 2) {
      throw tcb::ValidationError("flow arrays must have shape (H, W, 2)");
    }
    tcb::consistency::FlowField f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    const auto* data = a.data();
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      f.u[p] = data[2 * p];
      f.v[p] = data[2 * p + 1];
    }
    out.push_back(std::move(f));
  }
  return out;
}

// (points, frames, 2) positions.
tcb::consistency::Trajectory trajectory_of(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 2) {
    throw tcb::ValidationError("trajectories must have shape (points, frames, 2)");
  }
  tcb::consistency::Trajectory t;
  const auto r = a.unchecked<3>();
  for (py::ssize_t p = 0; p < a.shape(0); ++p) {
    std::vector<std::array<double, 2>> row;
    for (py::ssize_t k = 0; k < a.shape(1); ++k) row.push_back({r(p, k, 0), r(p, k, 1)});
    t.positions.push_back(std::move(row));
  }
  return t;
}

py::dict correlation_dict(const tcb::analysis::CorrelationResult& r) {
  py::dict d;
  d["spearman"] = r.spearman_rho;
  d["kendall"] = r.kendall_tau;
  d["n"] = r.n;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Temporal compositionality benchmark core";

  py::register_exception<tcb::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<tcb::ProviderError>(m, "ProviderError", PyExc_RuntimeError);

  // Frames.
  m.def("equal_gap_indices", &tcb::video::equal_gap_indices, py::arg("frame_count"),
        py::arg("target_count") = tcb::video::kCanonicalFrameCount);
  m.def("remap_index", &tcb::video::remap_index, py::arg("index"), py::arg("frame_count"),
        py::arg("canonical") = tcb::video::kCanonicalFrameCount);

  // Assertions.
  m.def(
      "parse_assertions",
      [](const std::string& text) { return to_py(tcb::assertion::to_json(tcb::assertion::parse_assertion_text(text))); },
      py::arg("text"), "Parse the bulleted assertion layout into a dict.");
  m.def(
      "render_assertions",
      [](const py::dict& set) {
        return tcb::assertion::render_assertion_text(tcb::assertion::assertion_set_from_json(from_py(set)));
      },
      py::arg("assertion_set"));
  m.def(
      "validate_assertions",
      [](const py::dict& set, const std::string& category) {
        tcb::assertion::validate_assertion_set(tcb::assertion::assertion_set_from_json(from_py(set)),
                                               tcb::corpus::parse_category(category));
      },
      py::arg("assertion_set"), py::arg("category"));

  // Scores.
  m.def("parse_answer", [](const std::string& response) -> std::optional<std::string> {
    const auto a = tcb::verifier::parse_answer(response);
    if (!a) return std::nullopt;
    return std::string(tcb::verifier::to_string(*a));
  });
  m.def("tcr", [](const std::vector<int>& tcs) { return tcb::verifier::compute_tcr(tcs); },
        py::arg("tcs"));
  m.def(
      "map_similarity",
      [](double s, double lo, double hi) { return tcb::consistency::map_similarity(s, {lo, hi}); },
      py::arg("similarity"), py::arg("lo") = 0.90, py::arg("hi") = 0.98);
  m.def(
      "tc_score_i2v",
      [](double pass_rate, double mean_mapped, double w1, double w2) {
        return tcb::consistency::tc_score_i2v(pass_rate, mean_mapped, {w1, w2});
      },
      py::arg("pass_rate"), py::arg("mean_mapped"), py::arg("w1") = 2.0 / 3.0,
      py::arg("w2") = 1.0 / 3.0);
  m.def(
      "consecutive_consistency",
      [](const std::vector<std::vector<float>>& frames, double lo, double hi) {
        return score_dict(tcb::consistency::consecutive_consistency(embeddings(frames, "py"), {lo, hi}));
      },
      py::arg("embeddings"), py::arg("lo") = 0.90, py::arg("hi") = 0.98);
  m.def(
      "framewise_consistency",
      [](const std::vector<std::vector<float>>& frames, const std::vector<std::vector<float>>& ref,
         double lo, double hi) {
        return score_dict(tcb::consistency::framewise_consistency(embeddings(frames, "py"),
                                                                  embeddings(ref, "py"), {lo, hi}));
      },
      py::arg("embeddings"), py::arg("reference"), py::arg("lo") = 0.90, py::arg("hi") = 0.98);
  m.def(
      "epe",
      [](const std::vector<FloatArray>& flows, const std::vector<FloatArray>& ref, bool resize) {
        return tcb::consistency::epe(flows_of(flows), flows_of(ref), resize);
      },
      py::arg("flows"), py::arg("reference"), py::arg("resize_reference") = false);
  m.def(
      "ate",
      [](const DoubleArray& traj, const DoubleArray& ref) {
        return tcb::consistency::ate(trajectory_of(traj), trajectory_of(ref));
      },
      py::arg("trajectory"), py::arg("reference"));

  // Human ratings.
  m.def(
      "rank_correlation",
      [](const std::vector<double>& metric, const std::vector<double>& human) {
        return correlation_dict(tcb::analysis::rank_correlation(metric, human));
      },
      py::arg("metric"), py::arg("human"));
  m.def(
      "aggregate_ratings",
      [](const std::vector<std::tuple<std::string, std::string, int, int>>& rows) {
        std::vector<tcb::analysis::HumanRating> ratings;
        for (const auto& [video, annotator, q1, q2] : rows) ratings.push_back({video, annotator, q1, q2});
        const auto agg = tcb::analysis::aggregate_ratings(ratings);
        py::dict videos;
        for (const auto& v : agg.videos) {
          py::dict d;
          d["annotators"] = v.annotators;
          d["mean_q1"] = v.mean_q1;
          d["mean_q2"] = v.mean_q2;
          d["completed"] = v.completed;
          d["consistency_eligible"] = v.consistency_eligible;
          videos[py::str(v.video_id)] = d;
        }
        py::dict discarded;
        for (const auto& d : agg.discarded) discarded[py::str(d.video_id)] = d.reason;
        py::dict out;
        out["videos"] = videos;
        out["discarded"] = discarded;
        return out;
      },
      py::arg("ratings"), "Rows of (video_id, annotator_id, q1, q2).");

  // Files produced by the CLI.
  m.def(
      "load_config",
      [](const std::optional<std::filesystem::path>& path) {
        return to_py(tcb::config::to_json(tcb::config::load_config(path)));
      },
      py::arg("path") = py::none());
  m.def(
      "score_verdicts",
      [](const std::filesystem::path& verdicts, const std::string& mode, const std::string& model,
         std::optional<std::filesystem::path> embeddings_dir, bool per_prompt_best) {
        tcb::pipeline::ScoreOptions options;
        if (mode == "i2v") {
          options.mode = tcb::pipeline::ScoreMode::kI2V;
        } else if (mode != "t2v") {
          throw tcb::ValidationError("mode must be t2v or i2v, got '" + mode + "'");
        }
        options.model = model;
        options.embeddings_dir = std::move(embeddings_dir);
        if (per_prompt_best) options.policy = tcb::verifier::ReplicatePolicy::kPerPromptBest;
        return to_py(tcb::pipeline::score_stage(tcb::verifier::load_verdicts(verdicts), options));
      },
      py::arg("verdicts"), py::arg("mode") = "t2v", py::arg("model") = "",
      py::arg("embeddings") = py::none(), py::arg("per_prompt_best") = false);
}
