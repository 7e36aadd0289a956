#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <vector>

#include "tml/cam.hpp"
#include "tml/common.hpp"
#include "tml/experiment.hpp"
#include "tml/losses.hpp"
#include "tml/metrics.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

tml::Tensor tensor_from_2d(const DoubleArray& a, const char* name) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(name) + " must be 2-D");
  tml::Tensor t({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

tml::Tensor tensor_from_3d(const DoubleArray& a, const char* name) {
  if (a.ndim() != 3) throw std::invalid_argument(std::string(name) + " must be 3-D");
  tml::Tensor t({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                 static_cast<int>(a.shape(2))});
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array_t<double> array_from_2d(const tml::Tensor& t) {
  py::array_t<double> a({t.dim(0), t.dim(1)});
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

std::vector<tml::ScoredFrame> scored_from(const std::vector<double>& scores,
                                          const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length");
  }
  std::vector<tml::ScoredFrame> out;
  out.reserve(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    out.push_back({0, static_cast<int>(i), labels[i] == 1 ? 0 : -1, labels[i], scores[i]});
  }
  return out;
}

py::dict batch_all_py(const DoubleArray& embeddings, const std::vector<int>& labels, double margin,
                      bool normalize) {
  const tml::BatchAllResult r = tml::batch_all_loss(
      tml::EmbeddingBatch(tensor_from_2d(embeddings, "embeddings"), labels), margin, normalize);
  py::dict d;
  d["loss_sum"] = r.loss_sum;
  d["loss_mean_active"] = r.loss_mean_active;
  d["total_triplets"] = r.total_triplets;
  d["active_triplets"] = r.active_triplets;
  d["grad_sum"] = array_from_2d(r.grad_sum);
  d["grad_mean_active"] = array_from_2d(r.grad_mean_active);
  return d;
}

py::dict batch_hard_py(const DoubleArray& embeddings, const std::vector<int>& labels, double margin,
                       bool normalize) {
  const tml::BatchHardResult r = tml::batch_hard_loss(
      tml::EmbeddingBatch(tensor_from_2d(embeddings, "embeddings"), labels), margin, normalize);
  py::dict d;
  d["loss_sum"] = r.loss_sum;
  d["loss_mean"] = r.loss_mean;
  d["num_anchors"] = r.num_anchors;
  d["active_terms"] = r.active_terms;
  d["grad_sum"] = array_from_2d(r.grad_sum);
  d["grad_mean"] = array_from_2d(r.grad_mean);
  d["selected"] = r.selected;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "metric-learning core: losses, ranking metrics, activation maps";
  m.attr("__version__") = TML_VERSION;

  py::register_exception<tml::ConfigError>(m, "ConfigError");

  m.def("batch_all", &batch_all_py, py::arg("embeddings"), py::arg("labels"),
        py::arg("margin") = 0.2, py::arg("normalize") = false,
        "Triplet loss summed over all valid (anchor, positive, negative) triples.");
  m.def("batch_hard", &batch_hard_py, py::arg("embeddings"), py::arg("labels"),
        py::arg("margin") = 0.2, py::arg("normalize") = false,
        "One hinge term per anchor with its hardest positive and negative.");
  m.def(
      "bce",
      [](double p, int y) {
        const tml::BceResult r = tml::bce_loss(p, y);
        return py::make_tuple(r.loss, r.dloss_dp);
      },
      py::arg("p"), py::arg("y"), "Binary cross entropy and its derivative, clamped inputs.");

  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return tml::roc_and_auc(scored_from(scores, labels)).auc;
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "roc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const tml::RocCurve c = tml::roc_and_auc(scored_from(scores, labels));
        std::vector<py::tuple> pts;
        pts.reserve(c.points.size());
        for (const tml::RocPoint& p : c.points) {
          pts.push_back(py::make_tuple(p.threshold, p.fpr, p.tpr));
        }
        return pts;
      },
      py::arg("scores"), py::arg("labels"), "(threshold, fpr, tpr) rows, threshold descending.");
  m.def(
      "recall_at_specificity",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double target) {
        const tml::OperatingPoint op =
            tml::recall_at_specificity(scored_from(scores, labels), target);
        py::dict d;
        d["recall"] = op.recall;
        d["threshold"] = op.threshold;
        d["specificity"] = op.specificity;
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("target"));
  m.def(
      "threshold_metrics",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
        const tml::ThresholdMetrics tm =
            tml::threshold_metrics(scored_from(scores, labels), threshold);
        py::dict d;
        d["accuracy"] = tm.accuracy;
        d["sensitivity"] = tm.sensitivity;
        d["specificity"] = tm.specificity;
        d["precision"] = tm.precision;
        d["tp"] = tm.tp;
        d["fp"] = tm.fp;
        d["tn"] = tm.tn;
        d["fn"] = tm.fn;
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("threshold"));

  m.def(
      "cam",
      [](const DoubleArray& feature_maps, const std::vector<double>& weights) {
        const tml::Tensor c =
            tml::compute_cam(tensor_from_3d(feature_maps, "feature_maps"), weights);
        return array_from_2d(c);
      },
      py::arg("feature_maps"), py::arg("weights"),
      "Channel-weighted sum of (K, h, w) feature maps.");
  m.def(
      "upsample",
      [](const DoubleArray& grid, int out_h, int out_w) {
        return array_from_2d(
            tml::upsample_bilinear(tensor_from_2d(grid, "grid"), out_h, out_w));
      },
      py::arg("grid"), py::arg("out_h"), py::arg("out_w"), "Align-corners bilinear upsampling.");

  m.def(
      "run_gen_data",
      [](const std::string& config_json, const std::string& out, int jobs) {
        tml::cmd_gen_data(tml::parse_experiment_config(config_json), out, jobs);
      },
      py::arg("config_json"), py::arg("out"), py::arg("jobs") = 1);
  m.def(
      "run_train",
      [](const std::string& config_json, const std::string& out, int jobs) {
        tml::cmd_train(tml::parse_experiment_config(config_json), out, jobs);
      },
      py::arg("config_json"), py::arg("out"), py::arg("jobs") = 1);
  m.def(
      "run_eval",
      [](const std::string& config_json, const std::string& out, int jobs) {
        tml::cmd_eval(tml::parse_experiment_config(config_json), out, jobs);
      },
      py::arg("config_json"), py::arg("out"), py::arg("jobs") = 1);
}
