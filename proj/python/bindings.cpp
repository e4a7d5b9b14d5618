// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lslab/data.hpp"
#include "lslab/errors.hpp"
#include "lslab/estimation.hpp"
#include "lslab/experiment.hpp"
#include "lslab/metrics.hpp"
#include "lslab/pruning.hpp"

namespace py = pybind11;
using namespace lslab;

namespace {

double py_schedule_ratio(int epoch, double target_ratio, int start_epoch, int ramp_epochs,
                         int total_epochs) {
  PruneSchedule s{target_ratio, start_epoch, ramp_epochs, total_epochs};
  s.validate();
  return schedule_ratio(epoch, s);
}

std::vector<double> py_softmax(const std::vector<double>& v) {
  Tape tape;
  Tensor t = tape.softmax(Tensor::from_data({static_cast<int>(v.size())}, v));
  return {t.data().begin(), t.data().end()};
}

double py_cross_entropy(const std::vector<std::vector<double>>& logits,
                        const std::vector<int>& targets, int pad_id) {
  if (logits.empty()) throw ValueError("cross_entropy: empty logits");
  int p = static_cast<int>(logits.size());
  int v = static_cast<int>(logits.front().size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(p) * v);
  for (const auto& row : logits) {
    if (static_cast<int>(row.size()) != v) throw ShapeError("cross_entropy: ragged logits");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  Tape tape;
  return tape.cross_entropy(Tensor::from_data({p, v}, flat), targets, pad_id).item();
}

std::vector<int> py_l1_prune(const std::vector<double>& values, double ratio) {
  Tensor b = Tensor::from_data({static_cast<int>(values.size()), 1}, values);
  Tensor mask = Tensor::full({static_cast<int>(values.size()), 1}, 1.0);
  PruneGroup g{"py", {{"", {Side::Encoder, 0, SiteKind::Q}, b, mask}}};
  l1_prune_group(g, ratio);
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : mask.data()) out.push_back(v == 0.0 ? 0 : 1);
  return out;
}

long py_trainable_param_count(const std::vector<std::pair<int, int>>& site_dims,
                              const std::vector<int>& ranks) {
  return trainable_param_count(site_dims, ranks);
}

std::string py_bucket(const std::string& src_type, const std::string& tgt_type) {
  return bucket_of(resource_from_string(src_type), resource_from_string(tgt_type));
}

std::vector<std::tuple<std::string, int, std::string>> py_enumerate_sites(int enc, int dec) {
  std::vector<std::tuple<std::string, int, std::string>> out;
  for (const LsloSite& s : enumerate_sites(enc, dec))
    out.emplace_back(to_string(s.side), s.layer, to_string(s.kind));
  return out;
}

std::map<std::string, int> py_parse_rank_policy(const std::string& text) {
  RankPolicy p = RankPolicy::parse(text);
  std::map<std::string, int> out;
  for (const auto& [type, rank] : p.rank_of) out[to_string(type)] = rank;
  return out;
}

std::string py_method_label(const std::string& policy, const std::string& strategy_suffix,
                            double gps_ratio) {
  std::optional<PruneSchedule> gps;
  if (gps_ratio > 0.0) gps = PruneSchedule{gps_ratio, 2, 8, 15};
  return method_label(RankPolicy::parse(policy), strategy_suffix, gps);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "core operations of the lslab laboratory";
  m.attr("__version__") = "0.1.0";

  // Translators run newest-first, so the base class registers first.
  py::register_exception<Error>(m, "LslabError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("schedule_ratio", &py_schedule_ratio, py::arg("epoch"), py::arg("target_ratio"),
        py::arg("start_epoch") = 2, py::arg("ramp_epochs") = 8, py::arg("total_epochs") = 15,
        "Gradual pruning ratio at a 1-based epoch.");
  m.def("importance_score", &importance_score, py::arg("total"), py::arg("pruned"),
        py::arg("ratio"), "pruned - ratio * total");
  m.def(
      "pearson_correlation",
      [](const std::vector<double>& xs, const std::vector<double>& ys, int permutations,
         std::uint64_t seed) {
        PearsonResult r = pearson_correlation(xs, ys, permutations, seed);
        return std::make_pair(r.r, r.p);
      },
      py::arg("xs"), py::arg("ys"), py::arg("permutations") = 10000,
      py::arg("seed") = 20240915, "Pearson r with a permutation-test p-value.");
  m.def("bleu", &bleu, py::arg("candidates"), py::arg("references"), py::arg("max_n") = 4,
        "Corpus-level BLEU over token-id sequences, 0..100.");
  m.def("softmax", &py_softmax, py::arg("values"));
  m.def("cross_entropy", &py_cross_entropy, py::arg("logits"), py::arg("targets"),
        py::arg("pad_id") = -1, "Mean NLL over non-pad positions.");
  m.def("l1_prune_mask", &py_l1_prune, py::arg("values"), py::arg("ratio"),
        "Mask (1 keep / 0 drop) for magnitude pruning at the given ratio.");
  m.def("trainable_param_count", &py_trainable_param_count, py::arg("site_dims"),
        py::arg("ranks"), "Sum over sites and ranks of d*r + r*k.");
  m.def("bucket_of", &py_bucket, py::arg("src_type"), py::arg("tgt_type"));
  m.def("enumerate_sites", &py_enumerate_sites, py::arg("encoder_layers"),
        py::arg("decoder_layers"));
  m.def("parse_rank_policy", &py_parse_rank_policy, py::arg("text"));
  m.def("method_label", &py_method_label, py::arg("rank_policy"), py::arg("strategy_suffix"),
        py::arg("gps_ratio") = 0.0);
}
