#include "diu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "diu/backbone.hpp"
#include "diu/errors.hpp"
#include "diu/losses.hpp"
#include "diu/synthdata.hpp"

namespace diu {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_scores(const ScoreSet& s) {
  if (s.genuine.empty() || s.impostor.empty()) {
    throw MetricError("score set needs at least one genuine and one impostor score");
  }
  for (double x : s.genuine)
    if (!std::isfinite(x)) throw MetricError("non-finite genuine score");
  for (double x : s.impostor)
    if (!std::isfinite(x)) throw MetricError("non-finite impostor score");
}

std::vector<double> sorted_union(const ScoreSet& s) {
  std::vector<double> t;
  t.reserve(s.genuine.size() + s.impostor.size());
  t.insert(t.end(), s.genuine.begin(), s.genuine.end());
  t.insert(t.end(), s.impostor.begin(), s.impostor.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

// fraction of sorted `v` that is >= t
double frac_at_or_above(const std::vector<double>& v, double t) {
  const auto it = std::lower_bound(v.begin(), v.end(), t);
  return static_cast<double>(v.end() - it) / static_cast<double>(v.size());
}

// fraction of sorted `v` that is < t
double frac_below(const std::vector<double>& v, double t) {
  const auto it = std::lower_bound(v.begin(), v.end(), t);
  return static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
}

}  // namespace

double eer(const ScoreSet& scores) {
  check_scores(scores);
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  const std::vector<double> thresholds = sorted_union(scores);

  // FAR - FRR is nonincreasing along the sweep: walk to the first sign change.
  double prev_far = 1.0, prev_frr = 0.0;  // at t = min score
  for (double t : thresholds) {
    const double far = frac_at_or_above(imp, t);
    const double frr = frac_below(gen, t);
    const double diff = far - frr;
    if (diff <= 0.0) {
      if (diff == 0.0) return far;
      const double d1 = prev_far - prev_frr;   // >= 0
      const double d2 = frr - far;             // > 0
      const double s = d1 / (d1 + d2);
      return prev_far + s * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  // virtual threshold above every score: FAR = 0, FRR = 1
  const double d1 = prev_far - prev_frr;
  const double d2 = 1.0;
  const double s = d1 / (d1 + d2);
  return prev_far + s * (0.0 - prev_far);
}

double auc(const ScoreSet& scores) {
  check_scores(scores);
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  // wins + half-ties via two binary searches per genuine score
  double u = 0.0;
  for (double g : gen) {
    const auto lo = std::lower_bound(imp.begin(), imp.end(), g);
    const auto hi = std::upper_bound(imp.begin(), imp.end(), g);
    u += static_cast<double>(lo - imp.begin());          // impostors strictly below
    u += 0.5 * static_cast<double>(hi - lo);             // ties
  }
  return u / (static_cast<double>(gen.size()) * static_cast<double>(imp.size()));
}

VrResult vr_at_far(const ScoreSet& scores, double far_target) {
  if (!(far_target > 0.0 && far_target < 1.0)) {
    throw MetricError("far_target must be in (0, 1)");
  }
  check_scores(scores);
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  VrResult out;
  out.far = far_target;
  out.underresolved = static_cast<double>(imp.size()) * far_target < 1.0;

  // smallest observed score whose FAR is within the target
  for (double t : sorted_union(scores)) {
    if (frac_at_or_above(imp, t) <= far_target) {
      out.value = frac_at_or_above(gen, t);
      return out;
    }
  }
  out.value = 0.0;  // no admissible threshold among the observed scores
  return out;
}

double rank1(const DMat& similarity, std::span<const int> probe_ids,
             std::span<const int> gallery_ids) {
  if (similarity.rows != static_cast<int>(probe_ids.size()) ||
      similarity.cols != static_cast<int>(gallery_ids.size())) {
    throw ShapeError("similarity matrix shape does not match probe/gallery id counts");
  }
  if (similarity.rows == 0 || similarity.cols == 0) {
    throw MetricError("rank1 needs a non-empty similarity matrix");
  }
  int correct = 0;
  for (int p = 0; p < similarity.rows; ++p) {
    bool found = false;
    for (int g = 0; g < similarity.cols; ++g) {
      if (gallery_ids[g] == probe_ids[p]) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ProtocolError("probe identity " + std::to_string(probe_ids[p]) +
                          " is missing from the gallery");
    }
    const double* row = similarity.row(p);
    int best = 0;  // ties resolve to the lowest gallery index
    for (int g = 1; g < similarity.cols; ++g) {
      if (row[g] > row[best]) best = g;
    }
    if (gallery_ids[best] == probe_ids[p]) ++correct;
  }
  return static_cast<double>(correct) / similarity.rows;
}

std::vector<RocPoint> roc_curve(const ScoreSet& scores) {
  check_scores(scores);
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  std::vector<double> thresholds = sorted_union(scores);
  std::vector<RocPoint> roc;
  roc.reserve(thresholds.size());
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    RocPoint p;
    p.threshold = *it;
    p.far = frac_at_or_above(imp, *it);
    p.tpr = frac_at_or_above(gen, *it);
    roc.push_back(p);
  }
  return roc;
}

EvalReport make_report(const ScoreSet& scores, const DMat& similarity,
                       std::span<const int> probe_ids, std::span<const int> gallery_ids) {
  EvalReport r;
  r.auc = auc(scores);
  r.eer = eer(scores);
  r.rank1 = rank1(similarity, probe_ids, gallery_ids);
  for (double far : kFarGrid) r.vr_at_far.push_back(vr_at_far(scores, far));
  r.roc = roc_curve(scores);
  r.n_genuine = static_cast<int>(scores.genuine.size());
  r.n_impostor = static_cast<int>(scores.impostor.size());
  r.n_gallery = static_cast<int>(gallery_ids.size());
  r.n_probe = static_cast<int>(probe_ids.size());
  return r;
}

ScoredProtocol score_protocol(const EmbeddingNetwork& net, const Dataset& dataset,
                              const FoldSpec& fold) {
  ScoredProtocol out;

  const int h = net.config.input_height;
  const int w = net.config.input_width;
  const size_t px = static_cast<size_t>(h) * w * 3;

  auto embed_manifest = [&](const std::vector<SampleRef>& refs, std::vector<int>& ids) {
    std::vector<float> batch(refs.size() * px);
    for (size_t i = 0; i < refs.size(); ++i) {
      const std::span<const float> img = dataset.image_by_path(refs[i].path);
      std::copy(img.begin(), img.end(), batch.begin() + i * px);
      ids.push_back(refs[i].identity);
    }
    return forward(net, batch, static_cast<int>(refs.size()));
  };

  const FMat gallery = embed_manifest(fold.enrollment, out.gallery_ids);
  const FMat probes = embed_manifest(fold.probes, out.probe_ids);

  const DMat gallery_d = to_double(gallery);
  const DMat probes_d = to_double(probes);

  out.similarity = DMat(probes_d.rows, gallery_d.rows);
  for (int p = 0; p < probes_d.rows; ++p) {
    for (int g = 0; g < gallery_d.rows; ++g) {
      const double c = cosine_similarity({probes_d.row(p), static_cast<size_t>(probes_d.cols)},
                                         {gallery_d.row(g), static_cast<size_t>(gallery_d.cols)},
                                         1e-12, /*clamp=*/true);
      out.similarity.at(p, g) = c;
      if (out.probe_ids[p] == out.gallery_ids[g]) {
        out.scores.genuine.push_back(c);
      } else {
        out.scores.impostor.push_back(c);
      }
    }
  }
  return out;
}

EvalReport evaluate_fold(const EmbeddingNetwork& net, const Dataset& dataset,
                         const FoldSpec& fold) {
  const ScoredProtocol sp = score_protocol(net, dataset, fold);
  return make_report(sp.scores, sp.similarity, sp.probe_ids, sp.gallery_ids);
}

std::map<std::string, MetricStats> aggregate_folds(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw MetricError("aggregate_folds needs at least one report");

  auto vr_key = [](double far) {
    if (far == 1e-4) return std::string("vr_far_0p01");
    if (far == 1e-3) return std::string("vr_far_0p1");
    if (far == 1e-2) return std::string("vr_far_1");
    if (far == 5e-2) return std::string("vr_far_5");
    return "vr_far_" + std::to_string(far);
  };

  std::map<std::string, std::vector<double>> values;
  for (const EvalReport& r : reports) {
    values["auc"].push_back(r.auc);
    values["eer"].push_back(r.eer);
    values["rank1"].push_back(r.rank1);
    for (const VrResult& v : r.vr_at_far) values[vr_key(v.far)].push_back(v.value);
  }

  std::map<std::string, MetricStats> stats;
  for (auto& [key, xs] : values) {
    MetricStats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
    stats[key] = s;
  }
  return stats;
}

std::string report_to_json_text(const EvalReport& r) {
  ordered_json j;
  j["auc"] = r.auc;
  j["eer"] = r.eer;
  j["rank1"] = r.rank1;
  j["vr_at_far"] = ordered_json::array();
  for (const VrResult& v : r.vr_at_far) {
    j["vr_at_far"].push_back({{"far", v.far}, {"value", v.value}, {"underresolved", v.underresolved}});
  }
  j["n_genuine"] = r.n_genuine;
  j["n_impostor"] = r.n_impostor;
  j["n_gallery"] = r.n_gallery;
  j["n_probe"] = r.n_probe;
  j["roc"] = ordered_json::array();
  for (const RocPoint& p : r.roc) j["roc"].push_back({p.far, p.tpr, p.threshold});
  return j.dump(2) + "\n";
}

EvalReport report_from_json_text(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  EvalReport r;
  r.auc = j.at("auc").get<double>();
  r.eer = j.at("eer").get<double>();
  r.rank1 = j.at("rank1").get<double>();
  for (const auto& v : j.at("vr_at_far")) {
    VrResult e;
    e.far = v.at("far").get<double>();
    e.value = v.at("value").get<double>();
    e.underresolved = v.at("underresolved").get<bool>();
    r.vr_at_far.push_back(e);
  }
  r.n_genuine = j.at("n_genuine").get<int>();
  r.n_impostor = j.at("n_impostor").get<int>();
  r.n_gallery = j.at("n_gallery").get<int>();
  r.n_probe = j.at("n_probe").get<int>();
  for (const auto& p : j.at("roc")) {
    r.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  return r;
}

void write_roc_csv(const std::vector<RocPoint>& roc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ROC csv: " + path);
  out << "far,tpr,threshold\n";
  for (const RocPoint& p : roc) out << p.far << "," << p.tpr << "," << p.threshold << "\n";
}

}  // namespace diu
