#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diu/mat.hpp"

namespace diu {

struct EmbeddingNetwork;
class Dataset;
struct FoldSpec;

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

struct RocPoint {
  double far = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct VrResult {
  double far = 0.0;
  double value = 0.0;
  bool underresolved = false;  // set when n_impostor * far < 1
};

// FAR grid reported everywhere: 0.01%, 0.1%, 1%, 5%
inline constexpr std::array<double, 4> kFarGrid = {1e-4, 1e-3, 1e-2, 5e-2};

// Threshold sweep over the sorted score union; FAR(t) = fraction of impostor
// scores >= t, FRR(t) = fraction of genuine scores < t. Returns the linearly
// interpolated FAR = FRR crossing.
double eer(const ScoreSet& scores);

// Probability that a random genuine score beats a random impostor score,
// ties counted 0.5 (equals the trapezoidal ROC area).
double auc(const ScoreSet& scores);

// threshold = smallest observed score t with FAR(t) <= far_target (realized
// FAR never exceeds the target); value = fraction of genuine >= t.
VrResult vr_at_far(const ScoreSet& scores, double far_target);

// Fraction of probes whose true-identity gallery column holds the top
// similarity; ties for the top resolve to the lowest gallery index.
double rank1(const DMat& similarity, std::span<const int> probe_ids,
             std::span<const int> gallery_ids);

// One point per unique observed score, swept from the highest threshold down;
// far and tpr are both nondecreasing along the sweep.
std::vector<RocPoint> roc_curve(const ScoreSet& scores);

struct EvalReport {
  double auc = 0.0;
  double eer = 0.0;
  double rank1 = 0.0;
  std::vector<VrResult> vr_at_far;  // one entry per kFarGrid value
  std::vector<RocPoint> roc;
  int n_genuine = 0;
  int n_impostor = 0;
  int n_gallery = 0;
  int n_probe = 0;
};

EvalReport make_report(const ScoreSet& scores, const DMat& similarity,
                       std::span<const int> probe_ids, std::span<const int> gallery_ids);

struct ScoredProtocol {
  ScoreSet scores;
  DMat similarity;  // probe rows x gallery columns, clamped cosine
  std::vector<int> probe_ids;
  std::vector<int> gallery_ids;
};

// Embeds the enrollment (source) and probe (target) manifests through the
// given network only and scores every probe against every gallery entry.
ScoredProtocol score_protocol(const EmbeddingNetwork& net, const Dataset& dataset,
                              const FoldSpec& fold);

EvalReport evaluate_fold(const EmbeddingNetwork& net, const Dataset& dataset,
                         const FoldSpec& fold);

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

// Keys: auc, eer, rank1, vr_far_0p01, vr_far_0p1, vr_far_1, vr_far_5
// (vr suffixes name the FAR as a percentage).
std::map<std::string, MetricStats> aggregate_folds(const std::vector<EvalReport>& reports);

std::string report_to_json_text(const EvalReport& report);
EvalReport report_from_json_text(const std::string& text);

void write_roc_csv(const std::vector<RocPoint>& roc, const std::string& path);

}  // namespace diu
