// Nearest-neighbour identification over the embedded (and transformed)
// gallery, and the biometric metrics: rank-1, CMC, ROC / AUC.
//
// Scores have distance semantics: lower is better. Ties in ranking are
// broken by the lower class index.

#pragma once

#include "mfkc/core.hpp"
#include "mfkc/features.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mfkc {

enum class Fusion { sum_normalized, min, vote };

inline std::string_view to_string(Fusion f) {
    switch (f) {
        case Fusion::sum_normalized: return "sum_normalized";
        case Fusion::min: return "min";
        case Fusion::vote: return "vote";
    }
    return "unknown";
}

inline Fusion fusion_from_string(std::string_view s) {
    if (s == "sum_normalized") return Fusion::sum_normalized;
    if (s == "min") return Fusion::min;
    if (s == "vote") return Fusion::vote;
    throw ParameterError("unknown fusion rule '" + std::string(s) + "'");
}

struct ScoreMatrix {
    Matrix scores;  // n_probe x n_classes
    std::vector<int> probe_labels;
    std::vector<int> class_ids;

    void validate() const {
        if (static_cast<Index>(probe_labels.size()) != scores.rows() ||
            static_cast<Index>(class_ids.size()) != scores.cols())
            throw InputError("score matrix: label / class counts do not match the matrix");
        if (!scores.allFinite()) throw InputError("score matrix: non-finite score");
        auto sorted = class_ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InputError("score matrix: duplicate class id");
    }
};

/// Embedded points of one feature-kernel pair.
struct LabeledPoints {
    Matrix points;
    std::vector<int> labels;
};

/// Per class, the mean of the k smallest Euclidean distances from each probe
/// to that class's gallery points (k = 1: nearest neighbour).
inline Matrix class_distances(const LabeledPoints& gallery, const Matrix& probes, const std::vector<int>& class_ids,
                              int k = 1) {
    if (gallery.points.cols() != probes.cols()) throw InputError("knn: gallery and probe dimensions differ");
    if (static_cast<Index>(gallery.labels.size()) != gallery.points.rows())
        throw InputError("knn: gallery label count mismatch");
    if (k < 1) throw ParameterError("knn: k must be >= 1");
    Matrix out(probes.rows(), static_cast<Index>(class_ids.size()));
    std::vector<std::vector<Index>> members(class_ids.size());
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
        for (std::size_t i = 0; i < gallery.labels.size(); ++i)
            if (gallery.labels[i] == class_ids[c]) members[c].push_back(static_cast<Index>(i));
        if (members[c].empty())
            throw InputError("knn: gallery class " + std::to_string(class_ids[c]) + " has no samples");
    }
    std::vector<double> dist;
    for (Index p = 0; p < probes.rows(); ++p) {
        for (std::size_t c = 0; c < class_ids.size(); ++c) {
            dist.clear();
            for (Index g : members[c]) dist.push_back((gallery.points.row(g) - probes.row(p)).norm());
            const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
            double acc = 0.0;
            for (std::size_t i = 0; i < kk; ++i) acc += dist[i];
            out(p, static_cast<Index>(c)) = acc / static_cast<double>(kk);
        }
    }
    return out;
}

/// Global min-max scaling to [0, 1]; constant matrices map to zero.
inline Matrix minmax_normalize(const Matrix& m) {
    const double lo = m.minCoeff();
    const double hi = m.maxCoeff();
    if (!(hi > lo)) return Matrix::Zero(m.rows(), m.cols());
    return (m.array() - lo) / (hi - lo);
}

/// Index of the smallest entry of a row; lowest index on ties.
inline Index argmin_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    Index best = 0;
    for (Index c = 1; c < row.size(); ++c)
        if (row(c) < row(best)) best = c;
    return best;
}

/// Fuses per-pair class distances into one score matrix.
///   sum_normalized: sum of per-pair min-max-normalized distances
///   min:            elementwise minimum of the normalized distances
///   vote:           1 - (pairs whose nearest class is c) / P
inline Matrix fuse(const std::vector<Matrix>& per_pair, Fusion rule) {
    if (per_pair.empty()) throw ParameterError("fusion needs at least one feature-kernel pair");
    const Index rows = per_pair.front().rows();
    const Index cols = per_pair.front().cols();
    for (const auto& m : per_pair)
        if (m.rows() != rows || m.cols() != cols) throw InputError("fusion: per-pair score shapes differ");
    Matrix out;
    switch (rule) {
        case Fusion::sum_normalized:
            out = Matrix::Zero(rows, cols);
            for (const auto& m : per_pair) out += minmax_normalize(m);
            break;
        case Fusion::min:
            out = minmax_normalize(per_pair.front());
            for (std::size_t i = 1; i < per_pair.size(); ++i) out = out.cwiseMin(minmax_normalize(per_pair[i]));
            break;
        case Fusion::vote:
            out = Matrix::Ones(rows, cols);
            for (const auto& m : per_pair)
                for (Index r = 0; r < rows; ++r) out(r, argmin_lowest(m.row(r))) -= 1.0 / per_pair.size();
            break;
    }
    return out;
}

/// 1-NN (or k-NN) class distances per pair, fused across pairs.
inline ScoreMatrix knn_score(const std::vector<LabeledPoints>& gallery_per_pair, const std::vector<Matrix>& probe_per_pair,
                             const std::vector<int>& probe_labels, Fusion rule = Fusion::sum_normalized, int k = 1) {
    if (gallery_per_pair.empty()) throw ParameterError("knn_score: at least one pair is required");
    if (gallery_per_pair.size() != probe_per_pair.size()) throw InputError("knn_score: gallery/probe pair counts differ");
    ScoreMatrix sm;
    sm.class_ids = distinct_labels(gallery_per_pair.front().labels);
    sm.probe_labels = probe_labels;
    std::vector<Matrix> per_pair;
    for (std::size_t p = 0; p < gallery_per_pair.size(); ++p) {
        if (probe_per_pair[p].rows() != static_cast<Index>(probe_labels.size()))
            throw InputError("knn_score: probe label count mismatch");
        per_pair.push_back(class_distances(gallery_per_pair[p], probe_per_pair[p], sm.class_ids, k));
    }
    sm.scores = fuse(per_pair, rule);
    sm.validate();
    return sm;
}

namespace detail {

inline Index class_position(const ScoreMatrix& sm, int label) {
    const auto it = std::find(sm.class_ids.begin(), sm.class_ids.end(), label);
    return it == sm.class_ids.end() ? -1 : static_cast<Index>(it - sm.class_ids.begin());
}

// 0-based rank of the true class under (score, class index) ordering; -1 if
// the probe's class is not enrolled.
inline Index true_rank(const ScoreMatrix& sm, Index probe) {
    const Index t = class_position(sm, sm.probe_labels[static_cast<std::size_t>(probe)]);
    if (t < 0) return -1;
    const double s = sm.scores(probe, t);
    Index rank = 0;
    for (Index c = 0; c < sm.scores.cols(); ++c) {
        const double v = sm.scores(probe, c);
        if (v < s || (v == s && c < t)) ++rank;
    }
    return rank;
}

}  // namespace detail

inline double rank1(const ScoreMatrix& sm) {
    sm.validate();
    if (sm.scores.rows() == 0) return 0.0;
    Index hits = 0;
    for (Index p = 0; p < sm.scores.rows(); ++p) hits += detail::true_rank(sm, p) == 0;
    return static_cast<double>(hits) / static_cast<double>(sm.scores.rows());
}

/// cmc[r]: fraction of probes whose true class is among the best r + 1.
inline Vector cmc(const ScoreMatrix& sm) {
    sm.validate();
    const Index n_classes = sm.scores.cols();
    Vector counts = Vector::Zero(n_classes);
    for (Index p = 0; p < sm.scores.rows(); ++p) {
        const Index r = detail::true_rank(sm, p);
        if (r >= 0) counts(r) += 1.0;
    }
    Vector out(n_classes);
    double acc = 0.0;
    for (Index r = 0; r < n_classes; ++r) {
        acc += counts(r);
        out(r) = sm.scores.rows() > 0 ? acc / static_cast<double>(sm.scores.rows()) : 0.0;
    }
    return out;
}

struct RocPoint {
    double far = 0.0;
    double tar = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // starts at (0, 0), sorted by far
    double auc = 0.0;
};

/// Threshold sweep over every distinct score (acceptance: score <= threshold),
/// preceded by the reject-all point (0, 0); AUC by the trapezoid rule.
inline RocCurve roc(std::vector<double> genuine, std::vector<double> impostor) {
    if (genuine.empty() || impostor.empty()) throw InputError("roc: genuine and impostor lists must be non-empty");
    std::sort(genuine.begin(), genuine.end());
    std::sort(impostor.begin(), impostor.end());
    std::vector<double> thresholds;
    thresholds.reserve(genuine.size() + impostor.size());
    std::merge(genuine.begin(), genuine.end(), impostor.begin(), impostor.end(), std::back_inserter(thresholds));
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    const auto ng = static_cast<double>(genuine.size());
    const auto ni = static_cast<double>(impostor.size());
    for (double th : thresholds) {
        const auto g = std::upper_bound(genuine.begin(), genuine.end(), th) - genuine.begin();
        const auto i = std::upper_bound(impostor.begin(), impostor.end(), th) - impostor.begin();
        curve.points.push_back({static_cast<double>(i) / ni, static_cast<double>(g) / ng});
    }
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        curve.auc += (b.far - a.far) * 0.5 * (a.tar + b.tar);
    }
    return curve;
}

/// Genuine = score of the true class, impostor = scores of all other classes.
inline std::pair<std::vector<double>, std::vector<double>> verification_scores(const ScoreMatrix& sm) {
    std::vector<double> genuine, impostor;
    for (Index p = 0; p < sm.scores.rows(); ++p) {
        const Index t = detail::class_position(sm, sm.probe_labels[static_cast<std::size_t>(p)]);
        for (Index c = 0; c < sm.scores.cols(); ++c) (c == t ? genuine : impostor).push_back(sm.scores(p, c));
    }
    return {genuine, impostor};
}

struct EvalReport {
    double rank1 = 0.0;
    Vector cmc;
    std::vector<RocPoint> roc_points;
    double auc = 0.0;
    /// Free-form key/value facts recorded alongside the metrics (mode,
    /// whether DA targets overlap the evaluation probes, ...).
    std::vector<std::pair<std::string, std::string>> notes;

    void validate() const {
        if (roc_points.empty()) throw InputError("report: empty ROC curve");
        if (cmc.size() < 1) throw InputError("report: empty CMC curve");
        for (Index i = 1; i < cmc.size(); ++i)
            if (cmc(i) < cmc(i - 1)) throw InputError("report: CMC must be non-decreasing");
        for (std::size_t i = 1; i < roc_points.size(); ++i)
            if (roc_points[i].far < roc_points[i - 1].far || roc_points[i].tar < roc_points[i - 1].tar)
                throw InputError("report: ROC points must be sorted with non-decreasing TAR");
    }
};

inline EvalReport evaluate(const ScoreMatrix& sm) {
    EvalReport r;
    r.rank1 = rank1(sm);
    r.cmc = cmc(sm);
    const auto [genuine, impostor] = verification_scores(sm);
    if (!genuine.empty() && !impostor.empty()) {
        auto curve = roc(genuine, impostor);
        r.roc_points = std::move(curve.points);
        r.auc = curve.auc;
    }
    return r;
}

// ---------------------------------------------------------------------------
// CSV report: summary.csv, cmc.csv, roc.csv in one directory.

inline void export_report(const EvalReport& report, const std::filesystem::path& dir) {
    report.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw InputError("cannot write report file " + (dir / name).string());
        return out;
    };
    {
        auto out = open("summary.csv");
        out << "key,value\n";
        out << "rank1," << format_double(report.rank1) << "\n";
        out << "auc," << format_double(report.auc) << "\n";
        for (const auto& [k, v] : report.notes) out << k << "," << v << "\n";
    }
    {
        auto out = open("cmc.csv");
        out << "rank,rate\n";
        for (Index r = 0; r < report.cmc.size(); ++r) out << (r + 1) << "," << format_double(report.cmc(r)) << "\n";
    }
    {
        auto out = open("roc.csv");
        out << "far,tar\n";
        for (const auto& p : report.roc_points) out << format_double(p.far) << "," << format_double(p.tar) << "\n";
    }
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> read_csv_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::pair<std::string, std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw InputError(path.string() + ": malformed line '" + line + "'");
        rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    }
    return rows;
}

}  // namespace detail

inline EvalReport read_report(const std::filesystem::path& dir) {
    EvalReport r;
    for (const auto& [k, v] : detail::read_csv_pairs(dir / "summary.csv")) {
        if (k == "rank1") r.rank1 = std::stod(v);
        else if (k == "auc") r.auc = std::stod(v);
        else r.notes.emplace_back(k, v);
    }
    const auto cmc_rows = detail::read_csv_pairs(dir / "cmc.csv");
    r.cmc.resize(static_cast<Index>(cmc_rows.size()));
    for (std::size_t i = 0; i < cmc_rows.size(); ++i) r.cmc(static_cast<Index>(i)) = std::stod(cmc_rows[i].second);
    for (const auto& [far, tar] : detail::read_csv_pairs(dir / "roc.csv"))
        r.roc_points.push_back({std::stod(far), std::stod(tar)});
    r.validate();
    return r;
}

}  // namespace mfkc
