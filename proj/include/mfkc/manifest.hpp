// Dataset manifests: a line-oriented text file.
//
//   # comment
//   profile <name>
//   features <tag> gallery|probe <csv>
//   gallery <image> <subject>
//   probe <image> <subject>
//   target <probe-ref> <subject>
//
// Paths are relative to the manifest's directory. A manifest with only
// `features` lines takes its entries from the gallery/probe CSV rows; those
// entries are referenced as "#<row>". Entry order is file order.

#pragma once

#include "mfkc/config.hpp"
#include "mfkc/core.hpp"
#include "mfkc/features.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mfkc {

struct ManifestEntry {
    std::string ref;  // image path (resolved) or "#<row>"
    int subject = 0;
    int line = 0;     // 0 when derived from a CSV
};

struct FeatureFiles {
    std::filesystem::path gallery;
    std::filesystem::path probe;
};

struct DatasetManifest {
    std::string profile = "custom";
    std::filesystem::path source;
    std::vector<ManifestEntry> gallery;
    std::vector<ManifestEntry> probe;
    std::map<std::string, FeatureFiles> feature_files;
    std::vector<Index> pinned_targets;  // probe indices, ascending

    [[nodiscard]] bool has_images() const { return !gallery.empty() && gallery.front().line > 0; }

    [[nodiscard]] std::vector<int> gallery_labels() const {
        std::vector<int> out;
        for (const auto& e : gallery) out.push_back(e.subject);
        return out;
    }
    [[nodiscard]] std::vector<int> probe_labels() const {
        std::vector<int> out;
        for (const auto& e : probe) out.push_back(e.subject);
        return out;
    }
};

namespace detail {

[[noreturn]] inline void manifest_error(const std::filesystem::path& path, int line, const std::string& msg) {
    throw InputError("manifest " + path.string() + ":" + std::to_string(line) + ": " + msg);
}

inline int parse_subject(const std::string& tok, const std::filesystem::path& path, int line) {
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used == tok.size() && v >= 0 && v <= std::numeric_limits<int>::max()) return static_cast<int>(v);
    } catch (const std::exception&) {
    }
    manifest_error(path, line, "subject id '" + tok + "' is not a non-negative integer");
}

inline bool is_row_ref(const std::string& t) {
    return t.size() > 1 && t[0] == '#' &&
           std::all_of(t.begin() + 1, t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline std::vector<int> csv_labels(const std::filesystem::path& csv, const std::string& tag) {
    return load_precomputed(csv, tag).labels;
}

/// Fisher-Yates with raw engine output, so the draw is identical on every
/// standard library.
inline void seeded_shuffle(std::vector<Index>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
}

}  // namespace detail

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.source = path;
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    struct TargetLine {
        std::string ref;
        int subject;
        int line;
    };
    std::vector<TargetLine> targets;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::istringstream ss(raw);
        std::vector<std::string> tok;
        for (std::string t; ss >> t;) {
            if (t[0] == '#' && !detail::is_row_ref(t)) break;  // comment
            tok.push_back(t);
        }
        if (tok.empty()) continue;
        const std::string& kw = tok[0];
        if (kw == "profile") {
            if (tok.size() != 2) detail::manifest_error(path, line, "expected 'profile <name>'");
            m.profile = tok[1];
        } else if (kw == "features") {
            if (tok.size() != 4) detail::manifest_error(path, line, "expected 'features <tag> gallery|probe <csv>'");
            if (!is_known_feature_tag(tok[1])) detail::manifest_error(path, line, "unknown feature tag '" + tok[1] + "'");
            const auto csv = resolve(tok[3]);
            if (!std::filesystem::exists(csv)) detail::manifest_error(path, line, "missing file " + csv.string());
            auto& ff = m.feature_files[tok[1]];
            if (tok[2] == "gallery") ff.gallery = csv;
            else if (tok[2] == "probe") ff.probe = csv;
            else detail::manifest_error(path, line, "split must be 'gallery' or 'probe', got '" + tok[2] + "'");
        } else if (kw == "gallery" || kw == "probe") {
            if (tok.size() != 3) detail::manifest_error(path, line, "expected '" + kw + " <image> <subject>'");
            const auto img = resolve(tok[1]);
            if (!std::filesystem::exists(img)) detail::manifest_error(path, line, "missing file " + img.string());
            (kw == "gallery" ? m.gallery : m.probe)
                .push_back({img.string(), detail::parse_subject(tok[2], path, line), line});
        } else if (kw == "target") {
            if (tok.size() != 3) detail::manifest_error(path, line, "expected 'target <probe-ref> <subject>'");
            targets.push_back({tok[1], detail::parse_subject(tok[2], path, line), line});
        } else {
            detail::manifest_error(path, line, "unknown directive '" + kw + "'");
        }
    }

    for (const auto& [tag, ff] : m.feature_files)
        if (ff.gallery.empty() || ff.probe.empty())
            throw InputError("manifest " + path.string() + ": feature '" + tag + "' needs both gallery and probe files");

    if (m.gallery.empty() && m.probe.empty() && !m.feature_files.empty()) {
        const auto& [tag, ff] = *m.feature_files.begin();
        const auto g = detail::csv_labels(ff.gallery, tag);
        const auto p = detail::csv_labels(ff.probe, tag);
        for (std::size_t i = 0; i < g.size(); ++i) m.gallery.push_back({"#" + std::to_string(i), g[i], 0});
        for (std::size_t i = 0; i < p.size(); ++i) m.probe.push_back({"#" + std::to_string(i), p[i], 0});
    }
    if (m.gallery.empty()) throw InputError("manifest " + path.string() + ": empty gallery");
    if (m.probe.empty()) throw InputError("manifest " + path.string() + ": empty probe set");

    std::set<int> gallery_subjects;
    for (const auto& e : m.gallery) gallery_subjects.insert(e.subject);
    for (std::size_t i = 0; i < m.probe.size(); ++i) {
        const auto& e = m.probe[i];
        if (!gallery_subjects.count(e.subject)) {
            if (e.line > 0) detail::manifest_error(path, e.line, "probe subject " + std::to_string(e.subject) + " is not in the gallery");
            throw InputError("manifest " + path.string() + ": probe row " + std::to_string(i) + " has subject " +
                             std::to_string(e.subject) + " which is not in the gallery");
        }
    }

    std::set<Index> pinned;
    for (const auto& t : targets) {
        Index idx = -1;
        if (detail::is_row_ref(t.ref)) {
            idx = std::stol(t.ref.substr(1));
            if (idx >= static_cast<Index>(m.probe.size())) idx = -1;
        } else {
            const std::string r = resolve(t.ref).string();
            for (std::size_t i = 0; i < m.probe.size(); ++i)
                if (m.probe[i].ref == r) idx = static_cast<Index>(i);
        }
        if (idx < 0) detail::manifest_error(path, t.line, "target '" + t.ref + "' does not name a probe entry");
        if (m.probe[static_cast<std::size_t>(idx)].subject != t.subject)
            detail::manifest_error(path, t.line, "target subject " + std::to_string(t.subject) +
                                                     " disagrees with the probe entry's subject");
        pinned.insert(idx);
    }
    m.pinned_targets.assign(pinned.begin(), pinned.end());
    return m;
}

/// DA target probe indices (ascending). Pinned targets win; otherwise
/// `target_samples_per_class` probes from each of `target_subjects` subjects,
/// all drawn with the seed.
inline std::vector<Index> draw_targets(const DatasetManifest& m, const DaConfig& da, std::uint64_t seed) {
    if (!m.pinned_targets.empty()) return m.pinned_targets;
    std::mt19937_64 rng(seed ^ 0x7461726765747344ULL);
    std::map<int, std::vector<Index>> by_subject;
    for (std::size_t i = 0; i < m.probe.size(); ++i) by_subject[m.probe[i].subject].push_back(static_cast<Index>(i));
    std::vector<Index> subjects;
    for (const auto& [s, idx] : by_subject) subjects.push_back(s);
    if (da.target_subjects && static_cast<std::size_t>(*da.target_subjects) < subjects.size()) {
        detail::seeded_shuffle(subjects, rng);
        subjects.resize(static_cast<std::size_t>(*da.target_subjects));
        std::sort(subjects.begin(), subjects.end());
    }
    std::vector<Index> out;
    for (Index s : subjects) {
        auto idx = by_subject[static_cast<int>(s)];
        detail::seeded_shuffle(idx, rng);
        const auto take = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(da.target_samples_per_class));
        out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write manifest " + path.string());
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) { return std::filesystem::relative(p, base).generic_string(); };
    out << "profile " << m.profile << "\n";
    for (const auto& [tag, ff] : m.feature_files) {
        out << "features " << tag << " gallery " << rel(ff.gallery) << "\n";
        out << "features " << tag << " probe " << rel(ff.probe) << "\n";
    }
    for (const auto& e : m.gallery)
        if (e.line > 0) out << "gallery " << rel(e.ref) << " " << e.subject << "\n";
    for (const auto& e : m.probe)
        if (e.line > 0) out << "probe " << rel(e.ref) << " " << e.subject << "\n";
    for (Index t : m.pinned_targets) {
        const auto& e = m.probe[static_cast<std::size_t>(t)];
        out << "target " << (e.line > 0 ? rel(e.ref) : e.ref) << " " << e.subject << "\n";
    }
    if (!out) throw InputError("failed writing manifest " + path.string());
}

}  // namespace mfkc
