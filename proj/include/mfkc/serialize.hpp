// JSON records for models and checkpoints. Doubles are written in shortest
// round-trip form, so a save/load cycle is bit-exact.

#pragma once

#include "mfkc/da.hpp"
#include "mfkc/embed.hpp"
#include "mfkc/kernels.hpp"
#include "mfkc/smlmfkc.hpp"
#include "mfkc/svm.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace mfkc {

using Json = nlohmann::json;

inline constexpr const char* kCheckpointSchema = "mfkc.checkpoint/1";

inline Json to_json(const Matrix& m) {
    Json data = Json::array();
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const Json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
        throw InputError("checkpoint: matrix record has inconsistent size");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
    return m;
}

inline Json to_json(const Vector& v) {
    Json data = Json::array();
    for (Index i = 0; i < v.size(); ++i) data.push_back(v(i));
    return data;
}

inline Vector vector_from_json(const Json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

inline Json to_json(const KernelSpec& s) {
    Json j{{"kind", std::string(to_string(s.kind))}, {"c", s.c}, {"alpha", s.alpha}, {"degree", s.degree}};
    j["sigma"] = s.sigma ? Json(*s.sigma) : Json(nullptr);
    j["rbf_squared_norm"] = s.rbf_squared_norm;
    return j;
}

/// Missing keys take the KernelSpec defaults.
inline KernelSpec kernel_spec_from_json(const Json& j) {
    KernelSpec s;
    s.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    s.c = j.value("c", s.c);
    s.alpha = j.value("alpha", s.alpha);
    s.degree = j.value("degree", s.degree);
    if (j.contains("sigma") && !j.at("sigma").is_null()) s.sigma = j.at("sigma").get<double>();
    s.rbf_squared_norm = j.value("rbf_squared_norm", s.rbf_squared_norm);
    if (s.kind == KernelKind::polynomial && s.degree < 1) throw ParameterError("polynomial degree must be >= 1");
    if (s.sigma && !(*s.sigma > 0.0)) throw ParameterError("kernel sigma must be positive");
    return s;
}

inline Json to_json(const BinarySvmModel& m) {
    Json support = Json::array();
    for (Index i : m.support) support.push_back(i);
    return Json{{"alpha", to_json(m.alpha)},   {"bias", m.bias},         {"support", std::move(support)},
                {"labels", to_json(m.labels_pm1)}, {"C", m.C},           {"upper", to_json(m.upper)},
                {"iterations", m.iterations}};
}

inline BinarySvmModel binary_svm_from_json(const Json& j) {
    BinarySvmModel m;
    m.alpha = vector_from_json(j.at("alpha"));
    m.bias = j.at("bias").get<double>();
    for (const auto& s : j.at("support")) m.support.push_back(s.get<Index>());
    m.labels_pm1 = vector_from_json(j.at("labels"));
    m.C = j.at("C").get<double>();
    m.upper = vector_from_json(j.at("upper"));
    m.iterations = j.value("iterations", 0L);
    if (m.labels_pm1.size() != m.alpha.size() || m.upper.size() != m.alpha.size())
        throw InputError("checkpoint: inconsistent SVM record");
    return m;
}

inline Json to_json(const MulticlassSvmModel& m) {
    Json machines = Json::array();
    for (const auto& b : m.machines) machines.push_back(to_json(b));
    return Json{{"class_ids", m.class_ids}, {"machines", std::move(machines)}};
}

inline MulticlassSvmModel multiclass_svm_from_json(const Json& j) {
    MulticlassSvmModel m;
    m.class_ids = j.at("class_ids").get<std::vector<int>>();
    for (const auto& b : j.at("machines")) m.machines.push_back(binary_svm_from_json(b));
    if (m.machines.size() != m.class_ids.size()) throw InputError("checkpoint: one machine per class expected");
    return m;
}

inline Json to_json(const MfkcModel& m) {
    Json pairs = Json::array();
    for (const auto& [f, k] : m.selected_pairs) pairs.push_back(Json{{"feature", f}, {"kernel", k}});
    Json svms = Json::array();
    for (const auto& s : m.per_kernel_svm) svms.push_back(to_json(s));
    return Json{{"beta", to_json(m.beta)},
                {"selected_pairs", std::move(pairs)},
                {"per_kernel_svm", std::move(svms)},
                {"objective_trace", m.objective_trace}};
}

inline MfkcModel mfkc_model_from_json(const Json& j) {
    MfkcModel m;
    m.beta = matrix_from_json(j.at("beta"));
    for (const auto& p : j.at("selected_pairs")) m.selected_pairs.emplace_back(p.at("feature").get<int>(), p.at("kernel").get<int>());
    for (const auto& s : j.at("per_kernel_svm")) m.per_kernel_svm.push_back(multiclass_svm_from_json(s));
    m.objective_trace = j.at("objective_trace").get<std::vector<std::vector<double>>>();
    return m;
}

inline Json to_json(const EmpiricalKernelMap& m) {
    return Json{{"eigvals", to_json(m.eigvals)}, {"eigvecs", to_json(m.eigvecs)}, {"eig_tol", m.eig_tol}};
}

inline EmpiricalKernelMap kernel_map_from_json(const Json& j) {
    EmpiricalKernelMap m;
    m.eigvals = vector_from_json(j.at("eigvals"));
    m.eigvecs = matrix_from_json(j.at("eigvecs"));
    m.eig_tol = j.at("eig_tol").get<double>();
    return m;
}

inline Json to_json(const DaTransform& t) {
    return Json{{"W", to_json(t.W)},
                {"theta", to_json(t.theta)},
                {"bias", to_json(t.bias)},
                {"class_ids", t.class_ids},
                {"objective_trace", t.objective_trace},
                {"warnings", t.warnings}};
}

inline DaTransform da_transform_from_json(const Json& j) {
    DaTransform t;
    t.W = matrix_from_json(j.at("W"));
    t.theta = matrix_from_json(j.at("theta"));
    t.bias = vector_from_json(j.at("bias"));
    t.class_ids = j.at("class_ids").get<std::vector<int>>();
    t.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    t.warnings = j.value("warnings", std::vector<std::string>{});
    return t;
}

/// Writes {"schema", "stage", "payload"}.
inline void write_checkpoint(const std::filesystem::path& path, const std::string& stage, Json payload) {
    const Json doc{{"schema", kCheckpointSchema}, {"stage", stage}, {"payload", std::move(payload)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out << doc.dump(1) << "\n";
    if (!out) throw InputError("failed writing checkpoint " + path.string());
}

inline Json read_checkpoint(const std::filesystem::path& path, const std::string& stage) {
    std::ifstream in(path);
    if (!in) throw InputError("missing checkpoint " + path.string() + " (run stage '" + stage + "' first)");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::exception& e) {
        throw InputError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (doc.value("schema", std::string()) != kCheckpointSchema)
        throw InputError("checkpoint " + path.string() + " has an unsupported schema");
    if (doc.value("stage", std::string()) != stage)
        throw InputError("checkpoint " + path.string() + " belongs to a different stage");
    return doc.at("payload");
}

}  // namespace mfkc
