#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ergolq/costate.hpp"
#include "ergolq/errors.hpp"
#include "ergolq/model.hpp"
#include "ergolq/riccati.hpp"

// JSON schemas (documented in the README):
//   problem spec      {"dims":{"n","k","d"}, "beta", "model":{...}}
//     constant model  {"kind":"constant","A","B","C","D","S","f"}
//     factor model    {"kind":"factor", same keys with entry objects,
//                      "factor":{"kappa","level","sigma","drive_index"}}
//   matrices are row-major nested arrays; a factor entry is
//   {"base","amp","rate","center"} (a bare number abbreviates a constant
//   entry). Round-trips are lossless for 64-bit floats.

namespace ergolq {

using json = nlohmann::json;

inline json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw StructuralError("JSON: " + name + " must be a nested array");
    }
    const auto rows = j.size();
    const auto cols = j[0].size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols) {
            throw StructuralError("JSON: " + name + " has ragged rows");
        }
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& name) {
    if (!j.is_array()) throw StructuralError("JSON: " + name + " must be an array");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

inline json to_json(const BoundedEntry& e) {
    return json{{"base", e.base}, {"amp", e.amp}, {"rate", e.rate}, {"center", e.center}};
}

inline BoundedEntry entry_from_json(const json& j, const std::string& name) {
    BoundedEntry e;
    if (j.is_number()) {
        e.base = j.get<double>();
        e.amp = 0.0;
        return e;
    }
    if (!j.is_object()) {
        throw StructuralError("JSON: " + name + " entry must be a number or an object");
    }
    e.base = j.at("base").get<double>();
    e.amp = j.value("amp", 0.0);
    e.rate = j.value("rate", 1.0);
    e.center = j.value("center", 0.0);
    return e;
}

inline json to_json(const EntryMatrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows; ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols; ++j) row.push_back(to_json(m.at(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline EntryMatrix entry_matrix_from_json(const json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw StructuralError("JSON: " + name + " must be a nested array");
    }
    EntryMatrix m;
    m.rows = static_cast<int>(j.size());
    m.cols = static_cast<int>(j[0].size());
    m.entries.resize(static_cast<std::size_t>(m.rows) * m.cols);
    for (int i = 0; i < m.rows; ++i) {
        if (static_cast<int>(j[i].size()) != m.cols) {
            throw StructuralError("JSON: " + name + " has ragged rows");
        }
        for (int c = 0; c < m.cols; ++c) {
            m.at(i, c) = entry_from_json(j[i][c], name);
        }
    }
    return m;
}

inline json to_json(const FactorDynamics& fd) {
    return json{{"kappa", fd.kappa},
                {"level", fd.level},
                {"sigma", fd.sigma},
                {"drive_index", fd.drive_index}};
}

inline FactorDynamics factor_from_json(const json& j) {
    FactorDynamics fd;
    fd.kappa = j.at("kappa").get<double>();
    fd.level = j.at("level").get<double>();
    fd.sigma = j.at("sigma").get<double>();
    fd.drive_index = j.at("drive_index").get<int>();
    return fd;
}

inline json to_json(const ProblemSpec& spec) {
    json model;
    if (const auto* cc = std::get_if<ConstantCoeffs>(&spec.model)) {
        model["kind"] = "constant";
        model["A"] = to_json(cc->A);
        model["B"] = to_json(cc->B);
        json cs = json::array(), ds = json::array();
        for (const auto& c : cc->C) cs.push_back(to_json(c));
        for (const auto& d : cc->D) ds.push_back(to_json(d));
        model["C"] = std::move(cs);
        model["D"] = std::move(ds);
        model["S"] = to_json(cc->S);
        model["f"] = to_json(cc->f);
    } else {
        const auto& fc = std::get<FactorCoeffs>(spec.model);
        model["kind"] = "factor";
        model["A"] = to_json(fc.A);
        model["B"] = to_json(fc.B);
        json cs = json::array(), ds = json::array();
        for (const auto& c : fc.C) cs.push_back(to_json(c));
        for (const auto& d : fc.D) ds.push_back(to_json(d));
        model["C"] = std::move(cs);
        model["D"] = std::move(ds);
        model["S"] = to_json(fc.S);
        model["f"] = to_json(fc.f);
        model["factor"] = to_json(fc.factor);
    }
    return json{{"dims",
                 {{"n", spec.dims.n}, {"k", spec.dims.k}, {"d", spec.dims.d}}},
                {"beta", spec.beta},
                {"model", std::move(model)}};
}

inline ProblemSpec spec_from_json(const json& j) {
    ProblemSpec spec;
    const auto& dims = j.at("dims");
    spec.dims = {dims.at("n").get<int>(), dims.at("k").get<int>(), dims.at("d").get<int>()};
    spec.beta = j.at("beta").get<double>();
    const auto& model = j.at("model");
    const std::string kind = model.at("kind").get<std::string>();
    if (kind == "constant") {
        ConstantCoeffs cc;
        cc.A = matrix_from_json(model.at("A"), "A");
        cc.B = matrix_from_json(model.at("B"), "B");
        for (const auto& c : model.at("C")) cc.C.push_back(matrix_from_json(c, "C"));
        for (const auto& d : model.at("D")) cc.D.push_back(matrix_from_json(d, "D"));
        cc.S = matrix_from_json(model.at("S"), "S");
        cc.f = vector_from_json(model.at("f"), "f");
        spec.model = std::move(cc);
    } else if (kind == "factor") {
        FactorCoeffs fc;
        fc.A = entry_matrix_from_json(model.at("A"), "A");
        fc.B = entry_matrix_from_json(model.at("B"), "B");
        for (const auto& c : model.at("C")) fc.C.push_back(entry_matrix_from_json(c, "C"));
        for (const auto& d : model.at("D")) fc.D.push_back(entry_matrix_from_json(d, "D"));
        fc.S = entry_matrix_from_json(model.at("S"), "S");
        const auto& f = model.at("f");
        // f accepted as a flat array or an n x 1 nested array
        if (f.is_array() && !f.empty() && !f[0].is_array()) {
            fc.f.rows = static_cast<int>(f.size());
            fc.f.cols = 1;
            fc.f.entries.resize(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) {
                fc.f.entries[i] = entry_from_json(f[i], "f");
            }
        } else {
            fc.f = entry_matrix_from_json(f, "f");
        }
        fc.factor = factor_from_json(model.at("factor"));
        spec.model = std::move(fc);
    } else {
        throw StructuralError("JSON: model kind must be \"constant\" or \"factor\", got \"" +
                              kind + "\"");
    }
    return spec;
}

inline json to_json(const FactorGrid& g) {
    return json{{"y_lo", g.y_lo}, {"y_hi", g.y_hi}, {"m", g.m}};
}

inline FactorGrid grid_from_json(const json& j) {
    FactorGrid g{j.at("y_lo").get<double>(), j.at("y_hi").get<double>(),
                 j.at("m").get<int>()};
    g.check();
    return g;
}

inline json to_json(const RiccatiSolution& sol) {
    json out;
    if (sol.rep == Rep::kConstant) {
        out["kind"] = "constant";
        out["P"] = to_json(sol.P[0]);
    } else {
        out["kind"] = "field";
        out["grid"] = to_json(*sol.grid);
        json nodes = json::array();
        for (const auto& p : sol.P) nodes.push_back(to_json(p));
        out["P"] = std::move(nodes);
    }
    return out;
}

inline RiccatiSolution riccati_from_json(const json& j, const ProblemSpec& spec) {
    RiccatiSolution sol;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        sol.rep = Rep::kConstant;
        sol.P.push_back(matrix_from_json(j.at("P"), "P"));
    } else if (kind == "field") {
        sol.rep = Rep::kField;
        sol.grid = grid_from_json(j.at("grid"));
        if (!spec.factor()) {
            throw StructuralError("JSON: field Riccati artifact needs a factor model spec");
        }
        sol.factor = *spec.factor();
        for (const auto& p : j.at("P")) sol.P.push_back(matrix_from_json(p, "P"));
        if (static_cast<int>(sol.P.size()) != sol.grid->m) {
            throw StructuralError("JSON: Riccati field node count != grid nodes");
        }
    } else {
        throw StructuralError("JSON: Riccati kind must be \"constant\" or \"field\"");
    }
    return sol;
}

inline json to_json(const CostateSolution& cs) {
    json out;
    if (cs.rep == Rep::kConstant) {
        out["kind"] = "constant";
        out["r"] = to_json(cs.r[0]);
    } else {
        out["kind"] = "field";
        out["grid"] = to_json(*cs.grid);
        json nodes = json::array();
        for (const auto& r : cs.r) nodes.push_back(to_json(r));
        out["rho"] = std::move(nodes);
    }
    return out;
}

inline CostateSolution costate_from_json(const json& j, const ProblemSpec& spec) {
    CostateSolution cs;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        cs.rep = Rep::kConstant;
        cs.r.push_back(vector_from_json(j.at("r"), "r"));
    } else if (kind == "field") {
        cs.rep = Rep::kField;
        cs.grid = grid_from_json(j.at("grid"));
        if (!spec.factor()) {
            throw StructuralError("JSON: field costate artifact needs a factor model spec");
        }
        cs.factor = *spec.factor();
        for (const auto& r : j.at("rho")) cs.r.push_back(vector_from_json(r, "rho"));
    } else {
        throw StructuralError("JSON: costate kind must be \"constant\" or \"field\"");
    }
    return cs;
}

// FNV-1a over the raw bytes; provenance stamp for emitted artifacts.
inline std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a64:") + buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StructuralError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ProblemSpec load_spec(const std::string& path, std::string* hash = nullptr) {
    const std::string bytes = read_file(path);
    if (hash) *hash = content_hash(bytes);
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::exception& e) {
        throw StructuralError("spec JSON parse error in " + path + ": " + e.what());
    }
    try {
        return spec_from_json(j);
    } catch (const json::exception& e) {
        throw StructuralError("spec JSON schema error in " + path + ": " + e.what());
    }
}

} // namespace ergolq
